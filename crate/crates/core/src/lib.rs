//! Desk-scale numerics for `*`-linear maps from a finite-dimensional
//! C*-algebra into functions on a finite grid.
//!
//! Two constructions are made executable and checkable:
//!
//! * pointwise Jordan decomposition `φ = φ₊ − φ₋` of a map field with
//!   additive norms, together with continuity diagnostics under grid
//!   refinement ([`jordan`]);
//! * extension of a seminorm-dominated linear map defined on a subspace to
//!   the whole space, one direction at a time, with envelopes, a TV-minimal
//!   continuous selection and a geometric `δ/2^k` budget ([`extension`]).
//!
//! Supporting modules model the algebra ([`algebra`]), the base space
//! ([`space`]), map fields ([`field`]), `C_B`-valued seminorms
//! ([`seminorm`]) and the LP envelopes over sampled state spaces
//! ([`envelope`]).

pub mod algebra;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod extension;
pub mod field;
pub mod generate;
pub mod jordan;
pub mod oracle;
pub mod seminorm;
pub mod space;
pub mod subspace;
pub mod tolerance;

mod lp;
mod program;

pub use algebra::{AlgebraDescriptor, Element, FunctionalRep};
pub use error::{Error, Result};
pub use field::MapField;
pub use space::{Grid, GridKind, ScalarField};
pub use tolerance::Tolerances;
