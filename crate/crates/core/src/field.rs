//! Map fields `φ: A^sa → C(X)^sa` stored as one representing functional per node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraDescriptor, BlockMatricesJson, Element, FunctionalRep, C64};
use crate::error::{Error, Result};
use crate::space::{modulus_of_continuity, Grid, ScalarField};
use crate::tolerance::TOL_HERM;

#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    grid: Grid,
    algebra: AlgebraDescriptor,
    rho: Vec<FunctionalRep>,
}

/// Unvalidated wire form of a `MapField`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFieldJson {
    pub grid: Grid,
    pub algebra: AlgebraDescriptor,
    pub rho: Vec<BlockMatricesJson>,
}

impl MapFieldJson {
    pub fn build(&self, tol_herm: f64) -> Result<MapField> {
        let rho = self
            .rho
            .iter()
            .map(|r| FunctionalRep::from_json_with_tolerance(&self.algebra, r, tol_herm))
            .collect::<Result<Vec<_>>>()?;
        MapField::new(self.grid.clone(), self.algebra.clone(), rho)
    }
}

impl From<&MapField> for MapFieldJson {
    fn from(f: &MapField) -> Self {
        MapFieldJson {
            grid: f.grid.clone(),
            algebra: f.algebra.clone(),
            rho: f.rho.iter().map(FunctionalRep::to_json).collect(),
        }
    }
}

impl Serialize for MapField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MapFieldJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MapFieldJson::deserialize(d)?
            .build(TOL_HERM)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbsoluteContinuityReport {
    pub max_jump: f64,
    pub lipschitz: f64,
    /// Half the spread of `‖φ‖` over the infinity nodes (distance to the best common limit).
    pub infinity_spread: f64,
    pub passes: bool,
}

impl MapField {
    pub fn new(grid: Grid, algebra: AlgebraDescriptor, rho: Vec<FunctionalRep>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} functionals for a grid of {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if let Some(t) = rho.iter().position(|r| r.shape() != algebra.blocks()) {
            return Err(Error::Shape(format!("functional at node {t} does not match the algebra")));
        }
        Ok(MapField { grid, algebra, rho })
    }

    /// Build nodewise from unit coordinates in `[0, 1]`.
    pub fn from_fn(
        grid: Grid,
        algebra: AlgebraDescriptor,
        f: impl Fn(usize, f64) -> Result<FunctionalRep>,
    ) -> Result<Self> {
        let coords = grid.unit_coordinates();
        let rho = coords.iter().enumerate().map(|(t, &s)| f(t, s)).collect::<Result<Vec<_>>>()?;
        MapField::new(grid, algebra, rho)
    }

    pub fn zero(grid: Grid, algebra: AlgebraDescriptor) -> Self {
        let rho = vec![FunctionalRep::zero(&algebra); grid.len()];
        MapField { grid, algebra, rho }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn algebra(&self) -> &AlgebraDescriptor {
        &self.algebra
    }

    pub fn rho(&self) -> &[FunctionalRep] {
        &self.rho
    }

    pub fn at(&self, t: usize) -> &FunctionalRep {
        &self.rho[t]
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn evaluate(&self, x: &Element) -> Result<ScalarField> {
        let values = self
            .rho
            .par_iter()
            .map(|r| r.pair(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScalarField(values))
    }

    pub fn pointwise_norm(&self) -> Result<ScalarField> {
        let values = self
            .rho
            .par_iter()
            .map(|r| r.norm())
            .collect::<Result<Vec<_>>>()?;
        Ok(ScalarField(values))
    }

    /// Norm test: raw max jump of `‖φ‖` at most `epsilon`, infinity nodes within `cutoff` of a common limit.
    pub fn is_absolutely_continuous(&self, epsilon: f64, cutoff: f64) -> Result<AbsoluteContinuityReport> {
        let norm = self.pointwise_norm()?;
        let modulus = modulus_of_continuity(norm.values(), &self.grid);
        let inf: Vec<f64> = self.grid.infinity().iter().map(|&i| norm.0[i]).collect();
        let infinity_spread = if inf.is_empty() {
            0.0
        } else {
            let hi = inf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = inf.iter().copied().fold(f64::INFINITY, f64::min);
            (hi - lo) / 2.0
        };
        Ok(AbsoluteContinuityReport {
            max_jump: modulus.max_jump,
            lipschitz: modulus.lipschitz,
            infinity_spread,
            passes: modulus.max_jump <= epsilon && infinity_spread <= cutoff,
        })
    }

    /// `ψ_h(x) = φ((hx + xh)/2)`, i.e. `ρ ↦ (ρh + hρ)/2` blockwise; `0 ≤ h ≤ 1` required.
    pub fn compress(&self, h: &Element) -> Result<MapField> {
        let (lo, hi) = h.spectral_bounds()?;
        if lo < -TOL_HERM {
            return Err(Error::SpectrumOutOfRange { eigenvalue: lo });
        }
        if hi > 1.0 + TOL_HERM {
            return Err(Error::SpectrumOutOfRange { eigenvalue: hi });
        }
        if h.blocks().iter().map(|b| b.nrows()).collect::<Vec<_>>() != self.algebra.blocks() {
            return Err(Error::Shape("h lives in a different algebra".into()));
        }
        let half = C64::new(0.5, 0.0);
        let rho = self
            .rho
            .iter()
            .map(|r| {
                let blocks = r
                    .blocks()
                    .iter()
                    .zip(h.blocks())
                    .map(|(rb, hb)| (rb * hb + hb * rb) * half)
                    .collect();
                FunctionalRep::new(&self.algebra, blocks)
            })
            .collect::<Result<Vec<_>>>()?;
        MapField::new(self.grid.clone(), self.algebra.clone(), rho)
    }

    pub fn neg(&self) -> MapField {
        MapField {
            grid: self.grid.clone(),
            algebra: self.algebra.clone(),
            rho: self.rho.iter().map(|r| r.scale(-1.0)).collect(),
        }
    }

    /// Refined grid with linearly interpolated functionals.
    pub fn refine(&self) -> MapField {
        let r = self.grid.refine();
        let rho = r
            .origin
            .iter()
            .map(|o| match *o {
                crate::space::Origin::Node(i) => self.rho[i].clone(),
                crate::space::Origin::Midpoint(i, j) => self.rho[i]
                    .combine(0.5, &self.rho[j], 0.5)
                    .expect("same algebra"),
            })
            .collect();
        MapField {
            grid: r.grid,
            algebra: self.algebra.clone(),
            rho,
        }
    }

    pub fn map_nodes(&self, f: impl Fn(&FunctionalRep) -> FunctionalRep) -> MapField {
        MapField {
            grid: self.grid.clone(),
            algebra: self.algebra.clone(),
            rho: self.rho.iter().map(f).collect(),
        }
    }
}
