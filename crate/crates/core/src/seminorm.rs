//! `C_B`-valued seminorms on `ℝⁿ`: one convex gauge per grid node.
//!
//! Every [`SeminormSpec`] compiles, node by node, into a [`NodeForm`]
//!
//! ```text
//! m(z)(t) = min_v Σ_i s_i ‖A_i z + V_i v‖_{p_i}
//! ```
//!
//! over auxiliary variables `v` (none for plain norms and closed-form
//! 2-norm distances). Values come from direct evaluation when there are no
//! auxiliaries and from an exact LP/SOCP solve otherwise; kernels are read
//! off the stacked atom matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{Atom, Program};
use crate::space::Grid;
use crate::subspace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "linf")]
    LInf,
}

impl PNorm {
    pub fn apply(&self, v: &DVector<f64>) -> f64 {
        self.apply_slice(v.as_slice())
    }

    pub fn apply_slice(&self, v: &[f64]) -> f64 {
        match self {
            PNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            PNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            PNorm::LInf => v.iter().fold(0.0f64, |acc, x| acc.max(x.abs())),
        }
    }
}

/// `‖z‖ = ‖diag(w) z‖_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseNorm {
    pub p: PNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl BaseNorm {
    pub fn new(p: PNorm) -> Self {
        BaseNorm { p, weights: None }
    }

    pub fn l1() -> Self {
        BaseNorm::new(PNorm::L1)
    }

    pub fn l2() -> Self {
        BaseNorm::new(PNorm::L2)
    }

    pub fn linf() -> Self {
        BaseNorm::new(PNorm::LInf)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.weights {
            None => self.p.apply_slice(z),
            Some(w) => {
                let scaled: Vec<f64> = z.iter().zip(w).map(|(a, b)| a * b).collect();
                self.p.apply_slice(&scaled)
            }
        }
    }

    pub fn weight_matrix(&self, n: usize) -> DMatrix<f64> {
        match &self.weights {
            None => DMatrix::identity(n, n),
            Some(w) => DMatrix::from_diagonal(&DVector::from_column_slice(w)),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != dim || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Seminorm(format!(
                    "norm weights must be {dim} positive numbers"
                )));
            }
        }
        Ok(())
    }
}

/// Per-node nonnegative scalars; a single entry applies to every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeScalars(pub Vec<f64>);

impl NodeScalars {
    pub fn uniform(v: f64) -> Self {
        NodeScalars(vec![v])
    }

    pub fn at(&self, t: usize) -> f64 {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[t]
        }
    }
}

/// Per-node subspaces as lists of basis vectors; a single entry applies
/// to every node and an empty list means the zero subspace everywhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSubspaces(pub Vec<Vec<Vec<f64>>>);

impl NodeSubspaces {
    pub fn uniform(basis: Vec<Vec<f64>>) -> Self {
        NodeSubspaces(vec![basis])
    }

    pub fn at(&self, t: usize) -> &[Vec<f64>] {
        match self.0.len() {
            0 => &[],
            1 => &self.0[0],
            _ => &self.0[t],
        }
    }

    pub fn matrix(&self, t: usize, dim: usize) -> DMatrix<f64> {
        subspace::from_vectors(dim, self.at(t))
    }

    fn is_uniform(&self) -> bool {
        self.0.len() <= 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeminormSpec {
    /// `c(t)·‖z‖`.
    ScaledNorm { norm: BaseNorm, scale: NodeScalars },
    /// `c(t)·max_i |⟨r_i, z⟩|`.
    MaxAbsLinear { rows: Vec<Vec<f64>>, scale: NodeScalars },
    /// `base(z)(t) + δ·dist(z, S_t)` with the distance in `norm`.
    QuotientAug {
        base: Box<SeminormSpec>,
        norm: BaseNorm,
        delta: f64,
        subspace: NodeSubspaces,
    },
    /// `inf_{y ∈ F_t} first(y)(t) + second(z − y)(t)`.
    InfConv {
        first: Box<SeminormSpec>,
        second: Box<SeminormSpec>,
        subspace: NodeSubspaces,
    },
    /// Nodewise sum.
    Sum { parts: Vec<SeminormSpec> },
    /// `parts[choice(t)]` at node `t`.
    Piecewise {
        choice: Vec<usize>,
        parts: Vec<SeminormSpec>,
    },
}

impl SeminormSpec {
    pub fn scaled_norm(norm: BaseNorm, scale: f64) -> Self {
        SeminormSpec::ScaledNorm {
            norm,
            scale: NodeScalars::uniform(scale),
        }
    }

    pub fn zero() -> Self {
        SeminormSpec::scaled_norm(BaseNorm::l2(), 0.0)
    }

    pub fn validate(&self, dim: usize, nodes: usize) -> Result<()> {
        let scalars = |s: &NodeScalars| -> Result<()> {
            if !(s.0.len() == 1 || s.0.len() == nodes) {
                return Err(Error::Seminorm(format!(
                    "expected 1 or {nodes} node scalars, got {}",
                    s.0.len()
                )));
            }
            if s.0.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
                return Err(Error::Seminorm("scales must be finite and nonnegative".into()));
            }
            Ok(())
        };
        let subspaces = |s: &NodeSubspaces| -> Result<()> {
            if s.0.len() > 1 && s.0.len() != nodes {
                return Err(Error::Seminorm(format!(
                    "expected 0, 1 or {nodes} node subspaces, got {}",
                    s.0.len()
                )));
            }
            for basis in &s.0 {
                if basis.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Seminorm(format!("subspace vectors must have length {dim}")));
                }
            }
            Ok(())
        };
        match self {
            SeminormSpec::ScaledNorm { norm, scale } => {
                norm.validate(dim)?;
                scalars(scale)
            }
            SeminormSpec::MaxAbsLinear { rows, scale } => {
                if rows.iter().any(|r| r.len() != dim || r.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Seminorm(format!("linear rows must have length {dim}")));
                }
                scalars(scale)
            }
            SeminormSpec::QuotientAug {
                base,
                norm,
                delta,
                subspace,
            } => {
                if !(*delta >= 0.0 && delta.is_finite()) {
                    return Err(Error::Seminorm(format!("delta must be >= 0, got {delta}")));
                }
                norm.validate(dim)?;
                subspaces(subspace)?;
                base.validate(dim, nodes)
            }
            SeminormSpec::InfConv {
                first,
                second,
                subspace,
            } => {
                subspaces(subspace)?;
                first.validate(dim, nodes)?;
                second.validate(dim, nodes)
            }
            SeminormSpec::Sum { parts } => parts.iter().try_for_each(|p| p.validate(dim, nodes)),
            SeminormSpec::Piecewise { choice, parts } => {
                if parts.is_empty() {
                    return Err(Error::Seminorm("piecewise seminorm without parts".into()));
                }
                if !(choice.len() == 1 || choice.len() == nodes) || choice.iter().any(|&c| c >= parts.len()) {
                    return Err(Error::Seminorm("piecewise choice out of range".into()));
                }
                parts.iter().try_for_each(|p| p.validate(dim, nodes))
            }
        }
    }

    fn is_uniform(&self) -> bool {
        match self {
            SeminormSpec::ScaledNorm { scale, .. } | SeminormSpec::MaxAbsLinear { scale, .. } => scale.0.len() == 1,
            SeminormSpec::QuotientAug { base, subspace, .. } => subspace.is_uniform() && base.is_uniform(),
            SeminormSpec::InfConv {
                first,
                second,
                subspace,
            } => subspace.is_uniform() && first.is_uniform() && second.is_uniform(),
            SeminormSpec::Sum { parts } => parts.iter().all(|p| p.is_uniform()),
            SeminormSpec::Piecewise { choice, parts } => choice.len() == 1 && parts.iter().all(|p| p.is_uniform()),
        }
    }

    fn form(&self, dim: usize, t: usize) -> NodeForm {
        match self {
            SeminormSpec::ScaledNorm { norm, scale } => NodeForm {
                dim,
                naux: 0,
                atoms: vec![FormAtom {
                    scale: scale.at(t),
                    p: norm.p,
                    mz: norm.weight_matrix(dim),
                    mv: DMatrix::zeros(dim, 0),
                }],
            },
            SeminormSpec::MaxAbsLinear { rows, scale } => NodeForm {
                dim,
                naux: 0,
                atoms: vec![FormAtom {
                    scale: scale.at(t),
                    p: PNorm::LInf,
                    mz: DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]),
                    mv: DMatrix::zeros(rows.len(), 0),
                }],
            },
            SeminormSpec::QuotientAug {
                base,
                norm,
                delta,
                subspace,
            } => {
                let base = base.form(dim, t);
                if *delta == 0.0 {
                    return base;
                }
                let dist = distance_form(norm, &subspace.matrix(t, dim), *delta);
                NodeForm::sum(&[base, dist])
            }
            SeminormSpec::InfConv {
                first,
                second,
                subspace,
            } => NodeForm::inf_conv(
                &first.form(dim, t),
                &second.form(dim, t),
                &subspace.matrix(t, dim),
            ),
            SeminormSpec::Sum { parts } => {
                let forms: Vec<NodeForm> = parts.iter().map(|p| p.form(dim, t)).collect();
                NodeForm::sum(&forms)
            }
            SeminormSpec::Piecewise { choice, parts } => {
                let c = if choice.len() == 1 { choice[0] } else { choice[t] };
                parts[c].form(dim, t)
            }
        }
    }

    /// Compile for every node of a grid with `nodes` nodes.
    pub fn compile(&self, dim: usize, nodes: usize) -> Result<CompiledSeminorm> {
        self.validate(dim, nodes)?;
        let forms = if self.is_uniform() {
            vec![self.form(dim, 0); nodes]
        } else {
            (0..nodes).into_par_iter().map(|t| self.form(dim, t)).collect()
        };
        Ok(CompiledSeminorm { dim, forms })
    }
}

/// `δ·dist(z, span S)` in the base norm.
fn distance_form(norm: &BaseNorm, s: &DMatrix<f64>, delta: f64) -> NodeForm {
    let n = s.nrows();
    let w = norm.weight_matrix(n);
    let ws = &w * s;
    match norm.p {
        PNorm::L2 => {
            let q = subspace::orthonormalize(&ws);
            let proj = DMatrix::<f64>::identity(n, n) - subspace::projector(&q);
            NodeForm {
                dim: n,
                naux: 0,
                atoms: vec![FormAtom {
                    scale: delta,
                    p: PNorm::L2,
                    mz: proj * w,
                    mv: DMatrix::zeros(n, 0),
                }],
            }
        }
        p => {
            let q = subspace::orthonormalize(s);
            let ws = &w * &q;
            NodeForm {
                dim: n,
                naux: q.ncols(),
                atoms: vec![FormAtom {
                    scale: delta,
                    p,
                    mz: w,
                    mv: ws,
                }],
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FormAtom {
    pub scale: f64,
    pub p: PNorm,
    pub mz: DMatrix<f64>,
    pub mv: DMatrix<f64>,
}

/// `min_v Σ s_i ‖A_i z + V_i v‖_{p_i}` at one node.
#[derive(Clone, Debug)]
pub struct NodeForm {
    dim: usize,
    naux: usize,
    atoms: Vec<FormAtom>,
}

impl NodeForm {
    fn sum(parts: &[NodeForm]) -> NodeForm {
        let dim = parts[0].dim;
        let naux: usize = parts.iter().map(|p| p.naux).sum();
        let mut atoms = Vec::new();
        let mut offset = 0;
        for part in parts {
            for a in &part.atoms {
                let mut mv = DMatrix::zeros(a.mz.nrows(), naux);
                mv.view_mut((0, offset), (a.mv.nrows(), a.mv.ncols())).copy_from(&a.mv);
                atoms.push(FormAtom {
                    scale: a.scale,
                    p: a.p,
                    mz: a.mz.clone(),
                    mv,
                });
            }
            offset += part.naux;
        }
        NodeForm { dim, naux, atoms }
    }

    /// Auxiliaries are `[a (F coordinates), v₁, v₂]`; `first` sees `F a`, `second` sees `z − F a`.
    fn inf_conv(first: &NodeForm, second: &NodeForm, f: &DMatrix<f64>) -> NodeForm {
        let dim = first.dim;
        let q = subspace::orthonormalize(f);
        let k = q.ncols();
        let naux = k + first.naux + second.naux;
        let mut atoms = Vec::new();
        for a in &first.atoms {
            let r = a.mz.nrows();
            let mut mv = DMatrix::zeros(r, naux);
            mv.view_mut((0, 0), (r, k)).copy_from(&(&a.mz * &q));
            mv.view_mut((0, k), (r, first.naux)).copy_from(&a.mv);
            atoms.push(FormAtom {
                scale: a.scale,
                p: a.p,
                mz: DMatrix::zeros(r, dim),
                mv,
            });
        }
        for a in &second.atoms {
            let r = a.mz.nrows();
            let mut mv = DMatrix::zeros(r, naux);
            mv.view_mut((0, 0), (r, k)).copy_from(&(-(&a.mz * &q)));
            mv.view_mut((0, k + first.naux), (r, second.naux)).copy_from(&a.mv);
            atoms.push(FormAtom {
                scale: a.scale,
                p: a.p,
                mz: a.mz.clone(),
                mv,
            });
        }
        NodeForm { dim, naux, atoms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn naux(&self) -> usize {
        self.naux
    }

    /// Program in variables `[c, v]` for the input `z = B c + z₀`.
    pub(crate) fn program(&self, b: &DMatrix<f64>, z0: &DVector<f64>) -> Program {
        let k = b.ncols();
        let mut prog = Program::new(k + self.naux);
        for a in &self.atoms {
            if a.scale == 0.0 {
                continue;
            }
            let r = a.mz.nrows();
            let mut mat = DMatrix::zeros(r, k + self.naux);
            if k > 0 {
                mat.view_mut((0, 0), (r, k)).copy_from(&(&a.mz * b));
            }
            mat.view_mut((0, k), (r, self.naux)).copy_from(&a.mv);
            prog.atoms.push(Atom {
                scale: a.scale,
                p: a.p,
                mat,
                off: &a.mz * z0,
            });
        }
        prog
    }

    fn eval_direct(&self, z: &DVector<f64>) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.scale != 0.0)
            .map(|a| a.scale * a.p.apply(&(&a.mz * z)))
            .sum()
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector of length {} for a seminorm on R^{}",
                z.len(),
                self.dim
            )));
        }
        let z = DVector::from_column_slice(z);
        if self.naux == 0 {
            return Ok(self.eval_direct(&z));
        }
        let prog = self.program(&DMatrix::zeros(self.dim, 0), &z);
        Ok(prog.minimize()?.value.max(0.0))
    }

    /// Values at every column of `zs`; only for forms without auxiliaries.
    pub(crate) fn eval_batch(&self, zs: &DMatrix<f64>) -> Vec<f64> {
        debug_assert_eq!(self.naux, 0);
        let mut out = vec![0.0; zs.ncols()];
        for a in self.atoms.iter().filter(|a| a.scale != 0.0) {
            let img = &a.mz * zs;
            for (j, col) in img.column_iter().enumerate() {
                let v = match a.p {
                    PNorm::L1 => col.iter().map(|x| x.abs()).sum(),
                    PNorm::L2 => col.norm(),
                    PNorm::LInf => col.iter().fold(0.0f64, |acc, x| acc.max(x.abs())),
                };
                out[j] += a.scale * v;
            }
        }
        out
    }

    /// Auxiliary-free minorant: each atom minimized on its own, then
    /// `‖·‖₁ ≥ ‖·‖₂` and `‖·‖_∞ ≥ ‖·‖₂/√r`.
    pub(crate) fn lower_form(&self) -> NodeForm {
        if self.naux == 0 {
            return self.clone();
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                if a.mv.iter().all(|&x| x == 0.0) {
                    return FormAtom {
                        mv: DMatrix::zeros(a.mz.nrows(), 0),
                        ..a.clone()
                    };
                }
                let r = a.mz.nrows();
                let q = subspace::orthonormalize(&a.mv);
                let proj = DMatrix::<f64>::identity(r, r) - subspace::projector(&q);
                let kappa = match a.p {
                    PNorm::LInf => 1.0 / (r as f64).sqrt(),
                    _ => 1.0,
                };
                FormAtom {
                    scale: a.scale * kappa,
                    p: PNorm::L2,
                    mz: proj * &a.mz,
                    mv: DMatrix::zeros(r, 0),
                }
            })
            .collect();
        NodeForm {
            dim: self.dim,
            naux: 0,
            atoms,
        }
    }

    /// Orthonormal basis of `{z : m(z) = 0}`.
    pub fn kernel(&self) -> DMatrix<f64> {
        let active: Vec<&FormAtom> = self.atoms.iter().filter(|a| a.scale > 0.0).collect();
        let rows: usize = active.iter().map(|a| a.mz.nrows()).sum();
        let cols = self.dim + self.naux;
        let mut stacked = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for a in active {
            let h = a.mz.nrows();
            stacked.view_mut((r, 0), (h, self.dim)).copy_from(&a.mz);
            stacked.view_mut((r, self.dim), (h, self.naux)).copy_from(&a.mv);
            r += h;
        }
        let null = subspace::null_space(&stacked);
        subspace::orthonormalize(&null.rows(0, self.dim).into_owned())
    }
}

/// A seminorm compiled for every node of a grid.
#[derive(Clone, Debug)]
pub struct CompiledSeminorm {
    dim: usize,
    forms: Vec<NodeForm>,
}

impl CompiledSeminorm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.forms.len()
    }

    pub fn form(&self, t: usize) -> &NodeForm {
        &self.forms[t]
    }

    pub fn eval(&self, z: &[f64], t: usize) -> Result<f64> {
        self.forms[t].eval(z)
    }

    pub fn eval_all(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.forms.iter().all(|f| f.naux == 0) {
            self.forms.iter().map(|f| f.eval(z)).collect()
        } else {
            self.forms.par_iter().map(|f| f.eval(z)).collect()
        }
    }

    pub fn kernel(&self, t: usize) -> DMatrix<f64> {
        self.forms[t].kernel()
    }
}

/// `m(z)(t)` for a single node.
pub fn eval_seminorm(m: &SeminormSpec, z: &[f64], t: usize, nodes: usize) -> Result<f64> {
    m.validate(z.len(), nodes)?;
    if t >= nodes {
        return Err(Error::Shape(format!("node {t} out of range")));
    }
    m.form(z.len(), t).eval(z)
}

/// `m(z)(t)` for every node.
pub fn eval_all_nodes(m: &SeminormSpec, z: &[f64], nodes: usize) -> Result<Vec<f64>> {
    m.compile(z.len(), nodes)?.eval_all(z)
}

/// Ambient space `ℝⁿ = Y ⊕ Yᶜ` with a base norm and per-node nilspaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpaceModel {
    pub dim: usize,
    pub norm: BaseNorm,
    pub subspace: Vec<Vec<f64>>,
    pub complement: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_empty_subspaces")]
    pub nilspaces: NodeSubspaces,
}

fn is_empty_subspaces(s: &NodeSubspaces) -> bool {
    s.0.is_empty()
}

impl VectorSpaceModel {
    pub fn new(dim: usize, norm: BaseNorm, subspace: Vec<Vec<f64>>, complement: Vec<Vec<f64>>) -> Result<Self> {
        let model = VectorSpaceModel {
            dim,
            norm,
            subspace,
            complement,
            nilspaces: NodeSubspaces::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// `Y = span(e₁..e_k)`, `Yᶜ = span(e_{k+1}..e_n)`.
    pub fn coordinate(dim: usize, k: usize, norm: BaseNorm) -> Result<Self> {
        let e = |i: usize| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        VectorSpaceModel::new(dim, norm, (0..k).map(e).collect(), (k..dim).map(e).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Model("dimension must be >= 1".into()));
        }
        self.norm.validate(n).map_err(|e| Error::Model(e.to_string()))?;
        for v in self.subspace.iter().chain(&self.complement) {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Model(format!("basis vectors must have length {n}")));
            }
        }
        if self.subspace.len() + self.complement.len() != n
            || subspace::rank(&self.full_basis_unchecked()) != n
        {
            return Err(Error::Model(
                "subspace and complement bases must together form a basis of the space".into(),
            ));
        }
        for basis in &self.nilspaces.0 {
            if basis.iter().any(|v| v.len() != n) {
                return Err(Error::Model(format!("nilspace vectors must have length {n}")));
            }
        }
        Ok(())
    }

    fn full_basis_unchecked(&self) -> DMatrix<f64> {
        let all: Vec<Vec<f64>> = self.subspace.iter().chain(&self.complement).cloned().collect();
        subspace::from_vectors(self.dim, &all)
    }

    pub fn y_basis(&self) -> DMatrix<f64> {
        subspace::from_vectors(self.dim, &self.subspace)
    }

    pub fn yc_basis(&self) -> DMatrix<f64> {
        subspace::from_vectors(self.dim, &self.complement)
    }

    pub fn nilspace(&self, t: usize) -> DMatrix<f64> {
        self.nilspaces.matrix(t, self.dim)
    }

    /// Replace the nilspaces by the kernels of `m`.
    pub fn with_nilspaces_from(mut self, m: &CompiledSeminorm) -> Self {
        let kernels: Vec<Vec<Vec<f64>>> = (0..m.nodes())
            .map(|t| subspace::to_vectors(&m.kernel(t)))
            .collect();
        self.nilspaces = if kernels.windows(2).all(|w| w[0] == w[1]) && !kernels.is_empty() {
            NodeSubspaces(vec![kernels[0].clone()])
        } else {
            NodeSubspaces(kernels)
        };
        self
    }

    /// Every nilspace basis vector must satisfy `m(v)(t) ≤ tol`.
    pub fn check_nilspaces(&self, m: &CompiledSeminorm, tol: f64) -> Result<()> {
        for t in 0..m.nodes() {
            for v in self.nilspaces.at(t) {
                let value = m.eval(v, t)?;
                if value > tol * self.norm.eval(v).max(1.0) {
                    return Err(Error::Model(format!(
                        "nilspace vector at node {t} has seminorm {value:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Basis vectors of `span(Yᶜ ∪ N_t)` per node (shared when the nilspaces are).
    pub fn quotient_subspaces(&self) -> NodeSubspaces {
        span_with_nilspaces(&self.yc_basis(), &self.nilspaces, self.dim)
    }
}

/// `span(C ∪ N_t)` per node.
pub(crate) fn span_with_nilspaces(c: &DMatrix<f64>, nil: &NodeSubspaces, dim: usize) -> NodeSubspaces {
    let build = |t: usize| subspace::to_vectors(&subspace::sum(c, &nil.matrix(t, dim)));
    match nil.0.len() {
        0 | 1 => NodeSubspaces(vec![build(0)]),
        k => NodeSubspaces((0..k).map(build).collect()),
    }
}

/// `m_δ(z)(t) = m(z)(t) + δ·dist(z, span(Yᶜ ∪ N_t))`.
pub fn build_m_delta(m: &SeminormSpec, model: &VectorSpaceModel, delta: f64) -> Result<SeminormSpec> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Seminorm(format!("delta must be >= 0, got {delta}")));
    }
    Ok(SeminormSpec::QuotientAug {
        base: Box::new(m.clone()),
        norm: model.norm.clone(),
        delta,
        subspace: model.quotient_subspaces(),
    })
}

/// `(m̄_δ, m̃_δ)`:
/// `m̄_δ(x) = inf_{w ∈ Yᶜ+N_t} m(x+w) + δ‖x+w‖` and
/// `m̃_δ(x) = m(x) + inf_{w} m(w) + δ‖x+w‖`.
pub fn quotient_seminorms(
    m: &SeminormSpec,
    model: &VectorSpaceModel,
    delta: f64,
) -> Result<(SeminormSpec, SeminormSpec)> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Seminorm(format!("delta must be >= 0, got {delta}")));
    }
    let s = model.quotient_subspaces();
    let norm_term = SeminormSpec::scaled_norm(model.norm.clone(), delta);
    let bar = SeminormSpec::InfConv {
        first: Box::new(SeminormSpec::zero()),
        second: Box::new(SeminormSpec::Sum {
            parts: vec![m.clone(), norm_term.clone()],
        }),
        subspace: s.clone(),
    };
    let tilde = SeminormSpec::Sum {
        parts: vec![
            m.clone(),
            SeminormSpec::InfConv {
                first: Box::new(m.clone()),
                second: Box::new(norm_term),
                subspace: s,
            },
        ],
    };
    Ok((bar, tilde))
}

pub fn inf_convolve(m1: &SeminormSpec, m2: &SeminormSpec, f: NodeSubspaces) -> SeminormSpec {
    SeminormSpec::InfConv {
        first: Box::new(m1.clone()),
        second: Box::new(m2.clone()),
        subspace: f,
    }
}

/// Inductive balanced construction: `m_{δ,n} = m̄_δ` on `U_n`, `m̃_δ` elsewhere;
/// `m′₁ = m_{δ,1}`, `m′_{n+1} = inf_{y ∈ F_n} m′_n(y) + m_{δ,n+1}(x − y)`.
pub fn balanced_chain(
    m: &SeminormSpec,
    model: &VectorSpaceModel,
    delta: f64,
    chain: &[Vec<Vec<f64>>],
    sets: &[Vec<usize>],
    nodes: usize,
) -> Result<SeminormSpec> {
    if chain.is_empty() || chain.len() != sets.len() {
        return Err(Error::Seminorm("chain and node sets must be nonempty and of equal length".into()));
    }
    let y = model.y_basis();
    for f in chain {
        for v in f {
            if v.len() != model.dim || !subspace::contains(&y, &DVector::from_column_slice(v), 1e-9) {
                return Err(Error::Seminorm("chain subspaces must lie in Y".into()));
            }
        }
    }
    let (bar, tilde) = quotient_seminorms(m, model, delta)?;
    let level = |set: &[usize]| -> Result<SeminormSpec> {
        if set.iter().any(|&t| t >= nodes) {
            return Err(Error::Seminorm("node set references a missing node".into()));
        }
        let choice = (0..nodes).map(|t| if set.contains(&t) { 0 } else { 1 }).collect();
        Ok(SeminormSpec::Piecewise {
            choice,
            parts: vec![bar.clone(), tilde.clone()],
        })
    };
    let mut current = level(&sets[0])?;
    for n in 1..chain.len() {
        current = inf_convolve(&current, &level(&sets[n])?, NodeSubspaces::uniform(chain[n - 1].clone()));
    }
    Ok(current)
}

#[derive(Clone, Debug)]
pub struct LocalFiniteOptions {
    /// Hop radius of the neighbourhood around `t₀`.
    pub radius: usize,
    /// Largest finite core accepted for the second condition; `None` means `dim Y`.
    pub max_core_dim: Option<usize>,
}

impl Default for LocalFiniteOptions {
    fn default() -> Self {
        LocalFiniteOptions {
            radius: 1,
            max_core_dim: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LocalFiniteness {
    /// `m(x)(t) < ε` for every complement basis vector on the neighbourhood.
    ConditionI { max_value: f64, neighbourhood: Vec<usize> },
    /// `Y = F ⊕ L` with `m` vanishing on `L` over the neighbourhood.
    ConditionIi {
        core: Vec<Vec<f64>>,
        vanishing: Vec<Vec<f64>>,
        min_core_dim: usize,
        neighbourhood: Vec<usize>,
    },
    Fail {
        counterexample: Vec<f64>,
        node: usize,
        value: f64,
        min_core_dim: usize,
    },
}

pub fn check_locally_finite(
    m: &CompiledSeminorm,
    model: &VectorSpaceModel,
    grid: &Grid,
    t0: usize,
    epsilon: f64,
    opts: &LocalFiniteOptions,
) -> Result<LocalFiniteness> {
    if m.dim() != model.dim || m.nodes() != grid.len() {
        return Err(Error::Shape("seminorm, model and grid disagree".into()));
    }
    if t0 >= grid.len() {
        return Err(Error::Shape(format!("node {t0} out of range")));
    }
    let ball = grid.hop_ball(t0, opts.radius);
    let mut worst: Option<(f64, usize, usize)> = None;
    for (j, x) in model.complement.iter().enumerate() {
        for &t in &ball {
            let v = m.eval(x, t)?;
            if worst.map_or(true, |(w, _, _)| v > w) {
                worst = Some((v, t, j));
            }
        }
    }
    let max_value = worst.map_or(0.0, |w| w.0);
    if max_value < epsilon {
        return Ok(LocalFiniteness::ConditionI {
            max_value,
            neighbourhood: ball,
        });
    }

    let mut vanishing = subspace::orthonormalize(&model.y_basis());
    for &t in &ball {
        vanishing = subspace::intersection(&vanishing, &m.kernel(t));
    }
    let core = subspace::complement_within(&model.y_basis(), &vanishing);
    let min_core_dim = core.ncols();
    let allowed = opts.max_core_dim.unwrap_or(model.subspace.len());
    if min_core_dim <= allowed {
        return Ok(LocalFiniteness::ConditionIi {
            core: subspace::to_vectors(&core),
            vanishing: subspace::to_vectors(&vanishing),
            min_core_dim,
            neighbourhood: ball,
        });
    }
    let (value, node, j) = worst.expect("complement is nonempty when condition (i) fails");
    Ok(LocalFiniteness::Fail {
        counterexample: model.complement[j].clone(),
        node,
        value,
        min_core_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2_model(n: usize, k: usize) -> VectorSpaceModel {
        VectorSpaceModel::coordinate(n, k, BaseNorm::l2()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let m = SeminormSpec::scaled_norm(BaseNorm::l2(), 2.0);
        assert_eq!(eval_seminorm(&m, &[0.0, 0.0], 0, 1).unwrap(), 0.0);
        assert_eq!(eval_seminorm(&m, &[1.0, 0.0], 0, 1).unwrap(), 2.0);
        let lin = SeminormSpec::MaxAbsLinear {
            rows: vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            scale: NodeScalars::uniform(1.0),
        };
        assert_eq!(eval_seminorm(&lin, &[1.0, -1.0], 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn spec_json_round_trip_and_rejection() {
        let json = r#"{"kind":"quotient_aug","base":{"kind":"scaled_norm","norm":{"p":"l2"},"scale":[1.0]},
                       "norm":{"p":"linf"},"delta":0.5,"subspace":[[[0.0,1.0]]]}"#;
        let m: SeminormSpec = serde_json::from_str(json).unwrap();
        let back: SeminormSpec = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<SeminormSpec>(r#"{"kind":"scaled_norm","norm":{"p":"l2"},"scale":[1.0],"x":1}"#).is_err());
        assert!(serde_json::from_str::<SeminormSpec>(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn m_delta_examples() {
        let model = l2_model(2, 1);
        let m = SeminormSpec::scaled_norm(BaseNorm::l2(), 1.5);
        let md = build_m_delta(&m, &model, 0.3).unwrap();
        // z in Y^c: distance 0
        assert!((eval_seminorm(&md, &[0.0, 2.0], 0, 1).unwrap() - 3.0).abs() < 1e-14);
        // e1 is at distance 1 from span(e2)
        assert!((eval_seminorm(&md, &[1.0, 0.0], 0, 1).unwrap() - 1.8).abs() < 1e-14);

        let mut full = model.clone();
        full.nilspaces = NodeSubspaces::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let md = build_m_delta(&m, &full, 0.3).unwrap();
        assert!((eval_seminorm(&md, &[0.7, -0.2], 0, 1).unwrap() - 1.5 * 0.53f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polyhedral_distance_uses_lp() {
        for norm in [BaseNorm::l1(), BaseNorm::linf()] {
            let model = VectorSpaceModel::coordinate(2, 1, norm.clone()).unwrap();
            let md = build_m_delta(&SeminormSpec::zero(), &model, 1.0).unwrap();
            // distance from (1, 5) to span(e2) is 1 in both norms
            let v = eval_seminorm(&md, &[1.0, 5.0], 0, 1).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn quotient_examples() {
        let mut model = l2_model(2, 2);
        model.complement.clear();
        model.subspace = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = SeminormSpec::scaled_norm(BaseNorm::l1(), 1.0);
        let (bar, tilde) = quotient_seminorms(&m, &model, 0.5).unwrap();
        let x = [0.3, -0.4];
        let b = eval_seminorm(&bar, &x, 0, 1).unwrap();
        assert!((b - (0.7 + 0.25)).abs() < 1e-12);
        let t = eval_seminorm(&tilde, &x, 0, 1).unwrap();
        assert!(b <= t + 1e-12);

        let model = l2_model(2, 1);
        let (bar, _) = quotient_seminorms(&m, &model, 0.5).unwrap();
        assert!(eval_seminorm(&bar, &[0.0, 3.0], 0, 1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn inf_conv_examples() {
        let norm = SeminormSpec::scaled_norm(BaseNorm::l2(), 1.0);
        let same = inf_convolve(&norm, &norm, NodeSubspaces::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]));
        let v = eval_seminorm(&same, &[3.0, 4.0], 0, 1).unwrap();
        assert!((v - 5.0).abs() < 1e-7);

        let other = SeminormSpec::scaled_norm(BaseNorm::l1(), 2.0);
        let trivial = inf_convolve(&norm, &other, NodeSubspaces::default());
        assert!((eval_seminorm(&trivial, &[1.0, -1.0], 0, 1).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn kernels_are_symbolic() {
        let lin = SeminormSpec::MaxAbsLinear {
            rows: vec![vec![1.0, 0.0, 0.0]],
            scale: NodeScalars::uniform(1.0),
        };
        assert_eq!(lin.compile(3, 1).unwrap().kernel(0).ncols(), 2);
        let zero = SeminormSpec::zero();
        assert_eq!(zero.compile(3, 1).unwrap().kernel(0).ncols(), 3);
        let norm = SeminormSpec::scaled_norm(BaseNorm::l1(), 1.0);
        assert_eq!(norm.compile(3, 1).unwrap().kernel(0).ncols(), 0);
        let ic = inf_convolve(&zero, &lin, NodeSubspaces::uniform(vec![vec![1.0, 0.0, 0.0]]));
        assert_eq!(ic.compile(3, 1).unwrap().kernel(0).ncols(), 3);
    }

    #[test]
    fn locally_finite_examples() {
        let grid = Grid::unit_interval(5).unwrap();
        let model = l2_model(3, 1);
        let vanish = SeminormSpec::MaxAbsLinear {
            rows: vec![vec![1.0, 0.0, 0.0]],
            scale: NodeScalars::uniform(1.0),
        };
        let c = vanish.compile(3, 5).unwrap();
        for t0 in 0..5 {
            let v = check_locally_finite(&c, &model, &grid, t0, 1e-6, &LocalFiniteOptions::default()).unwrap();
            assert!(matches!(v, LocalFiniteness::ConditionI { .. }));
        }

        let norm = SeminormSpec::scaled_norm(BaseNorm::l2(), 1.0).compile(3, 5).unwrap();
        let v = check_locally_finite(&norm, &model, &grid, 2, 1e-6, &LocalFiniteOptions::default()).unwrap();
        match v {
            LocalFiniteness::ConditionIi { min_core_dim, vanishing, .. } => {
                assert_eq!(min_core_dim, 1);
                assert!(vanishing.is_empty());
            }
            other => panic!("{other:?}"),
        }
        let strict = LocalFiniteOptions {
            radius: 1,
            max_core_dim: Some(0),
        };
        match check_locally_finite(&norm, &model, &grid, 2, 1e-6, &strict).unwrap() {
            LocalFiniteness::Fail { value, counterexample, .. } => {
                assert!((value - 1.0).abs() < 1e-14);
                assert_eq!(counterexample.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_validation() {
        assert!(VectorSpaceModel::new(2, BaseNorm::l2(), vec![vec![1.0, 0.0]], vec![vec![2.0, 0.0]]).is_err());
        assert!(VectorSpaceModel::new(2, BaseNorm::l2(), vec![vec![1.0, 0.0]], vec![]).is_err());
        let m = SeminormSpec::MaxAbsLinear {
            rows: vec![vec![1.0, 0.0]],
            scale: NodeScalars::uniform(1.0),
        };
        let c = m.compile(2, 3).unwrap();
        let model = l2_model(2, 1).with_nilspaces_from(&c);
        assert_eq!(model.nilspaces.0.len(), 1);
        model.check_nilspaces(&c, 1e-10).unwrap();
    }
}
