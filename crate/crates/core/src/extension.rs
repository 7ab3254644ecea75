//! Extension of a dominated linear map from `Y` to `ℝⁿ`, one direction at a time.
//!
//! Each step computes the envelopes
//! `u_x(t) = sup_y φ(y)(t) − m_δ(y − x)(t)` and `l_x(t) = inf_y m_δ(y + x)(t) − φ(y)(t)`,
//! picks a selection `u_x ≤ f ≤ l_x` of minimal total variation and sets
//! `φ̃(y + a x) = φ(y) + a f`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{Cmp, LinearProgram};
use crate::oracle;
use crate::program::{Ball, Program};
use crate::seminorm::{
    span_with_nilspaces, BaseNorm, CompiledSeminorm, NodeForm, NodeSubspaces, PNorm, SeminormSpec,
    VectorSpaceModel,
};
use crate::space::{Grid, GridKind, ScalarField};
use crate::subspace;

/// `φ` on `Y`: `values[t][j] = φ(y_j)(t)` for the basis `y_j` of the model's subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceMap {
    pub grid: Grid,
    pub values: Vec<Vec<f64>>,
}

/// Instance file payload for the `extend` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionInstance {
    pub space: VectorSpaceModel,
    pub phi: SubspaceMap,
    pub seminorm: SeminormSpec,
    pub delta: f64,
    /// Indices into `space.complement`; defaults to the listed order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl ExtensionInstance {
    pub fn problem(&self) -> Result<ExtensionProblem> {
        ExtensionProblem::new(self.space.clone(), self.phi.clone(), self.seminorm.clone(), self.delta)
    }

    /// Complement directions in extension order.
    pub fn directions(&self) -> Result<Vec<Vec<f64>>> {
        let c = &self.space.complement;
        match &self.order {
            None => Ok(c.clone()),
            Some(order) => {
                let mut seen = vec![false; c.len()];
                let mut out = Vec::with_capacity(order.len());
                for &i in order {
                    if i >= c.len() || seen[i] {
                        return Err(Error::Model(format!("order entry {i} is out of range or repeated")));
                    }
                    seen[i] = true;
                    out.push(c[i].clone());
                }
                if out.len() != c.len() {
                    return Err(Error::Model("order must list every complement vector".into()));
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtensionOptions {
    pub sphere_samples: usize,
    pub refine_samples: usize,
    pub certificate_samples: usize,
    pub seed: u64,
    /// Cross-check every envelope against the grid oracle when `dim Y ≤ 2`.
    pub oracle: bool,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions {
            sphere_samples: 1000,
            refine_samples: 4000,
            certificate_samples: 32,
            seed: 0x5eed,
            oracle: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtensionProblem {
    model: VectorSpaceModel,
    grid: Grid,
    values: Vec<Vec<f64>>,
    m: SeminormSpec,
    compiled: CompiledSeminorm,
    delta: f64,
}

const DOMINATION_TOL: f64 = 1e-9;
const DOMINATION_SAMPLES: usize = 32;

impl ExtensionProblem {
    pub fn new(model: VectorSpaceModel, phi: SubspaceMap, m: SeminormSpec, delta: f64) -> Result<Self> {
        model.validate()?;
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Model(format!("delta must be finite and >= 0, got {delta}")));
        }
        let nodes = phi.grid.len();
        let k = model.subspace.len();
        if phi.values.len() != nodes || phi.values.iter().any(|v| v.len() != k) {
            return Err(Error::Shape(format!(
                "phi needs {nodes} rows of {k} values (one per node and basis vector of Y)"
            )));
        }
        if phi.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Model("phi values must be finite".into()));
        }
        m.validate(model.dim, nodes)?;
        let compiled = m.compile(model.dim, nodes)?;
        let model = if model.nilspaces.0.is_empty() {
            model.with_nilspaces_from(&compiled)
        } else {
            model.check_nilspaces(&compiled, 1e-9)?;
            model
        };
        let problem = ExtensionProblem {
            model,
            grid: phi.grid,
            values: phi.values,
            m,
            compiled,
            delta,
        };
        problem.check_domination()?;
        Ok(problem)
    }

    pub fn model(&self) -> &VectorSpaceModel {
        &self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn seminorm(&self) -> &SeminormSpec {
        &self.m
    }

    pub fn compiled(&self) -> &CompiledSeminorm {
        &self.compiled
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `φ(y)(t)` for `y ∈ Y`.
    pub fn phi_at(&self, y: &[f64], t: usize) -> Result<f64> {
        let c = coordinates(&self.model.y_basis(), y)?;
        Ok(dot(&self.values[t], c.as_slice()))
    }

    /// `m_δ` with the distance taken to `span(Yᶜ ∪ N_t)`.
    pub fn m_delta(&self, delta: f64) -> SeminormSpec {
        SeminormSpec::QuotientAug {
            base: Box::new(self.m.clone()),
            norm: self.model.norm.clone(),
            delta,
            subspace: self.model.quotient_subspaces(),
        }
    }

    fn check_domination(&self) -> Result<()> {
        let b = self.model.y_basis();
        let k = b.ncols();
        if k == 0 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xd0);
        let mut coeffs = DMatrix::zeros(k, 2 * k + DOMINATION_SAMPLES);
        for j in 0..k {
            coeffs[(j, 2 * j)] = 1.0;
            coeffs[(j, 2 * j + 1)] = -1.0;
        }
        for s in 2 * k..coeffs.ncols() {
            for j in 0..k {
                coeffs[(j, s)] = StandardNormal.sample(&mut rng);
            }
        }
        let ys = &b * &coeffs;
        for t in 0..self.grid.len() {
            let mv = eval_columns(self.compiled.form(t), &ys)?;
            for s in 0..ys.ncols() {
                let phi = dot(&self.values[t], coeffs.column(s).as_slice());
                let scale = self.model.norm.eval(ys.column(s).as_slice()).max(1.0);
                let excess = phi - mv[s];
                if excess > DOMINATION_TOL * scale {
                    return Err(Error::Domination { node: t, excess });
                }
            }
        }
        Ok(())
    }
}

/// Coercivity data for one extension step.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RadiusBound {
    pub radius: f64,
    pub margin: f64,
    pub max_m_delta_x: f64,
    pub phi_scale: f64,
    /// Samples skipped because `m_δ(y)(t) = φ(y)(t) = 0`.
    pub degenerate: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Envelopes {
    pub upper: ScalarField,
    pub lower: ScalarField,
    pub radius: RadiusBound,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Selection {
    pub f: ScalarField,
    pub total_variation: f64,
    pub optimal_total_variation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepCertificate {
    pub step: usize,
    pub direction: Vec<f64>,
    pub delta: f64,
    pub radius: f64,
    pub margin: f64,
    /// `min_t l_x(t) − u_x(t)`.
    pub min_gap: f64,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub selection: Vec<f64>,
    pub total_variation: f64,
    /// Smallest `m_δ(z)(t) − |φ̃(z)(t)|` over the certificate samples.
    pub domination_slack: f64,
}

/// `φ̃` on `span(basis)`, stored per node as a coefficient vector `g_t` with `φ̃(z)(t) = ⟨g_t, z⟩`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtensionResult {
    pub dim: usize,
    pub basis: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub functionals: Vec<Vec<f64>>,
    pub steps: Vec<StepCertificate>,
}

impl ExtensionResult {
    fn from_parts(basis: &DMatrix<f64>, values: Vec<Vec<f64>>, steps: Vec<StepCertificate>) -> Result<Self> {
        let pinv = basis
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Model(format!("basis pseudo-inverse failed: {e}")))?;
        let functionals = values
            .iter()
            .map(|v| (pinv.transpose() * DVector::from_column_slice(v)).as_slice().to_vec())
            .collect();
        Ok(ExtensionResult {
            dim: basis.nrows(),
            basis: subspace::to_vectors(basis),
            values,
            functionals,
            steps,
        })
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn basis_matrix(&self) -> DMatrix<f64> {
        subspace::from_vectors(self.dim, &self.basis)
    }

    /// `φ̃(z)(t)`; `z` must lie in the span of the basis.
    pub fn eval(&self, z: &[f64], t: usize) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::Shape(format!("vector of length {} in R^{}", z.len(), self.dim)));
        }
        if t >= self.nodes() {
            return Err(Error::Shape(format!("node {t} out of range")));
        }
        if self.basis.len() < self.dim {
            let b = self.basis_matrix();
            let zv = DVector::from_column_slice(z);
            if subspace::residual_norm(&subspace::orthonormalize(&b), &zv) > 1e-9 * (1.0 + zv.norm()) {
                return Err(Error::Shape("vector outside the extension domain".into()));
            }
        }
        Ok(dot(&self.functionals[t], z))
    }

    pub fn eval_all(&self, z: &[f64]) -> Result<Vec<f64>> {
        (0..self.nodes()).map(|t| self.eval(z, t)).collect()
    }
}

/// Data of a single step: current domain `span(basis)` with values, and the dominating `m_δ`.
struct Stage<'a> {
    grid: &'a Grid,
    norm: &'a BaseNorm,
    basis: DMatrix<f64>,
    weighted: DMatrix<f64>,
    values: &'a [Vec<f64>],
    md: CompiledSeminorm,
}

impl<'a> Stage<'a> {
    fn new(
        grid: &'a Grid,
        norm: &'a BaseNorm,
        basis: DMatrix<f64>,
        values: &'a [Vec<f64>],
        md: CompiledSeminorm,
    ) -> Self {
        let weighted = norm.weight_matrix(basis.nrows()) * &basis;
        Stage {
            grid,
            norm,
            basis,
            weighted,
            values,
            md,
        }
    }

    fn k(&self) -> usize {
        self.basis.ncols()
    }

    fn nodes(&self) -> usize {
        self.grid.len()
    }

    fn radius_bound(&self, x: &DVector<f64>, opts: &ExtensionOptions) -> Result<RadiusBound> {
        let k = self.k();
        let mdx = self.md.eval_all(x.as_slice())?;
        let max_m_delta_x = mdx.iter().cloned().fold(0.0, f64::max);
        let mut phi_scale: f64 = 0.0;
        for j in 0..k {
            let bn = self.norm.eval(self.basis.column(j).as_slice());
            for v in self.values {
                phi_scale = phi_scale.max(v[j].abs() / bn);
            }
        }
        if k == 0 {
            return Ok(RadiusBound {
                radius: 0.0,
                margin: f64::INFINITY,
                max_m_delta_x,
                phi_scale,
                degenerate: 0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut worst = self.sphere_margin(&sphere_coefficients(self, opts.sphere_samples, &mut rng))?;
        if worst.margin > 0.0 && k > 1 && opts.refine_samples > 0 {
            let refined = self.sphere_margin(&sphere_coefficients(self, opts.refine_samples, &mut rng))?;
            let degenerate = worst.degenerate + refined.degenerate;
            if refined.margin < worst.margin {
                worst = refined;
            }
            worst.degenerate = degenerate;
        }
        if worst.margin <= 0.0 {
            return Err(Error::Coercivity {
                node: worst.node,
                margin: worst.margin,
                direction: worst.direction,
            });
        }
        let radius = if worst.margin.is_finite() {
            (2.0 * max_m_delta_x + phi_scale) / worst.margin
        } else {
            1.0 + 2.0 * max_m_delta_x + phi_scale
        };
        Ok(RadiusBound {
            radius,
            margin: worst.margin,
            max_m_delta_x,
            phi_scale,
            degenerate: worst.degenerate,
        })
    }

    /// `min_t min_s m_δ(y_s)(t) − φ(y_s)(t)` over unit vectors `y_s = B c_s`.
    fn sphere_margin(&self, coeffs: &DMatrix<f64>) -> Result<Margin> {
        let ys = &self.basis * coeffs;
        let per_node: Vec<Result<Margin>> = (0..self.nodes())
            .into_par_iter()
            .map(|t| {
                let phi: Vec<f64> = (0..coeffs.ncols())
                    .map(|s| dot(&self.values[t], coeffs.column(s).as_slice()))
                    .collect();
                node_margin(self.md.form(t), &ys, &phi, t)
            })
            .collect();
        let mut best = Margin {
            margin: f64::INFINITY,
            node: 0,
            direction: vec![],
            degenerate: 0,
        };
        let mut degenerate = 0;
        for m in per_node {
            let m = m?;
            degenerate += m.degenerate;
            if m.margin < best.margin {
                best = m;
            }
        }
        best.degenerate = degenerate;
        Ok(best)
    }

    /// `inf_{‖y‖ ≤ R} m_δ(y + z₀)(t) − φ(y)(t)`.
    fn node_min(&self, t: usize, z0: &DVector<f64>, radius: f64, opts: &ExtensionOptions) -> Result<f64> {
        let form = self.md.form(t);
        let k = self.k();
        if k == 0 || radius == 0.0 {
            return form.eval(z0.as_slice());
        }
        let phi = &self.values[t];
        let build = |r: f64| -> Program {
            let mut prog = form.program(&self.basis, z0);
            for j in 0..k {
                prog.linear[j] = -phi[j];
            }
            let mut mat = DMatrix::zeros(self.weighted.nrows(), prog.nvar);
            mat.view_mut((0, 0), (self.weighted.nrows(), k)).copy_from(&self.weighted);
            prog.ball = Some(Ball {
                p: self.norm.p,
                mat,
                radius: r,
            });
            prog
        };
        let brute = |r: f64| -> Option<f64> {
            (k <= 2 && form.naux() == 0).then(|| self.brute_force(t, z0, r))
        };
        let prog = build(radius);
        let (value, on_boundary) = match prog.minimize() {
            Ok(sol) => {
                let c = DVector::from_column_slice(&sol.point[..k]);
                let ynorm = self.norm.p.apply(&(&self.weighted * c));
                (sol.value, ynorm >= radius * (1.0 - 1e-6))
            }
            Err(Error::Solver(msg)) => match brute(radius) {
                Some(v) => (v, false),
                None => return Err(Error::Solver(format!("envelope at node {t}: {msg}"))),
            },
            Err(e) => return Err(e),
        };
        if on_boundary {
            let wider = build(4.0 * radius).minimize()?;
            if wider.value < value - 1e-9 * (1.0 + value.abs()) {
                return Err(Error::RadiusTooSmall { node: t, radius });
            }
        }
        if opts.oracle {
            if let Some(o) = brute(radius) {
                if (o - value).abs() > 1e-6 * (1.0 + value.abs()) {
                    return Err(Error::OracleMismatch {
                        what: format!("envelope at node {t}"),
                        solver: value,
                        oracle: o,
                    });
                }
            }
        }
        Ok(value)
    }

    fn brute_force(&self, t: usize, z0: &DVector<f64>, radius: f64) -> f64 {
        let form = self.md.form(t);
        let phi = &self.values[t];
        let (center, half) = oracle::coefficient_box(&self.weighted, self.norm.p, radius);
        oracle::zoom_minimize(&center, half, |cs| {
            let mut zs = &self.basis * cs;
            for mut col in zs.column_iter_mut() {
                col += z0;
            }
            let mv = form.eval_batch(&zs);
            let ys = &self.weighted * cs;
            (0..cs.ncols())
                .map(|s| {
                    if self.norm.p.apply(&ys.column(s).into_owned()) > radius * (1.0 + 1e-12) {
                        f64::INFINITY
                    } else {
                        mv[s] - dot(phi, cs.column(s).as_slice())
                    }
                })
                .collect()
        })
    }

    fn envelopes(&self, x: &DVector<f64>, opts: &ExtensionOptions) -> Result<Envelopes> {
        let radius = self.radius_bound(x, opts)?;
        let r = radius.radius;
        let neg = -x;
        let pairs: Vec<Result<(f64, f64)>> = (0..self.nodes())
            .into_par_iter()
            .map(|t| {
                let lower = self.node_min(t, x, r, opts)?;
                let upper = -self.node_min(t, &neg, r, opts)?;
                Ok((upper, lower))
            })
            .collect();
        let mut upper = Vec::with_capacity(self.nodes());
        let mut lower = Vec::with_capacity(self.nodes());
        for (t, p) in pairs.into_iter().enumerate() {
            let (mut u, mut l) = p?;
            if u > l {
                if u - l > 1e-7 * (1.0 + u.abs() + l.abs()) {
                    return Err(Error::EnvelopeOrder { node: t, upper: u, lower: l });
                }
                let mid = 0.5 * (u + l);
                u = mid;
                l = mid;
            }
            upper.push(u);
            lower.push(l);
        }
        Ok(Envelopes {
            upper: ScalarField(upper),
            lower: ScalarField(lower),
            radius,
        })
    }

    /// Checks `|φ̃(z)(t)| ≤ m_δ(z)(t) + 1e-8` on random unit `z` in the new domain.
    fn certify(&self, new_basis: &DMatrix<f64>, new_values: &[Vec<f64>], samples: usize, seed: u64) -> Result<f64> {
        let kk = new_basis.ncols();
        if samples == 0 || kk == 0 {
            return Ok(f64::INFINITY);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xce27);
        let mut coeffs = DMatrix::from_fn(kk, samples, |_, _| StandardNormal.sample(&mut rng));
        let mut zs = new_basis * &coeffs;
        for s in 0..samples {
            let n = self.norm.eval(zs.column(s).as_slice());
            if n > 0.0 {
                zs.column_mut(s).scale_mut(1.0 / n);
                coeffs.column_mut(s).scale_mut(1.0 / n);
            }
        }
        let slacks: Vec<Result<(usize, f64)>> = (0..self.nodes())
            .into_par_iter()
            .map(|t| {
                let mv = eval_columns(self.md.form(t), &zs)?;
                let mut worst = f64::INFINITY;
                for s in 0..samples {
                    let v = dot(&new_values[t], coeffs.column(s).as_slice());
                    worst = worst.min(mv[s] - v.abs());
                }
                Ok((t, worst))
            })
            .collect();
        let mut worst = f64::INFINITY;
        for r in slacks {
            let (t, s) = r?;
            if s < -1e-8 {
                return Err(Error::Domination { node: t, excess: -s });
            }
            worst = worst.min(s);
        }
        Ok(worst)
    }
}

struct Margin {
    margin: f64,
    node: usize,
    direction: Vec<f64>,
    degenerate: usize,
}

const DEGENERATE: f64 = 1e-12;
const EXACT_EVAL_CAP: usize = 256;

fn node_margin(form: &NodeForm, ys: &DMatrix<f64>, phi: &[f64], t: usize) -> Result<Margin> {
    let s_count = ys.ncols();
    let mut margin = f64::INFINITY;
    let mut arg = None;
    let mut degenerate = 0;
    if form.naux() == 0 {
        let mv = form.eval_batch(ys);
        for s in 0..s_count {
            if mv[s] <= DEGENERATE && phi[s].abs() <= DEGENERATE {
                degenerate += 1;
                continue;
            }
            let g = mv[s] - phi[s];
            if g < margin {
                margin = g;
                arg = Some(s);
            }
        }
    } else {
        // Branch and bound over an auxiliary-free minorant.
        let lower = form.lower_form().eval_batch(ys);
        let mut order: Vec<usize> = (0..s_count).collect();
        order.sort_by(|&a, &b| (lower[a] - phi[a]).total_cmp(&(lower[b] - phi[b])).then(a.cmp(&b)));
        let mut exact = 0;
        for &s in &order {
            let bound = lower[s] - phi[s];
            if bound >= margin {
                break;
            }
            if exact == EXACT_EVAL_CAP {
                margin = bound;
                arg = Some(s);
                break;
            }
            exact += 1;
            let mv = form.eval(ys.column(s).as_slice())?;
            if mv <= DEGENERATE && phi[s].abs() <= DEGENERATE {
                degenerate += 1;
                continue;
            }
            if mv - phi[s] < margin {
                margin = mv - phi[s];
                arg = Some(s);
            }
        }
    }
    Ok(Margin {
        margin,
        node: t,
        direction: arg.map(|s| ys.column(s).as_slice().to_vec()).unwrap_or_default(),
        degenerate,
    })
}

/// Coefficients of points on the unit sphere of `span(B)`; exactly `±b` when `dim = 1`.
fn sphere_coefficients(stage: &Stage, count: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = stage.k();
    let mut c = if k == 1 {
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0])
    } else {
        DMatrix::from_fn(k, count, |_, _| StandardNormal.sample(rng))
    };
    for s in 0..c.ncols() {
        let y = &stage.basis * c.column(s);
        let n = stage.norm.eval(y.as_slice());
        if n > 0.0 {
            c.column_mut(s).scale_mut(1.0 / n);
        }
    }
    c
}

fn eval_columns(form: &NodeForm, zs: &DMatrix<f64>) -> Result<Vec<f64>> {
    if form.naux() == 0 {
        Ok(form.eval_batch(zs))
    } else {
        (0..zs.ncols()).map(|s| form.eval(zs.column(s).as_slice())).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn coordinates(b: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != b.nrows() {
        return Err(Error::Shape(format!("vector of length {} in R^{}", y.len(), b.nrows())));
    }
    let yv = DVector::from_column_slice(y);
    let c = b
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Model(e.to_string()))?
        * &yv;
    if (b * &c - &yv).norm() > 1e-9 * (1.0 + yv.norm()) {
        return Err(Error::Shape("vector is not in Y".into()));
    }
    Ok(c)
}

/// Nodewise kernels of a compiled seminorm, shared when identical.
fn kernels(m: &CompiledSeminorm) -> NodeSubspaces {
    let ks: Vec<Vec<Vec<f64>>> = (0..m.nodes()).map(|t| subspace::to_vectors(&m.kernel(t))).collect();
    if !ks.is_empty() && ks.windows(2).all(|w| w[0] == w[1]) {
        NodeSubspaces(vec![ks[0].clone()])
    } else {
        NodeSubspaces(ks)
    }
}

fn quotient_aug(m: &SeminormSpec, norm: &BaseNorm, delta: f64, complement: &DMatrix<f64>, nil: &NodeSubspaces) -> SeminormSpec {
    SeminormSpec::QuotientAug {
        base: Box::new(m.clone()),
        norm: norm.clone(),
        delta,
        subspace: span_with_nilspaces(complement, nil, complement.nrows()),
    }
}

fn check_direction(basis: &DMatrix<f64>, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != basis.nrows() {
        return Err(Error::Shape(format!("direction of length {} in R^{}", x.len(), basis.nrows())));
    }
    let xv = DVector::from_column_slice(x);
    let norm = xv.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Model("extension direction must be nonzero and finite".into()));
    }
    if basis.ncols() > 0 {
        let q = subspace::orthonormalize(basis);
        if subspace::residual_norm(&q, &xv) / norm <= 1e-8 {
            return Err(Error::Model("extension direction lies in the current domain".into()));
        }
    }
    Ok(xv)
}

/// Upper and lower envelopes at `x` for `m_δ` built from the model's full complement.
pub fn envelopes(problem: &ExtensionProblem, x: &[f64], opts: &ExtensionOptions) -> Result<Envelopes> {
    let md = problem.m_delta(problem.delta).compile(problem.model.dim, problem.grid.len())?;
    let stage = Stage::new(&problem.grid, &problem.model.norm, problem.model.y_basis(), &problem.values, md);
    let xv = check_direction(&stage.basis, x).or_else(|e| match e {
        Error::Model(_) => Ok(DVector::from_column_slice(x)),
        e => Err(e),
    })?;
    stage.envelopes(&xv, opts)
}

/// Coercivity radius for the envelope problems at `x`.
pub fn radius_bound(problem: &ExtensionProblem, x: &[f64], opts: &ExtensionOptions) -> Result<RadiusBound> {
    let md = problem.m_delta(problem.delta).compile(problem.model.dim, problem.grid.len())?;
    let stage = Stage::new(&problem.grid, &problem.model.norm, problem.model.y_basis(), &problem.values, md);
    if x.len() != problem.model.dim {
        return Err(Error::Shape(format!("direction of length {} in R^{}", x.len(), problem.model.dim)));
    }
    stage.radius_bound(&DVector::from_column_slice(x), opts)
}

struct StepOutcome {
    basis: DMatrix<f64>,
    values: Vec<Vec<f64>>,
    certificate: StepCertificate,
}

fn run_step(stage: &Stage, x: &DVector<f64>, step: usize, delta: f64, opts: &ExtensionOptions) -> Result<StepOutcome> {
    let env = stage.envelopes(x, opts)?;
    let sel = select_continuous(&env.upper, &env.lower, stage.grid)?;
    let k = stage.k();
    let mut basis = DMatrix::zeros(x.len(), k + 1);
    basis.view_mut((0, 0), (x.len(), k)).copy_from(&stage.basis);
    basis.set_column(k, x);
    let values: Vec<Vec<f64>> = stage
        .values
        .iter()
        .zip(&sel.f.0)
        .map(|(v, &f)| {
            let mut w = v.clone();
            w.push(f);
            w
        })
        .collect();
    let slack = stage.certify(&basis, &values, opts.certificate_samples, opts.seed.wrapping_add(step as u64))?;
    let min_gap = env
        .upper
        .0
        .iter()
        .zip(&env.lower.0)
        .map(|(u, l)| l - u)
        .fold(f64::INFINITY, f64::min);
    Ok(StepOutcome {
        basis,
        values,
        certificate: StepCertificate {
            step,
            direction: x.as_slice().to_vec(),
            delta,
            radius: env.radius.radius,
            margin: env.radius.margin,
            min_gap,
            upper: env.upper.0,
            lower: env.lower.0,
            selection: sel.f.0,
            total_variation: sel.total_variation,
            domination_slack: slack,
        },
    })
}

/// Extends `φ` to `Y ⊕ ℝx` dominated by `m_δ`.
pub fn extend_one(problem: &ExtensionProblem, x: &[f64], opts: &ExtensionOptions) -> Result<ExtensionResult> {
    let md = problem.m_delta(problem.delta).compile(problem.model.dim, problem.grid.len())?;
    let stage = Stage::new(&problem.grid, &problem.model.norm, problem.model.y_basis(), &problem.values, md);
    let xv = check_direction(&stage.basis, x)?;
    let out = run_step(&stage, &xv, 0, problem.delta, opts)?;
    ExtensionResult::from_parts(&out.basis, out.values, vec![out.certificate])
}

/// Extends `φ` along `directions` with budget `δ/2^k` at step `k`; the result is
/// dominated by `m + 2δ‖·‖`.
pub fn extend_full(problem: &ExtensionProblem, directions: &[Vec<f64>], opts: &ExtensionOptions) -> Result<ExtensionResult> {
    let n = problem.model.dim;
    let nodes = problem.grid.len();
    let mut basis = problem.model.y_basis();
    let mut values = problem.values.clone();
    let all = subspace::sum(&basis, &subspace::from_vectors(n, directions));
    if basis.ncols() + directions.len() != n || subspace::rank(&all) != n {
        return Err(Error::Model("directions must complete Y to a basis of the ambient space".into()));
    }
    let mut m = problem.m.clone();
    let mut nil = problem.model.nilspaces.clone();
    let mut steps = Vec::with_capacity(directions.len());
    for (k, x) in directions.iter().enumerate() {
        let wrap = |e: Error| Error::Step {
            step: k,
            source: Box::new(e),
        };
        let delta = problem.delta / 2f64.powi(k as i32);
        let complement = subspace::from_vectors(n, &directions[k..]);
        let md_spec = quotient_aug(&m, &problem.model.norm, delta, &complement, &nil);
        let md = md_spec.compile(n, nodes).map_err(wrap)?;
        let stage = Stage::new(&problem.grid, &problem.model.norm, basis.clone(), &values, md);
        let xv = check_direction(&stage.basis, x).map_err(wrap)?;
        let out = run_step(&stage, &xv, k, delta, opts).map_err(wrap)?;
        nil = kernels(&stage.md);
        m = md_spec;
        basis = out.basis;
        values = out.values;
        steps.push(out.certificate);
    }
    let result = ExtensionResult::from_parts(&basis, values, steps)?;
    final_certificate(problem, &result, opts)?;
    Ok(result)
}

/// `|φ̃(z)(t)| ≤ m(z)(t) + 2δ‖z‖ + 1e-8` on random unit vectors.
fn final_certificate(problem: &ExtensionProblem, result: &ExtensionResult, opts: &ExtensionOptions) -> Result<()> {
    let samples = opts.certificate_samples;
    if samples == 0 || result.basis.is_empty() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xf1a1);
    let b = result.basis_matrix();
    let mut zs = &b * DMatrix::from_fn(b.ncols(), samples, |_, _| StandardNormal.sample(&mut rng));
    for s in 0..samples {
        let nz = problem.model.norm.eval(zs.column(s).as_slice());
        if nz > 0.0 {
            zs.column_mut(s).scale_mut(1.0 / nz);
        }
    }
    for t in 0..result.nodes() {
        let mv = eval_columns(problem.compiled.form(t), &zs)?;
        for s in 0..samples {
            let z = zs.column(s);
            let v: f64 = result.functionals[t].iter().zip(z.iter()).map(|(g, zi)| g * zi).sum();
            let bound = mv[s] + 2.0 * problem.delta * problem.model.norm.eval(z.as_slice()) + 1e-8;
            if v.abs() > bound {
                return Err(Error::Domination {
                    node: t,
                    excess: v.abs() - bound,
                });
            }
        }
    }
    Ok(())
}

/// Total variation `Σ_edges |f(a) − f(b)|`.
pub fn total_variation(f: &[f64], grid: &Grid) -> f64 {
    grid.edges().iter().map(|e| (f[e.a] - f[e.b]).abs()).sum()
}

/// `u ≤ f ≤ l` with minimal total variation, closest to `(u + l)/2` among the minimizers.
pub fn select_continuous(u: &ScalarField, l: &ScalarField, grid: &Grid) -> Result<Selection> {
    let n = grid.len();
    if u.0.len() != n || l.0.len() != n {
        return Err(Error::Shape(format!("tube of length {}/{} on {n} nodes", u.0.len(), l.0.len())));
    }
    for t in 0..n {
        if !(u.0[t].is_finite() && l.0[t].is_finite()) {
            return Err(Error::Model(format!("non-finite envelope at node {t}")));
        }
        if u.0[t] > l.0[t] {
            return Err(Error::InfeasibleTube {
                node: t,
                upper: u.0[t],
                lower: l.0[t],
            });
        }
    }
    if u.0 == l.0 {
        let tv = total_variation(&u.0, grid);
        return Ok(Selection {
            f: u.clone(),
            total_variation: tv,
            optimal_total_variation: tv,
        });
    }
    let base = match grid.kind() {
        GridKind::Path => taut_path(&u.0, &l.0),
        _ => tv_lp(&u.0, &l.0, grid)?,
    };
    let tv_star = total_variation(&base, grid);
    let f = match tie_break(&u.0, &l.0, grid, tv_star) {
        Some(f) if total_variation(&f, grid) - tv_star <= 5e-9 => f,
        _ => base,
    };
    Ok(Selection {
        total_variation: total_variation(&f, grid),
        f: ScalarField(f),
        optimal_total_variation: tv_star,
    })
}

/// Greedy forward pass over the optimal-value interval, clamped backtracking.
fn taut_path(u: &[f64], l: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut states = Vec::with_capacity(n);
    let (mut lo, mut hi) = (u[0], l[0]);
    states.push((lo, hi));
    for i in 1..n {
        let (a, b) = (u[i], l[i]);
        if b < lo {
            lo = b;
            hi = b;
        } else if a > hi {
            lo = a;
            hi = a;
        } else {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        states.push((lo, hi));
    }
    let mut f = vec![0.0; n];
    let (lo, hi) = states[n - 1];
    f[n - 1] = (0.5 * (u[n - 1] + l[n - 1])).clamp(lo, hi);
    for i in (0..n - 1).rev() {
        let (lo, hi) = states[i];
        f[i] = f[i + 1].clamp(lo, hi);
    }
    f
}

fn tv_lp(u: &[f64], l: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    let mut lp = LinearProgram::new();
    let vars: Vec<usize> = (0..u.len()).map(|i| lp.add_var(0.0, (u[i], l[i]))).collect();
    for e in grid.edges() {
        let s = lp.add_var(1.0, (0.0, f64::INFINITY));
        lp.add_row(vec![(s, 1.0), (vars[e.a], -1.0), (vars[e.b], 1.0)], Cmp::Ge, 0.0);
        lp.add_row(vec![(s, 1.0), (vars[e.a], 1.0), (vars[e.b], -1.0)], Cmp::Ge, 0.0);
    }
    let sol = lp.minimize()?;
    Ok(vars.iter().map(|&v| sol.x[v].clamp(u[v], l[v])).collect())
}

/// `min ‖f − mid‖²` subject to `u ≤ f ≤ l` and `TV(f) ≤ TV* + η`.
fn tie_break(u: &[f64], l: &[f64], grid: &Grid, tv_star: f64) -> Option<Vec<f64>> {
    let n = u.len();
    let edges = grid.edges();
    let mut prog = Program::new(n);
    prog.quadratic = Some(vec![2.0; n]);
    prog.linear = (0..n).map(|i| -(u[i] + l[i])).collect();
    prog.bounds = Some((u.to_vec(), l.to_vec()));
    let mut d = DMatrix::zeros(edges.len(), n);
    for (r, e) in edges.iter().enumerate() {
        d[(r, e.a)] = 1.0;
        d[(r, e.b)] = -1.0;
    }
    prog.ball = Some(Ball {
        p: PNorm::L1,
        mat: d,
        radius: tv_star + 2e-10 * (1.0 + tv_star),
    });
    let sol = prog.minimize().ok()?;
    Some((0..n).map(|i| sol.point[i].clamp(u[i], l[i])).collect())
}
