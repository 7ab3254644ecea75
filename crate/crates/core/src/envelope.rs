//! Sampled state spaces, function representations and LP extension envelopes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, op_norm, AlgebraDescriptor, CMatrix, Element, FunctionalRep, C64};
use crate::error::{Error, Result};
use crate::extension::{self, ExtensionOptions, ExtensionProblem, SubspaceMap};
use crate::field::MapField;
use crate::lp::{Cmp, LinearProgram};
use crate::seminorm::{BaseNorm, NodeScalars, SeminormSpec, VectorSpaceModel};
use crate::space::ScalarField;
use crate::subspace;

/// Finite set of states standing in for the state space.
#[derive(Clone, Debug)]
pub struct StateSample {
    pub algebra: AlgebraDescriptor,
    pub states: Vec<FunctionalRep>,
    pub pure: Vec<bool>,
    pub seed: u64,
}

impl StateSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Adds the eigenvector states of `rho` (the supports of its Jordan parts).
    pub fn with_spectral_states_of(mut self, rho: &FunctionalRep) -> Result<Self> {
        for (b, m) in rho.blocks().iter().enumerate() {
            let (_, vecs) = algebra::hermitian_eigen(m, b)?;
            for j in 0..vecs.ncols() {
                let v: Vec<C64> = vecs.column(j).iter().cloned().collect();
                self.push_pure(b, &v)?;
            }
        }
        Ok(self)
    }

    /// Adds spectral states of every node of `phi`.
    pub fn with_spectral_states_of_field(self, phi: &MapField) -> Result<Self> {
        phi.rho().iter().try_fold(self, |s, r| s.with_spectral_states_of(r))
    }

    fn push_pure(&mut self, block: usize, v: &[C64]) -> Result<()> {
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let blocks = self
            .algebra
            .blocks()
            .iter()
            .enumerate()
            .map(|(c, &d)| {
                if c == block {
                    CMatrix::from_fn(d, d, |i, j| v[i] * v[j].conj() / C64::new(norm * norm, 0.0))
                } else {
                    CMatrix::zeros(d, d)
                }
            })
            .collect();
        self.states.push(FunctionalRep::new(&self.algebra, blocks)?);
        self.pure.push(true);
        Ok(())
    }
}

/// Deterministic state sample: vertex states of every one-dimensional block, spectral
/// states of the standard and selfadjoint bases of every matrix block, then Haar-random
/// pure states (blocks drawn with weight `d²`) until `count` states are present.
pub fn sample_state_space(a: &AlgebraDescriptor, count: usize, seed: u64) -> Result<StateSample> {
    if count < a.dimension() {
        return Err(Error::Instance(format!(
            "a state sample needs at least dim A = {} states, got {count}",
            a.dimension()
        )));
    }
    let mut sample = StateSample {
        algebra: a.clone(),
        states: Vec::new(),
        pure: Vec::new(),
        seed,
    };
    for (b, &d) in a.blocks().iter().enumerate() {
        for i in 0..d {
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[i] = C64::new(1.0, 0.0);
            sample.push_pure(b, &v)?;
        }
        if d >= 2 {
            for i in 0..d {
                for j in (i + 1)..d {
                    for phase in [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                        let mut v = vec![C64::new(0.0, 0.0); d];
                        v[i] = C64::new(1.0, 0.0);
                        v[j] = phase;
                        sample.push_pure(b, &v)?;
                    }
                }
            }
        }
    }
    let weights: Vec<usize> = a.blocks().iter().map(|&d| if d >= 2 { d * d } else { 0 }).collect();
    let total: usize = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while sample.len() < count {
        if total == 0 {
            // Commutative: interior points of the simplex.
            let w: Vec<f64> = (0..a.dimension()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            sample.states.push(FunctionalRep::diagonal(a, &w)?);
            sample.pure.push(false);
            continue;
        }
        let mut pick = rng.gen_range(0..total);
        let mut block = 0;
        while pick >= weights[block] {
            pick -= weights[block];
            block += 1;
        }
        let d = a.blocks()[block];
        let v: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        sample.push_pure(block, &v)?;
    }
    Ok(sample)
}

/// `x̂(s) = s(x)` over the sample.
pub fn kadison_represent(x: &Element, sample: &StateSample) -> Result<Vec<f64>> {
    sample.states.iter().map(|s| s.pair(x)).collect()
}

/// Values of an operator-system basis on the sample.
#[derive(Clone, Debug)]
pub struct FunctionSpaceRep {
    pub values: Vec<Vec<f64>>,
    /// `(‖x‖ − max_s |x̂(s)|)/‖x‖` per basis element.
    pub defects: Vec<f64>,
}

pub fn represent_system(basis: &[Element], sample: &StateSample) -> Result<FunctionSpaceRep> {
    let values = basis
        .iter()
        .map(|x| kadison_represent(x, sample))
        .collect::<Result<Vec<_>>>()?;
    let defects = basis
        .iter()
        .zip(&values)
        .map(|(x, v)| Ok(relative_defect(op_norm(x)?, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionSpaceRep { values, defects })
}

fn relative_defect(norm: f64, values: &[f64]) -> f64 {
    if norm == 0.0 {
        return 0.0;
    }
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (norm - sup) / norm
}

/// Largest relative isometry defect over `elements`.
pub fn isometry_defect(elements: &[Element], sample: &StateSample) -> Result<f64> {
    Ok(represent_system(elements, sample)?.defects.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpEnvelope {
    pub value: f64,
    /// `Σ_s |w_s|` at the optimum.
    pub weight_norm: f64,
    /// Whether the optimum uses the full norm cap.
    pub saturated: bool,
}

/// Optimizes `Σ_s w_s x̂(s)` over signed weights with `Σ_s w_s ŷ_i(s) = φ_i` and `Σ_s |w_s| ≤ bound`.
pub fn lp_envelope_values(
    features: &[Vec<f64>],
    moments: &[f64],
    target: &[f64],
    bound: f64,
    direction: Direction,
) -> Result<LpEnvelope> {
    let s_count = target.len();
    if features.len() != moments.len() || features.iter().any(|f| f.len() != s_count) {
        return Err(Error::Shape("feature rows must match the moments and the sample".into()));
    }
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::Instance(format!("norm bound must be finite and >= 0, got {bound}")));
    }
    let sign = match direction {
        Direction::Max => -1.0,
        Direction::Min => 1.0,
    };
    let mut lp = LinearProgram::new();
    let plus: Vec<usize> = (0..s_count).map(|s| lp.add_var(sign * target[s], (0.0, f64::INFINITY))).collect();
    let minus: Vec<usize> = (0..s_count).map(|s| lp.add_var(-sign * target[s], (0.0, f64::INFINITY))).collect();
    add_moment_rows(&mut lp, features, moments, &plus, &minus, features.len());
    let cap: Vec<(usize, f64)> = plus.iter().chain(&minus).map(|&v| (v, 1.0)).collect();
    lp.add_row(cap, Cmp::Le, bound);
    match lp.minimize() {
        Ok(sol) => {
            let weight_norm: f64 = plus.iter().chain(&minus).map(|&v| sol.x[v]).sum();
            Ok(LpEnvelope {
                value: sign * sol.objective,
                weight_norm,
                saturated: weight_norm >= bound - 1e-9 * (1.0 + bound),
            })
        }
        Err(Error::Infeasible(_)) => Err(diagnose(features, moments, bound)),
        Err(e) => Err(e),
    }
}

fn add_moment_rows(
    lp: &mut LinearProgram,
    features: &[Vec<f64>],
    moments: &[f64],
    plus: &[usize],
    minus: &[usize],
    upto: usize,
) {
    for i in 0..upto {
        let mut terms = Vec::with_capacity(2 * plus.len());
        for s in 0..plus.len() {
            terms.push((plus[s], features[i][s]));
            terms.push((minus[s], -features[i][s]));
        }
        lp.add_row(terms, Cmp::Eq, moments[i]);
    }
}

fn min_weight(features: &[Vec<f64>], moments: &[f64], upto: usize) -> Result<f64> {
    let s_count = features.first().map_or(0, |f| f.len());
    let mut lp = LinearProgram::new();
    let plus: Vec<usize> = (0..s_count).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let minus: Vec<usize> = (0..s_count).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    add_moment_rows(&mut lp, features, moments, &plus, &minus, upto);
    Ok(lp.minimize()?.objective)
}

fn diagnose(features: &[Vec<f64>], moments: &[f64], bound: f64) -> Error {
    match min_weight(features, moments, features.len()) {
        Ok(w) => Error::Infeasible(format!(
            "norm cap {bound:.6e} is below the smallest representing weight {w:.6e}"
        )),
        Err(_) => {
            let first = (1..=features.len())
                .find(|&k| min_weight(features, moments, k).is_err())
                .unwrap_or(features.len());
            Error::Infeasible(format!(
                "moment constraint {} cannot be met by weights on the state sample",
                first - 1
            ))
        }
    }
}

/// `lp_envelope_values` for a functional, an operator-system basis and a target element.
pub fn lp_envelope(
    phi_t: &FunctionalRep,
    system: &[Element],
    x: &Element,
    bound: f64,
    direction: Direction,
    sample: &StateSample,
) -> Result<LpEnvelope> {
    let rep = represent_system(system, sample)?;
    let moments = system.iter().map(|y| phi_t.pair(y)).collect::<Result<Vec<_>>>()?;
    let target = kadison_represent(x, sample)?;
    lp_envelope_values(&rep.values, &moments, &target, bound, direction)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeField {
    pub upper: ScalarField,
    pub lower: ScalarField,
    pub bounds: Vec<f64>,
    pub saturated_upper: Vec<bool>,
    pub saturated_lower: Vec<bool>,
    /// Relative isometry defect of the sample on `x`.
    pub defect: f64,
}

/// Nodewise envelopes with norm cap `‖φ_t‖ + δ_n`.
pub fn envelope_field(
    phi: &MapField,
    system: &[Element],
    x: &Element,
    delta_n: f64,
    sample: &StateSample,
) -> Result<EnvelopeField> {
    if !(delta_n >= 0.0 && delta_n.is_finite()) {
        return Err(Error::Instance(format!("delta_n must be finite and >= 0, got {delta_n}")));
    }
    let rep = represent_system(system, sample)?;
    let target = kadison_represent(x, sample)?;
    let defect = relative_defect(op_norm(x)?, &target);
    let rows = (0..phi.len())
        .into_par_iter()
        .map(|t| {
            let rho = phi.at(t);
            let bound = rho.norm()? + delta_n;
            let moments = system.iter().map(|y| rho.pair(y)).collect::<Result<Vec<_>>>()?;
            let up = lp_envelope_values(&rep.values, &moments, &target, bound, Direction::Max)
                .map_err(|e| at_node(e, t))?;
            let lo = lp_envelope_values(&rep.values, &moments, &target, bound, Direction::Min)
                .map_err(|e| at_node(e, t))?;
            Ok((bound, up, lo))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut field = EnvelopeField {
        upper: ScalarField(Vec::with_capacity(rows.len())),
        lower: ScalarField(Vec::with_capacity(rows.len())),
        bounds: Vec::with_capacity(rows.len()),
        saturated_upper: Vec::with_capacity(rows.len()),
        saturated_lower: Vec::with_capacity(rows.len()),
        defect,
    };
    for (bound, up, lo) in rows {
        field.upper.0.push(up.value);
        field.lower.0.push(lo.value);
        field.bounds.push(bound);
        field.saturated_upper.push(up.saturated);
        field.saturated_lower.push(lo.saturated);
    }
    Ok(field)
}

fn at_node(e: Error, t: usize) -> Error {
    match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("node {t}: {msg}")),
        other => other,
    }
}

#[derive(Clone, Debug)]
pub struct StudyOptions {
    pub samples: usize,
    pub seed: u64,
    pub extension: ExtensionOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            samples: 400,
            seed: 7,
            extension: ExtensionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub delta: f64,
    pub subspace_dim: usize,
    /// `max_t |ψ_t(x) − φ_t(x)|` per test element for the constructed approximant.
    pub distances: Vec<f64>,
    /// Largest `|ψ_t(x) − φ_t(x)|` over every admissible approximant (norm `‖φ_t‖ + 3δ_n/2`).
    pub worst_case: Vec<f64>,
    /// `max_t ‖ψ_t‖ − ‖φ_t‖`.
    pub norm_excess: f64,
    /// `max_t |‖ψ_t‖ − ‖ψ⁺_t‖ − ‖ψ⁻_t‖|` of the nodewise Jordan split.
    pub additivity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub stages: Vec<StageReport>,
    pub sample_size: usize,
    pub isometry_defect: f64,
}

fn coordinates(x: &Element, basis: &[Element]) -> Result<Vec<f64>> {
    let rep = FunctionalRep::from_element(x)?;
    basis.iter().map(|e| rep.pair(e)).collect()
}

fn functional_from_coordinates(a: &AlgebraDescriptor, g: &[f64], basis: &[Element]) -> Result<FunctionalRep> {
    let mut acc = a.zero();
    for (gi, e) in g.iter().zip(basis) {
        acc = acc.combine(1.0, e, *gi)?;
    }
    FunctionalRep::from_element(&acc)
}

/// Approximates `φ` by extensions of `φ|F_n` dominated by `(‖φ‖ + δ_n)‖·‖` on the
/// function representation and reports their distance to `φ` on `tests`.
pub fn decomposable_approximation_study(
    phi: &MapField,
    chain: &[Vec<Element>],
    deltas: &[f64],
    tests: &[Element],
    opts: &StudyOptions,
) -> Result<StudyReport> {
    let a = phi.algebra();
    if chain.is_empty() || chain.len() != deltas.len() {
        return Err(Error::Instance("chain and delta sequence must be nonempty and of equal length".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) || deltas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Instance("deltas must be positive and non-increasing".into()));
    }
    let basis = a.selfadjoint_basis();
    let dim = basis.len();
    let chain_coords = chain
        .iter()
        .map(|f| {
            let cols = f.iter().map(|y| coordinates(y, &basis)).collect::<Result<Vec<_>>>()?;
            Ok(subspace::orthonormalize(&subspace::from_vectors(dim, &cols)))
        })
        .collect::<Result<Vec<DMatrix<f64>>>>()?;
    for w in chain_coords.windows(2) {
        if subspace::intersection(&w[0], &w[1]).ncols() != w[0].ncols() {
            return Err(Error::Instance("chain must be nested".into()));
        }
    }
    let sample = sample_state_space(a, opts.samples.max(dim), opts.seed)?.with_spectral_states_of_field(phi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x15);
    let probes: Vec<Element> = (0..200).map(|_| a.random_selfadjoint(&mut rng)).collect();
    let defect = isometry_defect(&probes, &sample)?;
    let state_rows = sample
        .states
        .iter()
        .map(|s| s.blocks().to_vec())
        .map(|b| {
            let e = Element::new(a, b)?;
            coordinates(&e, &basis)
        })
        .collect::<Result<Vec<_>>>()?;
    // ‖x‖₂ ≤ √N ‖x‖ ≤ κ ‖x̂‖_∞ with N the matrix size.
    let size: usize = a.blocks().iter().sum();
    let kappa = (size as f64).sqrt() / (1.0 - (2.0 * defect).min(0.5));
    let phi_coords = phi
        .rho()
        .iter()
        .map(|r| basis.iter().map(|e| r.pair(e)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let phi_norms = phi.pointwise_norm()?.0;
    let test_coords = tests.iter().map(|x| coordinates(x, &basis)).collect::<Result<Vec<_>>>()?;
    let phi_tests: Vec<Vec<f64>> = tests.iter().map(|x| Ok(phi.evaluate(x)?.0)).collect::<Result<_>>()?;
    let test_reps = tests.iter().map(|x| kadison_represent(x, &sample)).collect::<Result<Vec<_>>>()?;

    let mut stages = Vec::with_capacity(chain.len());
    for (n, (f, &delta)) in chain_coords.iter().zip(deltas).enumerate() {
        let y = subspace::to_vectors(f);
        let complement = subspace::to_vectors(&subspace::orthonormalize(&subspace::null_space(&f.transpose())));
        let model = VectorSpaceModel::new(dim, BaseNorm::l2(), y.clone(), complement.clone())?;
        let values: Vec<Vec<f64>> = phi_coords
            .iter()
            .map(|g| y.iter().map(|v| v.iter().zip(g).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let m = SeminormSpec::MaxAbsLinear {
            rows: state_rows.clone(),
            scale: NodeScalars(phi_norms.iter().map(|p| p + delta).collect()),
        };
        let functionals: Vec<Vec<f64>> = if complement.is_empty() {
            phi_coords.clone()
        } else {
            let problem = ExtensionProblem::new(
                model,
                SubspaceMap {
                    grid: phi.grid().clone(),
                    values,
                },
                m,
                delta / (4.0 * kappa),
            )?;
            extension::extend_full(&problem, &complement, &opts.extension)?.functionals
        };
        let mut distances = vec![0.0f64; tests.len()];
        let mut norm_excess = f64::NEG_INFINITY;
        let mut additivity: f64 = 0.0;
        for (t, g) in functionals.iter().enumerate() {
            let psi = functional_from_coordinates(a, g, &basis)?;
            let parts = algebra::jordan_decompose_functional(&psi)?;
            let total = psi.norm()?;
            additivity = additivity.max((total - parts.positive.norm()? - parts.negative.norm()?).abs());
            norm_excess = norm_excess.max(total - phi_norms[t]);
            for (i, xc) in test_coords.iter().enumerate() {
                let v: f64 = g.iter().zip(xc).map(|(a, b)| a * b).sum();
                distances[i] = distances[i].max((v - phi_tests[i][t]).abs());
            }
        }
        let system: Vec<Element> = y
            .iter()
            .map(|c| {
                let mut acc = a.zero();
                for (ci, e) in c.iter().zip(&basis) {
                    acc = acc.combine(1.0, e, *ci)?;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let rep = represent_system(&system, &sample)?;
        let worst_case = (0..tests.len())
            .map(|i| {
                let per_node = (0..phi.len())
                    .into_par_iter()
                    .map(|t| {
                        let rho = phi.at(t);
                        let bound = phi_norms[t] + 1.5 * delta;
                        let moments = system.iter().map(|s| rho.pair(s)).collect::<Result<Vec<_>>>()?;
                        let up = lp_envelope_values(&rep.values, &moments, &test_reps[i], bound, Direction::Max)?;
                        let lo = lp_envelope_values(&rep.values, &moments, &test_reps[i], bound, Direction::Min)?;
                        let v = phi_tests[i][t];
                        Ok((up.value - v).max(v - lo.value).max(0.0))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(per_node.into_iter().fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?;
        stages.push(StageReport {
            stage: n,
            delta,
            subspace_dim: y.len(),
            distances,
            worst_case,
            norm_excess,
            additivity_residual: additivity,
        });
    }
    Ok(StudyReport {
        stages,
        sample_size: sample.len(),
        isometry_defect: defect,
    })
}

/// `x` as an element of the span of `system`, if it lies there.
pub fn in_span(x: &Element, system: &[Element]) -> Result<bool> {
    let basis = x_basis(x);
    let cols = system.iter().map(|y| coordinates(y, &basis)).collect::<Result<Vec<_>>>()?;
    let xc = DVector::from_vec(coordinates(x, &basis)?);
    let span = subspace::orthonormalize(&subspace::from_vectors(basis.len(), &cols));
    Ok(subspace::residual_norm(&span, &xc) <= 1e-10 * (1.0 + xc.norm()))
}

fn x_basis(x: &Element) -> Vec<Element> {
    let blocks: Vec<usize> = x.blocks().iter().map(|m| m.nrows()).collect();
    AlgebraDescriptor::new(blocks).expect("element blocks").selfadjoint_basis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Grid;

    #[test]
    fn commutative_sample_has_vertices() {
        let a = AlgebraDescriptor::new(vec![1, 1]).unwrap();
        let s = sample_state_space(&a, 5, 1).unwrap();
        let x = Element::diagonal(&a, &[1.0, -1.0]).unwrap();
        let v = kadison_represent(&x, &s).unwrap();
        assert_eq!(&v[..2], &[1.0, -1.0]);
        assert!(s.pure[0] && s.pure[1]);
    }

    #[test]
    fn unit_represents_as_ones() {
        let a = AlgebraDescriptor::new(vec![2, 1]).unwrap();
        let s = sample_state_space(&a, 30, 2).unwrap();
        for v in kadison_represent(&a.unit(), &s).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn m2_sample_is_nearly_isometric() {
        let a = AlgebraDescriptor::new(vec![2]).unwrap();
        let s = sample_state_space(&a, 500, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Element> = (0..100).map(|_| a.random_selfadjoint(&mut rng)).collect();
        let d = isometry_defect(&xs, &s).unwrap();
        assert!((0.0..=0.05).contains(&d), "{d}");
    }

    #[test]
    fn envelope_in_system_is_forced() {
        let a = AlgebraDescriptor::new(vec![1, 1, 1]).unwrap();
        let s = sample_state_space(&a, 3, 0).unwrap();
        let rho = FunctionalRep::diagonal(&a, &[0.5, -0.25, 0.1]).unwrap();
        let y = Element::diagonal(&a, &[1.0, 2.0, 0.0]).unwrap();
        let x = y.scale(3.0);
        for dir in [Direction::Max, Direction::Min] {
            let e = lp_envelope(&rho, &[y.clone()], &x, rho.norm().unwrap(), dir, &s).unwrap();
            assert!((e.value - rho.pair(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn min_is_negated_max() {
        let a = AlgebraDescriptor::new(vec![1, 1, 1, 1]).unwrap();
        let s = sample_state_space(&a, 4, 0).unwrap();
        let rho = FunctionalRep::diagonal(&a, &[0.3, -0.2, 0.1, 0.0]).unwrap();
        let x = Element::diagonal(&a, &[0.4, -1.0, 2.0, 0.5]).unwrap();
        let sys = [a.unit()];
        let up = lp_envelope(&rho, &sys, &x.scale(-1.0), 1.0, Direction::Max, &s).unwrap();
        let lo = lp_envelope(&rho, &sys, &x, 1.0, Direction::Min, &s).unwrap();
        assert!((lo.value + up.value).abs() < 1e-12);
    }

    #[test]
    fn norm_cap_infeasibility_is_named() {
        let a = AlgebraDescriptor::new(vec![1, 1]).unwrap();
        let s = sample_state_space(&a, 2, 0).unwrap();
        let rho = FunctionalRep::diagonal(&a, &[1.0, 0.0]).unwrap();
        let err = lp_envelope(&rho, &[a.unit()], &a.unit(), 0.5, Direction::Max, &s).unwrap_err();
        assert!(err.to_string().contains("norm cap"), "{err}");
    }

    #[test]
    fn full_system_without_slack_gives_phi() {
        let a = AlgebraDescriptor::new(vec![2]).unwrap();
        let grid = Grid::unit_interval(3).unwrap();
        let phi = MapField::from_fn(grid, a.clone(), |_, s| {
            FunctionalRep::new(
                &a,
                vec![CMatrix::from_fn(2, 2, |i, j| match (i, j) {
                    (0, 0) => C64::new(s - 0.5, 0.0),
                    (1, 1) => C64::new(0.3, 0.0),
                    (0, 1) => C64::new(0.1, 0.2),
                    _ => C64::new(0.1, -0.2),
                })],
            )
        })
        .unwrap();
        let sample = sample_state_space(&a, 40, 1).unwrap().with_spectral_states_of_field(&phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = a.random_selfadjoint(&mut rng);
        let env = envelope_field(&phi, &a.selfadjoint_basis(), &x, 0.0, &sample).unwrap();
        let want = phi.evaluate(&x).unwrap();
        for t in 0..3 {
            assert!((env.upper.0[t] - want.0[t]).abs() < 1e-9);
            assert!((env.lower.0[t] - want.0[t]).abs() < 1e-9);
        }
    }
}
