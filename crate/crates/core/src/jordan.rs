//! Pointwise Jordan decomposition `φ = φ₊ − φ₋` of a map field and the
//! checks that go with it: norm additivity, separators, continuity under
//! refinement, the δ-continuity variant and locality for diagonal maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{self, op_norm, AlgebraDescriptor, Element, FunctionalRep};
use crate::error::{Error, Result};
use crate::field::MapField;
use crate::space::modulus_of_continuity;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormTriple {
    pub total: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub phi: MapField,
    pub plus: MapField,
    pub minus: MapField,
    pub norms: Vec<NormTriple>,
}

impl DecompositionResult {
    /// Wrap an arbitrary split `φ = plus − minus` (not necessarily minimal).
    pub fn from_parts(phi: MapField, plus: MapField, minus: MapField) -> Result<Self> {
        if plus.len() != phi.len() || minus.len() != phi.len() {
            return Err(Error::Shape("parts live on a different grid".into()));
        }
        let norms = (0..phi.len())
            .into_par_iter()
            .map(|t| {
                Ok(NormTriple {
                    total: phi.at(t).norm()?,
                    plus: plus.at(t).norm()?,
                    minus: minus.at(t).norm()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecompositionResult {
            phi,
            plus,
            minus,
            norms,
        })
    }

    /// `max_t ‖ρ_t − (ρ⁺_t − ρ⁻_t)‖_max`.
    pub fn reconstruction_residual(&self) -> f64 {
        (0..self.phi.len())
            .map(|t| {
                let diff = self.plus.at(t).sub(self.minus.at(t)).expect("same algebra");
                diff.max_abs_diff(self.phi.at(t))
            })
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all nodes and both parts.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for t in 0..self.phi.len() {
            lo = lo.min(self.plus.at(t).min_eigenvalue()?);
            lo = lo.min(self.minus.at(t).min_eigenvalue()?);
        }
        Ok(lo)
    }
}

pub fn decompose_map(phi: &MapField) -> Result<DecompositionResult> {
    let parts = phi
        .rho()
        .par_iter()
        .enumerate()
        .map(|(t, rho)| {
            algebra::jordan_decompose_functional(rho).map_err(|e| match e {
                Error::Eigen { block, reason } => Error::Eigen {
                    block,
                    reason: format!("node {t}: {reason}"),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (pos, neg): (Vec<FunctionalRep>, Vec<FunctionalRep>) =
        parts.into_iter().map(|p| (p.positive, p.negative)).unzip();
    let plus = MapField::new(phi.grid().clone(), phi.algebra().clone(), pos)?;
    let minus = MapField::new(phi.grid().clone(), phi.algebra().clone(), neg)?;
    DecompositionResult::from_parts(phi.clone(), plus, minus)
}

/// `max_t |‖φ‖(t) − ‖φ₊‖(t) − ‖φ₋‖(t)|`, recomputed from the parts.
pub fn verify_norm_additivity(result: &DecompositionResult) -> Result<f64> {
    let fresh = DecompositionResult::from_parts(result.phi.clone(), result.plus.clone(), result.minus.clone())?;
    Ok(fresh
        .norms
        .iter()
        .map(|n| (n.total - n.plus - n.minus).abs())
        .fold(0.0, f64::max))
}

/// Support projection of `ρ⁻`: `0 ≤ K ≤ 1`, `ρ⁺(K) = 0`, `ρ⁻(1 − K) = 0`.
/// Exact support orthogonality makes the result independent of `epsilon`.
pub fn separator(rho: &FunctionalRep, epsilon: f64) -> Result<Element> {
    if !(epsilon >= 0.0) {
        return Err(Error::Instance(format!("epsilon must be >= 0, got {epsilon}")));
    }
    algebra::negative_support(rho)
}

/// `1`, a seeded random `0 ≤ h ≤ 1` and `1 − h`.
pub fn default_test_elements(algebra: &AlgebraDescriptor, seed: u64) -> Vec<(String, Element)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = algebra.random_positive_contraction(&mut rng);
    let unit = algebra.unit();
    let rest = unit.sub(&h).expect("same algebra");
    vec![("unit".into(), unit), ("h".into(), h), ("unit_minus_h".into(), rest)]
}

/// `phi` followed by `k` interpolated refinements.
pub fn refinement_levels(phi: &MapField, k: usize) -> Vec<MapField> {
    let mut levels = vec![phi.clone()];
    for _ in 0..k {
        let next = levels.last().expect("nonempty").refine();
        levels.push(next);
    }
    levels
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpSeries {
    pub element: String,
    pub plus_jumps: Vec<f64>,
    pub minus_jumps: Vec<f64>,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub nodes: Vec<usize>,
    pub series: Vec<JumpSeries>,
    pub passes: bool,
}

/// Jumps below this are treated as exact continuity.
const JUMP_FLOOR: f64 = 1e-12;
/// Required shrink factor per refinement.
pub const SHRINK_FACTOR: f64 = 1.5;

fn shrinks(jumps: &[f64]) -> bool {
    jumps
        .windows(2)
        .all(|w| w[0] <= JUMP_FLOOR || w[0] / w[1].max(f64::MIN_POSITIVE) >= SHRINK_FACTOR)
}

/// Raw max jumps of `φ±(h)` across each level of a refinement sequence.
pub fn continuity_report(levels: &[MapField], tests: &[(String, Element)]) -> Result<ContinuityReport> {
    let decomposed = levels.iter().map(decompose_map).collect::<Result<Vec<_>>>()?;
    let mut series = Vec::with_capacity(tests.len());
    for (name, h) in tests {
        let mut plus_jumps = Vec::with_capacity(levels.len());
        let mut minus_jumps = Vec::with_capacity(levels.len());
        for d in &decomposed {
            let grid = d.phi.grid();
            plus_jumps.push(modulus_of_continuity(d.plus.evaluate(h)?.values(), grid).max_jump);
            minus_jumps.push(modulus_of_continuity(d.minus.evaluate(h)?.values(), grid).max_jump);
        }
        let passes = shrinks(&plus_jumps) && shrinks(&minus_jumps);
        series.push(JumpSeries {
            element: name.clone(),
            plus_jumps,
            minus_jumps,
            passes,
        });
    }
    Ok(ContinuityReport {
        nodes: levels.iter().map(MapField::len).collect(),
        passes: series.iter().all(|s| s.passes),
        series,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaContinuityReport {
    pub delta: f64,
    /// Largest excess of a jump of `‖φ‖` over `δ`.
    pub omega: f64,
    /// Smallest `bound − |φ±(x)(s) − φ±(x)(t)|` over edges, parts and test elements.
    pub min_slack: f64,
    pub worst_edge: Option<(usize, usize)>,
    pub passes: bool,
}

/// Checks `|φ±(x)(s) − φ±(x)(t)| ≤ (δ + ω)‖x‖ + 1e-8` on every edge.
pub fn delta_continuity_report(
    phi: &MapField,
    delta: f64,
    tests: &[(String, Element)],
) -> Result<DeltaContinuityReport> {
    let grid = phi.grid();
    let norm = phi.pointwise_norm()?;
    let omega = grid
        .edges()
        .iter()
        .map(|e| ((norm.0[e.a] - norm.0[e.b]).abs() - delta).max(0.0))
        .fold(0.0, f64::max);
    let d = decompose_map(phi)?;
    let mut min_slack = f64::INFINITY;
    let mut worst_edge = None;
    for (_, x) in tests {
        let xn = op_norm(x)?;
        let bound = (delta + omega) * xn + 1e-8;
        for part in [&d.plus, &d.minus] {
            let g = part.evaluate(x)?;
            for e in grid.edges() {
                let slack = bound - (g.0[e.a] - g.0[e.b]).abs();
                if slack < min_slack {
                    min_slack = slack;
                    worst_edge = Some((e.a, e.b));
                }
            }
        }
    }
    Ok(DeltaContinuityReport {
        delta,
        omega,
        min_slack,
        worst_edge,
        passes: min_slack >= 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub c: Vec<f64>,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub max_residual: f64,
    pub passes: bool,
}

/// For `A = ℂ^X` and `φ(x)(t) = c(t)·x(t)`: the parts must be `c±(t)·x(t)`.
pub fn locality_check(phi: &MapField, result: &DecompositionResult) -> Result<LocalityReport> {
    let n = phi.len();
    if phi.algebra().blocks() != vec![1; n].as_slice() {
        return Err(Error::NotDiagonal(format!(
            "algebra must be C^{n} over the same grid"
        )));
    }
    let weight = |f: &FunctionalRep, s: usize| f.blocks()[s][(0, 0)].re;
    let mut c = Vec::with_capacity(n);
    for t in 0..n {
        for s in 0..n {
            if s != t && weight(phi.at(t), s).abs() > 1e-12 {
                return Err(Error::NotDiagonal(format!(
                    "node {t} carries weight on point {s}"
                )));
            }
        }
        c.push(weight(phi.at(t), t));
    }
    let c_plus: Vec<f64> = c.iter().map(|v| v.max(0.0)).collect();
    let c_minus: Vec<f64> = c.iter().map(|v| (-v).max(0.0)).collect();
    let mut max_residual = 0.0f64;
    for t in 0..n {
        for s in 0..n {
            let (ep, em) = if s == t { (c_plus[t], c_minus[t]) } else { (0.0, 0.0) };
            max_residual = max_residual
                .max((weight(result.plus.at(t), s) - ep).abs())
                .max((weight(result.minus.at(t), s) - em).abs());
        }
    }
    Ok(LocalityReport {
        c,
        c_plus,
        c_minus,
        max_residual,
        passes: max_residual <= 1e-10,
    })
}
