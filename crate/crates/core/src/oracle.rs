//! Brute-force and alternative-formulation cross-checks.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::seminorm::PNorm;
use crate::space::Grid;

/// A box `center ± half` (per coordinate) containing `{c : ‖M c‖_p ≤ R}`.
pub fn coefficient_box(m: &DMatrix<f64>, p: PNorm, radius: f64) -> (Vec<f64>, f64) {
    let k = m.ncols();
    let gamma = match p {
        PNorm::LInf => (m.nrows() as f64).sqrt(),
        _ => 1.0,
    };
    let smin = m.clone().svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = if smin > 0.0 { gamma * radius / smin } else { radius };
    (vec![0.0; k], half * (1.0 + 1e-9))
}

/// Minimum of a convex function by repeatedly zooming a tensor grid around the best point.
/// `f` receives a `k × N` matrix of points and returns one value per column
/// (`+∞` marks infeasible points).
pub fn zoom_minimize<F>(center: &[f64], half: f64, f: F) -> f64
where
    F: Fn(&DMatrix<f64>) -> Vec<f64>,
{
    let k = center.len();
    if k == 0 {
        return f(&DMatrix::zeros(0, 1))[0];
    }
    let per_axis: usize = match k {
        1 => 401,
        2 => 41,
        _ => 11,
    };
    let window = 4.0;
    let mut c = center.to_vec();
    let mut h = half;
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let step = 2.0 * h / (per_axis - 1) as f64;
        let total = per_axis.pow(k as u32);
        let pts = DMatrix::from_fn(k, total, |i, j| {
            let idx = (j / per_axis.pow(i as u32)) % per_axis;
            c[i] - h + step * idx as f64
        });
        let vals = f(&pts);
        let mut arg = None;
        for (j, &v) in vals.iter().enumerate() {
            if v < best {
                best = v;
                arg = Some(j);
            }
        }
        if let Some(j) = arg {
            c = pts.column(j).iter().cloned().collect();
        }
        h = window * step;
        let scale = 1.0 + c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if h < 1e-13 * scale {
            break;
        }
    }
    best
}

fn solve(
    nvar: usize,
    q: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
) -> Result<Vec<f64>> {
    let m = rows.len();
    let (mut ii, mut jj, mut vv, mut b) = (vec![], vec![], vec![], vec![]);
    for (r, (terms, rhs)) in rows.into_iter().enumerate() {
        for (j, a) in terms {
            if a != 0.0 {
                ii.push(r);
                jj.push(j);
                vv.push(a);
            }
        }
        b.push(rhs);
    }
    let a = CscMatrix::new_from_triplets(m, nvar, ii, jj, vv);
    let p = CscMatrix::zeros((nvar, nvar));
    let cones = [SupportedConeT::NonnegativeConeT(m)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-11)
        .tol_gap_rel(1e-11)
        .tol_feas(1e-11)
        .max_iter(400)
        .build()
        .map_err(|e| Error::Solver(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings);
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(solver.solution.x.clone()),
        s => Err(Error::Solver(format!("oracle LP stopped with {s:?}"))),
    }
}

/// Optimal total variation of a selection in the tube `[u, l]`, by an interior-point LP.
pub fn tv_lp_oracle(u: &[f64], l: &[f64], grid: &Grid) -> Result<f64> {
    let n = u.len();
    let edges = grid.edges();
    let nvar = n + edges.len();
    let mut q = vec![0.0; n];
    q.extend(std::iter::repeat(1.0).take(edges.len()));
    let mut rows = Vec::new();
    for i in 0..n {
        rows.push((vec![(i, 1.0)], l[i]));
        rows.push((vec![(i, -1.0)], -u[i]));
    }
    for (r, e) in edges.iter().enumerate() {
        let s = n + r;
        rows.push((vec![(e.a, 1.0), (e.b, -1.0), (s, -1.0)], 0.0));
        rows.push((vec![(e.a, -1.0), (e.b, 1.0), (s, -1.0)], 0.0));
    }
    let x = solve(nvar, q, rows)?;
    Ok(edges.iter().map(|e| (x[e.a] - x[e.b]).abs()).sum())
}

/// Dual of `max Σ_s w_s x̂(s)` subject to `Σ_s w_s ŷ_i(s) = φ_i`, `Σ|w_s| ≤ B`:
/// `min_c Σ c_i φ_i + B·max_s |x̂(s) − Σ c_i ŷ_i(s)|`.
pub fn dual_envelope(features: &[Vec<f64>], phi: &[f64], target: &[f64], bound: f64) -> Result<f64> {
    let m = features.len();
    let s_count = target.len();
    let tau = m;
    let mut q = phi.to_vec();
    q.push(bound);
    let mut rows = Vec::with_capacity(2 * s_count);
    for s in 0..s_count {
        // τ ≥ x̂(s) − Σ c_i ŷ_i(s)  and  τ ≥ −(…)
        let mut a: Vec<(usize, f64)> = (0..m).map(|i| (i, -features[i][s])).collect();
        a.push((tau, -1.0));
        rows.push((a, -target[s]));
        let mut a: Vec<(usize, f64)> = (0..m).map(|i| (i, features[i][s])).collect();
        a.push((tau, -1.0));
        rows.push((a, target[s]));
    }
    let x = solve(m + 1, q.clone(), rows)?;
    let worst = (0..s_count)
        .map(|s| (target[s] - (0..m).map(|i| x[i] * features[i][s]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    Ok((0..m).map(|i| x[i] * phi[i]).sum::<f64>() + bound * worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoom_finds_quadratic_minimum() {
        let v = zoom_minimize(&[0.0, 0.0], 10.0, |pts| {
            pts.column_iter()
                .map(|c| (c[0] - 1.0 / 3.0).powi(2) + 2.0 * (c[1] + 0.7).abs() + 0.5)
                .collect()
        });
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zoom_one_dimensional_sqrt3() {
        let v = zoom_minimize(&[0.0], 5.0, |pts| {
            pts.column_iter().map(|c| -c[0] + 2.0 * (c[0] * c[0] + 1.0).sqrt()).collect()
        });
        assert!((v - 3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn tv_oracle_constant_tube() {
        let g = Grid::unit_interval(5).unwrap();
        let v = tv_lp_oracle(&[-1.0; 5], &[1.0; 5], &g).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn dual_envelope_unit_only() {
        // F = span{1}, φ(1) = 0: weights sum to zero, so the optimum is (c/2)(max x̂ − min x̂)
        let features = vec![vec![1.0; 4]];
        let v = dual_envelope(&features, &[0.0], &[0.2, -0.9, 0.5, 0.1], 2.0).unwrap();
        assert!((v - 1.4).abs() < 1e-7, "{v}");
    }
}
