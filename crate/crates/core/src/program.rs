//! Convex programs of the form
//!
//! ```text
//! minimize  ½ vᵀ diag(q) v + cᵀ v + k + Σ_i s_i ‖M_i v + b_i‖_{p_i}
//! subject to  lo ≤ v ≤ hi,  ‖B v‖_p ≤ R
//! ```
//!
//! Polyhedral instances go to the simplex solver, the rest to Clarabel.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{Cmp, LinearProgram};
use crate::seminorm::PNorm;

#[derive(Clone, Debug)]
pub(crate) struct Atom {
    pub scale: f64,
    pub p: PNorm,
    pub mat: DMatrix<f64>,
    pub off: DVector<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct Ball {
    pub p: PNorm,
    pub mat: DMatrix<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Program {
    pub nvar: usize,
    pub atoms: Vec<Atom>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub quadratic: Option<Vec<f64>>,
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub ball: Option<Ball>,
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub value: f64,
    pub point: Vec<f64>,
}

impl Program {
    pub fn new(nvar: usize) -> Self {
        Program {
            nvar,
            linear: vec![0.0; nvar],
            ..Program::default()
        }
    }

    pub fn evaluate(&self, v: &[f64]) -> f64 {
        let x = DVector::from_column_slice(v);
        let mut total = self.constant;
        for (c, xi) in self.linear.iter().zip(v) {
            total += c * xi;
        }
        if let Some(q) = &self.quadratic {
            for (qi, xi) in q.iter().zip(v) {
                total += 0.5 * qi * xi * xi;
            }
        }
        for atom in &self.atoms {
            if atom.scale != 0.0 {
                total += atom.scale * atom.p.apply(&(&atom.mat * &x + &atom.off));
            }
        }
        total
    }

    fn is_polyhedral(&self) -> bool {
        self.quadratic.is_none()
            && self.atoms.iter().all(|a| a.p != PNorm::L2 || a.scale == 0.0)
            && self.ball.as_ref().map_or(true, |b| b.p != PNorm::L2)
    }

    pub fn minimize(&self) -> Result<Solution> {
        if self.nvar == 0 {
            return Ok(Solution {
                value: self.evaluate(&[]),
                point: vec![],
            });
        }
        let point = if self.is_polyhedral() {
            self.solve_lp()?
        } else {
            self.solve_conic()?
        };
        let value = self.evaluate(&point);
        if !value.is_finite() {
            return Err(Error::Solver("non-finite optimum".into()));
        }
        Ok(Solution { value, point })
    }

    fn solve_lp(&self) -> Result<Vec<f64>> {
        let mut lp = LinearProgram::new();
        for j in 0..self.nvar {
            let (lo, hi) = match &self.bounds {
                Some((lo, hi)) => (lo[j], hi[j]),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            };
            lp.add_var(self.linear[j], (lo, hi));
        }
        let row = |m: &DMatrix<f64>, i: usize, sign: f64| -> Vec<(usize, f64)> {
            (0..m.ncols()).map(|j| (j, sign * m[(i, j)])).collect()
        };
        for atom in &self.atoms {
            if atom.scale == 0.0 {
                continue;
            }
            match atom.p {
                PNorm::L1 => {
                    for i in 0..atom.mat.nrows() {
                        let s = lp.add_var(atom.scale, (0.0, f64::INFINITY));
                        push_abs_rows(&mut lp, row(&atom.mat, i, 1.0), s, atom.off[i]);
                    }
                }
                PNorm::LInf => {
                    let s = lp.add_var(atom.scale, (0.0, f64::INFINITY));
                    for i in 0..atom.mat.nrows() {
                        push_abs_rows(&mut lp, row(&atom.mat, i, 1.0), s, atom.off[i]);
                    }
                }
                PNorm::L2 => unreachable!("routed to the conic solver"),
            }
        }
        if let Some(ball) = &self.ball {
            match ball.p {
                PNorm::L1 => {
                    let mut sum = Vec::new();
                    for i in 0..ball.mat.nrows() {
                        let s = lp.add_var(0.0, (0.0, f64::INFINITY));
                        push_abs_rows(&mut lp, row(&ball.mat, i, 1.0), s, 0.0);
                        sum.push((s, 1.0));
                    }
                    lp.add_row(sum, Cmp::Le, ball.radius);
                }
                PNorm::LInf => {
                    for i in 0..ball.mat.nrows() {
                        lp.add_row(row(&ball.mat, i, 1.0), Cmp::Le, ball.radius);
                        lp.add_row(row(&ball.mat, i, 1.0), Cmp::Ge, -ball.radius);
                    }
                }
                PNorm::L2 => unreachable!("routed to the conic solver"),
            }
        }
        let sol = lp.minimize()?;
        Ok(sol.x[..self.nvar].to_vec())
    }

    fn solve_conic(&self) -> Result<Vec<f64>> {
        let mut builder = ConicBuilder::new(self.nvar);
        let mut q = self.linear.clone();
        for atom in &self.atoms {
            if atom.scale == 0.0 {
                continue;
            }
            match atom.p {
                PNorm::L2 => {
                    let t = builder.add_var();
                    q.push(atom.scale);
                    let mut rows = vec![(vec![(t, -1.0)], 0.0)];
                    for i in 0..atom.mat.nrows() {
                        rows.push((neg_row(&atom.mat, i), atom.off[i]));
                    }
                    builder.soc(rows);
                }
                PNorm::L1 => {
                    for i in 0..atom.mat.nrows() {
                        let s = builder.add_var();
                        q.push(atom.scale);
                        builder.abs_rows(&atom.mat, i, s, atom.off[i]);
                    }
                }
                PNorm::LInf => {
                    let s = builder.add_var();
                    q.push(atom.scale);
                    for i in 0..atom.mat.nrows() {
                        builder.abs_rows(&atom.mat, i, s, atom.off[i]);
                    }
                }
            }
        }
        if let Some((lo, hi)) = &self.bounds {
            for j in 0..self.nvar {
                if lo[j].is_finite() {
                    builder.nonneg(vec![(j, -1.0)], -lo[j]);
                }
                if hi[j].is_finite() {
                    builder.nonneg(vec![(j, 1.0)], hi[j]);
                }
            }
        }
        if let Some(ball) = &self.ball {
            match ball.p {
                PNorm::L2 => {
                    let mut rows = vec![(vec![], ball.radius)];
                    for i in 0..ball.mat.nrows() {
                        rows.push((neg_row(&ball.mat, i), 0.0));
                    }
                    builder.soc(rows);
                }
                PNorm::L1 => {
                    let mut sum = Vec::new();
                    for i in 0..ball.mat.nrows() {
                        let s = builder.add_var();
                        q.push(0.0);
                        builder.abs_rows(&ball.mat, i, s, 0.0);
                        sum.push((s, 1.0));
                    }
                    builder.nonneg(sum, ball.radius);
                }
                PNorm::LInf => {
                    for i in 0..ball.mat.nrows() {
                        let r: Vec<(usize, f64)> = (0..ball.mat.ncols()).map(|j| (j, ball.mat[(i, j)])).collect();
                        builder.nonneg(r, ball.radius);
                        builder.nonneg(neg_row(&ball.mat, i), ball.radius);
                    }
                }
            }
        }
        let n = builder.nvar;
        let p = match &self.quadratic {
            Some(diag) => {
                let idx: Vec<usize> = (0..self.nvar).collect();
                CscMatrix::new_from_triplets(n, n, idx.clone(), idx, diag.clone())
            }
            None => CscMatrix::zeros((n, n)),
        };
        let x = builder.solve(&p, &q)?;
        Ok(x[..self.nvar].to_vec())
    }
}

fn neg_row(m: &DMatrix<f64>, i: usize) -> Vec<(usize, f64)> {
    (0..m.ncols()).map(|j| (j, -m[(i, j)])).collect()
}

/// `s ≥ |row·v + b|` as two inequalities.
fn push_abs_rows(lp: &mut LinearProgram, row: Vec<(usize, f64)>, s: usize, b: f64) {
    let mut upper: Vec<(usize, f64)> = row.iter().map(|&(j, a)| (j, -a)).collect();
    upper.push((s, 1.0));
    lp.add_row(upper, Cmp::Ge, b);
    let mut lower = row;
    lower.push((s, 1.0));
    lp.add_row(lower, Cmp::Ge, -b);
}

#[derive(Clone, Copy)]
enum ConeKind {
    Nonneg,
    Soc,
}

/// Accumulates `A x + s = b, s ∈ K` row by row.
struct ConicBuilder {
    nvar: usize,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    cones: Vec<(ConeKind, usize)>,
}

impl ConicBuilder {
    fn new(nvar: usize) -> Self {
        ConicBuilder {
            nvar,
            rows: Vec::new(),
            cones: Vec::new(),
        }
    }

    fn add_var(&mut self) -> usize {
        self.nvar += 1;
        self.nvar - 1
    }

    /// `b − a·x ≥ 0`.
    fn nonneg(&mut self, a: Vec<(usize, f64)>, b: f64) {
        self.rows.push((a, b));
        match self.cones.last_mut() {
            Some((ConeKind::Nonneg, k)) => *k += 1,
            _ => self.cones.push((ConeKind::Nonneg, 1)),
        }
    }

    /// `(b_i − a_i·x)_i` in the second-order cone.
    fn soc(&mut self, rows: Vec<(Vec<(usize, f64)>, f64)>) {
        self.cones.push((ConeKind::Soc, rows.len()));
        self.rows.extend(rows);
    }

    /// `s ≥ |M_i v + b|`.
    fn abs_rows(&mut self, m: &DMatrix<f64>, i: usize, s: usize, b: f64) {
        let mut a: Vec<(usize, f64)> = (0..m.ncols()).map(|j| (j, m[(i, j)])).collect();
        a.push((s, -1.0));
        self.nonneg(a, -b);
        let mut a = neg_row(m, i);
        a.push((s, -1.0));
        self.nonneg(a, b);
    }

    fn solve(self, p: &CscMatrix<f64>, q: &[f64]) -> Result<Vec<f64>> {
        let m = self.rows.len();
        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        let mut b = Vec::with_capacity(m);
        for (r, (terms, rhs)) in self.rows.iter().enumerate() {
            for &(j, a) in terms {
                if a != 0.0 {
                    ii.push(r);
                    jj.push(j);
                    vv.push(a);
                }
            }
            b.push(*rhs);
        }
        let a = CscMatrix::new_from_triplets(m, self.nvar, ii, jj, vv);
        let cones: Vec<SupportedConeT<f64>> = self
            .cones
            .iter()
            .map(|&(kind, k)| match kind {
                ConeKind::Nonneg => SupportedConeT::NonnegativeConeT(k),
                ConeKind::Soc => SupportedConeT::SecondOrderConeT(k),
            })
            .collect();
        let mut last = SolverStatus::Unsolved;
        // Equilibration and the default regularization occasionally break down when the
        // optimum sits at a cone apex; later attempts relax them.
        for attempt in 0..4 {
            let mut settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .tol_gap_abs(1e-10)
                .tol_gap_rel(1e-10)
                .tol_feas(1e-10)
                .max_iter(200)
                .build()
                .map_err(|e| Error::Solver(e.to_string()))?;
            match attempt {
                1 => settings.equilibrate_enable = false,
                2 => settings.static_regularization_constant = 1e-6,
                3 => settings.max_step_fraction = 0.9,
                _ => {}
            }
            let mut solver = DefaultSolver::new(p, q, &a, &b, &cones, settings);
            solver.solve();
            match solver.solution.status {
                SolverStatus::Solved | SolverStatus::AlmostSolved => return Ok(solver.solution.x.clone()),
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                    return Err(Error::Infeasible("conic program".into()))
                }
                status => last = status,
            }
        }
        Err(Error::Solver(format!("conic solver stopped with {last:?}")))
    }
}
