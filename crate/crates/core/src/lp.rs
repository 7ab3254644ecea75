//! Small dense linear programs on top of `minilp`.

use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Default)]
pub(crate) struct LinearProgram {
    cost: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
}

pub(crate) struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        LinearProgram::default()
    }

    pub fn add_var(&mut self, cost: f64, bounds: (f64, f64)) -> usize {
        self.cost.push(cost);
        self.bounds.push(bounds);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push((terms, cmp, rhs));
    }

    /// Minimize `costᵀ x` over the rows and bounds.
    pub fn minimize(&self) -> Result<LpSolution> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = self
            .cost
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (terms, cmp, rhs) in &self.rows {
            let mut merged = BTreeMap::new();
            for &(j, a) in terms {
                *merged.entry(j).or_insert(0.0) += a;
            }
            let expr: Vec<(Variable, f64)> = merged
                .into_iter()
                .filter(|(_, a)| *a != 0.0)
                .map(|(j, a)| (vars[j], a))
                .collect();
            let op = match cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(expr.as_slice(), op, *rhs);
        }
        match problem.solve() {
            Ok(sol) => Ok(LpSolution {
                objective: sol.objective(),
                x: vars.iter().map(|&v| sol[v]).collect(),
            }),
            Err(minilp::Error::Infeasible) => Err(Error::Infeasible("linear program".into())),
            Err(minilp::Error::Unbounded) => Err(Error::Solver("linear program is unbounded".into())),
        }
    }
}
