use serde::{Deserialize, Serialize};

/// Hermiticity tolerance on matrix entries.
pub const TOL_HERM: f64 = 1e-12;
/// Eigenvalues at or below this magnitude are treated as zero when splitting.
pub const ZERO_EIGENVALUE: f64 = 1e-12;
/// Allowed imaginary residue of quantities that must be real.
pub const IMAG_RESIDUE: f64 = 1e-10;
/// Residual threshold for exact identities (reconstruction, additivity).
pub const RESIDUAL: f64 = 1e-10;
/// Slack for solver-backed inequalities.
pub const SOLVER: f64 = 1e-8;

/// Effective tolerances of a run; echoed in every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub tol_herm: f64,
    pub residual: f64,
    pub solver: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_herm: TOL_HERM,
            residual: RESIDUAL,
            solver: SOLVER,
        }
    }
}

impl Tolerances {
    /// Apply a `KEY=VAL` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VAL, got `{assignment}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("not a number: `{value}`"))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance must be positive and finite: {value}"));
        }
        match key.trim() {
            "tol_herm" => self.tol_herm = value,
            "residual" => self.residual = value,
            "solver" => self.solver = value,
            other => return Err(format!("unknown tolerance key `{other}`")),
        }
        Ok(())
    }
}
