use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("element is not selfadjoint (residual {residual:.3e})")]
    NotSelfAdjoint { residual: f64 },

    #[error("eigensolver failed on block {block}: {reason}")]
    Eigen { block: usize, reason: String },

    #[error("spectrum of h leaves [0, 1]: eigenvalue {eigenvalue}")]
    SpectrumOutOfRange { eigenvalue: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("cover leaves node {node} uncovered")]
    CoverIncomplete { node: usize },

    #[error("invalid vector space model: {0}")]
    Model(String),

    #[error("invalid seminorm: {0}")]
    Seminorm(String),

    #[error("coercivity failure at node {node}: margin {margin:.3e} along direction {direction:?}")]
    Coercivity {
        node: usize,
        margin: f64,
        direction: Vec<f64>,
    },

    #[error("domination violated at node {node}: excess {excess:.3e}")]
    Domination { node: usize, excess: f64 },

    #[error("inconsistent envelopes at node {node}: u = {upper}, l = {lower}")]
    EnvelopeOrder { node: usize, upper: f64, lower: f64 },

    #[error("envelope optimum sits on the radius boundary at node {node} (R = {radius:.3e})")]
    RadiusTooSmall { node: usize, radius: f64 },

    #[error("infeasible tube at node {node}: u = {upper} > l = {lower}")]
    InfeasibleTube { node: usize, upper: f64, lower: f64 },

    #[error("{what}: solver gives {solver}, oracle gives {oracle}")]
    OracleMismatch { what: String, solver: f64, oracle: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("extension step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("map is not in diagonal form: {0}")]
    NotDiagonal(String),

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error means a mathematical check failed (as opposed to bad input).
    pub fn is_verification_failure(&self) -> bool {
        match self {
            Error::Coercivity { .. }
            | Error::Domination { .. }
            | Error::EnvelopeOrder { .. }
            | Error::RadiusTooSmall { .. }
            | Error::InfeasibleTube { .. }
            | Error::OracleMismatch { .. } => true,
            Error::Step { source, .. } => source.is_verification_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
