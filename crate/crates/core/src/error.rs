use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation not supported for the {0} variant")]
    UnsupportedVariant(&'static str),

    #[error("set not representable on this type space: {0}")]
    UnrepresentableSet(String),

    #[error("point not representable on this type space: {0}")]
    UnrepresentablePoint(String),

    #[error("invalid type space: {0}")]
    InvalidSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel is reducible")]
    Reducible,

    #[error("kernel is periodic with period {period}")]
    Periodic { period: usize },

    #[error("invalid atom decomposition: {detail} (worst residual {residual:e})")]
    InvalidAtom { residual: f64, detail: String },

    #[error("all {order} coefficients of f vanish; f(s) is not positive for any s")]
    AssumptionViolated { order: usize },

    #[error("coefficients grow faster than geometrically; radius of convergence is zero")]
    RadiusZero,

    #[error("series diverges at s = {s}: {detail}")]
    Divergent { s: f64, detail: String },

    #[error("f(r) cannot be decided within the truncation tail bound (partial sum {partial}, tail estimate {tail}); candidates R = r = {radius} or R = {root}")]
    InconclusiveAtRadius {
        radius: f64,
        root: f64,
        partial: f64,
        tail: f64,
    },

    #[error("kernel is R-transient (f(R) = {f_at_r}); no R-invariant pair exists")]
    NotRecurrent { f_at_r: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("population exceeded the cap of {cap} individuals at step {step}")]
    Explosion {
        cap: u64,
        step: usize,
        partial: Vec<u64>,
    },

    #[error("{exploded} of {replicates} replicates exploded; estimates are unreliable")]
    UnreliableEstimate { exploded: usize, replicates: usize },

    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::UnsupportedVariant(_) => "unsupported-variant",
            Error::UnrepresentableSet(_) => "unrepresentable-set",
            Error::UnrepresentablePoint(_) => "unrepresentable-point",
            Error::InvalidSpace(_) => "invalid-space",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Reducible => "reducible",
            Error::Periodic { .. } => "periodic",
            Error::InvalidAtom { .. } => "invalid-atom",
            Error::AssumptionViolated { .. } => "assumption-violated",
            Error::RadiusZero => "radius-zero",
            Error::Divergent { .. } => "divergent",
            Error::InconclusiveAtRadius { .. } => "inconclusive-at-radius",
            Error::NotRecurrent { .. } => "not-recurrent",
            Error::NotApplicable(_) => "not-applicable",
            Error::Precondition(_) => "precondition",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Explosion { .. } => "explosion",
            Error::UnreliableEstimate { .. } => "unreliable-estimate",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit status: 3 for numerically inconclusive results, 1 for
    /// I/O failures, 2 for everything rejected up front.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InconclusiveAtRadius { .. }
            | Error::NonConvergence { .. }
            | Error::Divergent { .. }
            | Error::RadiusZero
            | Error::Explosion { .. }
            | Error::UnreliableEstimate { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
