use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown {kind} preset `{id}`")]
    UnknownPreset { kind: &'static str, id: String },

    #[error("{kind} preset `{id}` expects {expected} parameter(s), got {got}")]
    ArityMismatch {
        kind: &'static str,
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),

    #[error("time {t} lies outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("{player} control {value} is not a member of the control grid")]
    ControlNotInGrid { player: &'static str, value: f64 },

    #[error("no quadrature node survives cutoff {cutoff}")]
    NoNodeSurvives { cutoff: f64 },

    #[error("time step {dt} exceeds the monotonicity bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("time {0} is not a node of the value grid")]
    OffGridTime(f64),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
