use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 8")]
    BadGridSize(usize),
    #[error("box length must be positive and finite, got {0}")]
    BadBoxLength(f64),
    #[error("invalid field configuration: {0}")]
    BadFields(String),
    #[error("laser vector potential requested but the laser is switched off")]
    LaserOff,
    #[error("state is not normalized: norm = {0}")]
    NotNormalized(f64),
    #[error("no bracket found for target {target} with D = {d}: {reason}")]
    NoBracket { d: f64, target: f64, reason: String },
    #[error("tuned quantity is not monotone in V0 near V0 = {0}")]
    NotMonotone(f64),
    #[error("well with V0 = {0} is subcritical; no quasibound state is embedded in the continuum")]
    Subcritical(f64),
    #[error("no bound state in the gap")]
    NoBoundState,
    #[error("step rejected: norm error {error:e} exceeds {limit:e} at t = {time}")]
    StepRejected { time: f64, error: f64, limit: f64 },
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("positron spectrum needs the positive-energy initial set to be evolved")]
    MissingPositiveSet,
    #[error("spectrum is empty")]
    EmptySpectrum,
    #[error("time series invalid: {0}")]
    BadSeries(String),
    #[error("fit window has {found} samples, need at least {needed}")]
    WindowTooShort { found: usize, needed: usize },
    #[error("no half-maximum crossing on the {0} side of the peak")]
    NoCrossing(&'static str),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("convergence check failed: {0}")]
    NonConvergence(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error: 2 config, 3 invariant, 4 numeric convergence, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::BadGridSize(_)
            | Error::BadBoxLength(_)
            | Error::BadFields(_)
            | Error::BadSchedule(_)
            | Error::LaserOff
            | Error::Subcritical(_) => 2,
            Error::Invariant(_) | Error::NotNormalized(_) => 3,
            Error::NoBracket { .. }
            | Error::NotMonotone(_)
            | Error::StepRejected { .. }
            | Error::NonConvergence(_)
            | Error::Eigensolver(_)
            | Error::WindowTooShort { .. }
            | Error::NoCrossing(_) => 4,
            _ => 1,
        }
    }
}
