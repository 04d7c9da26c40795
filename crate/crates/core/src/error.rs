use thiserror::Error;

/// Errors raised while building models, schedules, or running dynamics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown basis label `{0}`")]
    UnknownLabel(String),

    #[error("singular schedule at t = {t}: {detail}")]
    SingularSchedule { t: f64, detail: String },

    #[error("dressed-frame verification failed: {check} residual {residual:.3e} at t = {t}")]
    FrameVerification {
        check: &'static str,
        residual: f64,
        t: f64,
    },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("ambiguous zero eigenvalue: |eta| = {value:.3e} lies between tolerance {tol:.1e} and gap threshold {gap:.1e}")]
    DegenerateEigenvalue { value: f64, tol: f64, gap: f64 },

    #[error("integration failed at step {step} (t = {t}): {detail}")]
    Integration { step: usize, t: f64, detail: String },

    #[error("at mu = ({mu1}, {mu2}, {mu3}): {source}")]
    AtMuPoint {
        mu1: f64,
        mu2: f64,
        mu3: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv parse error on line {line}: {detail}")]
    Csv { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Integration { .. }
            | Error::DegenerateEigenvalue { .. }
            | Error::SingularSchedule { .. }
            | Error::FrameVerification { .. } => true,
            Error::AtMuPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
