use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("gradient output must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable belongs to a different tape")]
    ForeignTape,
    #[error("second-order not enabled: the inner gradient was recorded without tracking")]
    SecondOrderNotEnabled,
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("matrix is singular or ill-conditioned (condition estimate {cond:e})")]
    Singular { cond: f64 },
    #[error("biorthogonal retraction failed (condition estimate {cond:e})")]
    RetractionFailed { cond: f64 },
    #[error("not a valid SPD matrix: {0}")]
    NotSpd(String),
    #[error("unsupported for model kind {kind}: {what}")]
    Unsupported { kind: &'static str, what: &'static str },
    #[error("singular configuration: {0}")]
    SingularConfiguration(&'static str),
    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
