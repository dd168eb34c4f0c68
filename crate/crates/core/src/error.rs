use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An outcome was coded into a label the law does not know about.
    #[error("outcome `{0}` is not in the law's spectrum (mis-coded outcome)")]
    UnknownLabel(String),

    #[error("law has no recorded trials")]
    EmptyLaw,

    #[error("stability check needs at least {needed} complete blocks, found {found}")]
    InsufficientBlocks { needed: usize, found: usize },

    #[error("laws are not comparable: {0}")]
    IncompatibleLaws(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("eigenvalues must be strictly increasing")]
    DegenerateSpectrum,

    #[error("superposition annihilates completely (norm {0:e})")]
    DestructiveAnnihilation(f64),

    #[error("specimen was destroyed by an earlier measurement; realize a new generation")]
    DestroyedSpecimen,

    #[error("specimen carries no guiding wave, guided coding unavailable")]
    GuidedCodingUnavailable,

    #[error("flight time must be positive, got {0}")]
    NonPositiveFlightTime(f64),

    #[error("no transform links `{from}` to `{to}`")]
    UnlinkedObservable { from: String, to: String },

    #[error(
        "laws are not jointly representable: residual {residual:e} exceeds tolerance {tolerance:e}"
    )]
    InconsistentLaws { residual: f64, tolerance: f64 },

    #[error("amplitude vanishes at z = {0}, quantum potential undefined")]
    NodeSingularity(f64),

    #[error("wave field vanishes identically")]
    ZeroField,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
