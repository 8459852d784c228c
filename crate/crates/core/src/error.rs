use thiserror::Error;

/// Errors raised by the library.
///
/// `InvariantViolation` carries the tag of the identity that failed (for
/// example `"eq8"` or `"bullet2"`) so callers can report it as a failed
/// check rather than a bad input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("not nested: spectrum of the subtrahend is not contained in the minuend")]
    NotNested,
    #[error("subtraction underflow")]
    Underflow,
    #[error("sequence must be strictly increasing (position {0})")]
    NotIncreasing(usize),
    #[error("sequence needs at least {needed} terms, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("unknown sequence kind `{0}`")]
    UnknownKind(String),
    #[error("cut exceeds resolution: {0}")]
    CutExceedsResolution(String),
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(u32, u32),
    #[error("grid resolution {requested} exceeds cap {cap}")]
    ResolutionCap { requested: u32, cap: u32 },
    #[error("value not representable: {0}")]
    Overflow(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot certify M: {0}")]
    CannotCertifyM(String),
    #[error("prefix too short: {0}")]
    PrefixTooShort(String),
    #[error("beta is not o(alpha) on range: {0}")]
    NotDominated(String),
    #[error("junction breaks convexity: {0}")]
    JunctionBreaksConvexity(String),
    #[error("degree exceeds anchor: {0}")]
    DegreeExceedsAnchor(String),
    #[error("cut not pointwise-computable from the factored form: {0}")]
    CutNotComputable(String),
    #[error("scanned prefix exhausted at level {level}: {reason}")]
    PlanExhausted { level: usize, reason: String },
    #[error("invariant violation [{tag}]: {detail}")]
    InvariantViolation { tag: String, detail: String },
}

impl Error {
    pub(crate) fn invariant(tag: &str, detail: impl Into<String>) -> Self {
        Error::InvariantViolation {
            tag: tag.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
