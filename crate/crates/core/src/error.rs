use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("the point at infinity has no distance in the base metric")]
    AtInfinity,

    #[error("zero-length segment")]
    DegenerateSegment,

    #[error("unsafe radius {radius}: a segment reaches norm {norm} within the cut margin {margin}")]
    UnsafeRadius { radius: f64, norm: f64, margin: f64 },

    #[error("collinear segments overlap on a positive-length piece: {0}")]
    Overlap(String),

    #[error("ambient spaces differ")]
    SpaceMismatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("oracle-scale only: support has {edges} edges, the exhaustive limit is {cap}")]
    OracleScale { edges: usize, cap: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("generator is inconsistent between radii {inner} and {outer}: {detail}")]
    InconsistentGenerator { inner: f64, outer: f64, detail: String },

    #[error(
        "a single point at infinity requires the sup-norm model; \
         Kuratowski-embed the intrinsic space first"
    )]
    NoSinglePointAtInfinity,

    #[error("profile was built for generator `{expected}`, not `{found}`")]
    ProfileMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
