use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("degenerate critical point near x = {x} (U'' = {curvature:e})")]
    DegenerateExtremum { x: f64, curvature: f64 },

    #[error("U' has no sign change inside the search window")]
    NoMinimum,

    #[error("extrema do not interlace: {0}")]
    NonInterlaced(String),

    #[error("invalid Lévy model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state overflow: |x| = {value:e} exceeds bound {bound:e}")]
    Overflow { value: f64, bound: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("too few samples: {got} < {needed}")]
    TooFewSamples { got: usize, needed: usize },

    #[error("censoring fraction {fraction:.4} exceeds limit {limit}")]
    ExcessCensoring { fraction: f64, limit: f64 },

    #[error("unclassified snapshot fraction {fraction:.4} at t = {time} is not below {limit}")]
    UnclassifiedExcess { time: f64, fraction: f64, limit: f64 },

    #[error("expected a two-well landscape, found {0} wells")]
    NotTwoWell(usize),

    #[error("wells have equal depth (|ΔU| = {0:e})")]
    EqualDepth(f64),

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
