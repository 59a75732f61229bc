use thiserror::Error;

/// Errors surfaced by the geometry pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular point: |grad P| = {grad_norm:.3e} is below the floor {floor:.3e}")]
    SingularPoint { grad_norm: f64, floor: f64 },
    #[error("point is farther than {limit:.3e} from every surface sample (distance {distance:.3e})")]
    NotNearVariety { distance: f64, limit: f64 },
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("degenerate quadric: design matrix rank {rank} < 14")]
    DegenerateQuadric { rank: usize },
    #[error("tube has an empty shading")]
    EmptyShading,
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
