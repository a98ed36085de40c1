use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or argument mismatch detected before any numerics run.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A chart point (or a path sample) left the declared domain box.
    #[error("point {point:?} is outside the chart domain")]
    Domain { point: Vec<f64> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Curvature parameter c = 0 was requested.
    #[error("c = 0 (the Euclidean/affine rolling case) is not supported; the fiber metric needs 1/c")]
    EuclideanCase,

    #[error("wrong case: {0}")]
    WrongCase(String),

    /// Intersection dimension of V and its h-orthogonal at least two.
    #[error("inconsistent subspace data: {0}")]
    Inconsistent(String),

    #[error("not a warping function: {0}")]
    NotAWarp(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code associated with this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::EuclideanCase | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn require_nonzero_c(c: f64) -> Result<()> {
    if c == 0.0 {
        Err(Error::EuclideanCase)
    } else if !c.is_finite() {
        Err(Error::arg(format!("curvature parameter must be finite, got {c}")))
    } else {
        Ok(())
    }
}
