use thiserror::Error;

/// Errors raised by the solvers, diagnostics and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("boundary sampling: {0}")]
    Sampling(String),

    #[error("degenerate normal at boundary point ({x:.6}, {y:.6}): |grad| = {norm:e}")]
    DegenerateNormal { x: f64, y: f64, norm: f64 },

    #[error("obstacle never detaches: matching function has no sign change on ({lo:e}, {hi:e}]")]
    NoDetachment { lo: f64, hi: f64 },

    #[error("matching root at a = {a:e} has nonnegative obstacle slope {slope:e}")]
    InvalidMatching { a: f64, slope: f64 },

    #[error("matching function has {count} sign changes; contact radius is not unique")]
    MultipleRoots { count: usize },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("radius {r} outside [0, {max}]")]
    OutOfRange { r: f64, max: f64 },

    #[error("exterior problem has no solution in dimension {0}")]
    Nonexistence(usize),

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("interpolation stencil leaves the domain near ({x:.6}, {y:.6})")]
    Interpolation { x: f64, y: f64 },

    #[error("invalid conductivity: {0}")]
    InvalidConductivity(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
