use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("initial data construction failed at node {node} (x = {x}): log argument {arg}")]
    Construction { node: usize, x: f64, arg: f64 },

    #[error("grid does not cover the required support: {0}")]
    InsufficientGrid(String),

    #[error("Q + psi <= 0 at y = {y}, s = {s}")]
    Singularity { y: f64, s: f64 },

    #[error("blowup guard tripped at s = {s} (max value {max})")]
    Blowup { s: f64, max: f64 },

    #[error("non-finite value produced at s = {s}")]
    NumericalFailure { s: f64 },

    #[error("trajectory does not cover the requested window: {0}")]
    Coverage(String),

    #[error("refinement lost its sign enclosure at depth {depth}: {detail}")]
    RefinementFailed { depth: usize, detail: String },

    #[error("need at least {need} snapshots, got {got}")]
    TooFewSnapshots { need: usize, got: usize },
}
