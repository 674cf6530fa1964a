use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("axis {axis} out of range for array of rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("fewer than 3 time samples")]
    FewTimeSamples,

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("component {component} is not present in the dataset ({available} components)")]
    MissingComponent { component: usize, available: usize },

    #[error("weak-form transfer plan infeasible: {0}")]
    InfeasibleTransfer(String),

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("simulation aborted: {0}")]
    SimulationAborted(String),

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
