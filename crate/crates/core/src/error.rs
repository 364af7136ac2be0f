use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("negative input {value} to {what}")]
    NegativeInput { what: &'static str, value: f64 },

    #[error("trace line {line}: {message}")]
    TraceParse { line: u64, message: String },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("infeasible slot {slot}: {reason}")]
    InfeasibleSlot { slot: usize, reason: String },

    #[error("internal consistency fault at slot {slot}: {message}")]
    Consistency { slot: usize, message: String },

    #[error(
        "look-ahead search space of {nodes:.3e} nodes exceeds the limit of {limit:.3e}; \
         try an energy grid step of at least {suggested_step:.4} kWh"
    )]
    SearchSpace {
        nodes: f64,
        limit: f64,
        suggested_step: f64,
    },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
