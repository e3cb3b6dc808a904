//! Experiment harness: builds datasets, freezes encoder features behind the
//! memory adapter, trains the reasoning module and reports per-family
//! accuracy, learning curves and few-shot sweeps.

pub mod audit;
pub mod config;
pub mod data;
pub mod encoders;
pub mod metrics;
pub mod report;
pub mod train;

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Io(_) => 3,
            HarnessError::Numeric(_) => 4,
        }
    }
}

impl From<vqprobe_nn::NnError> for HarnessError {
    fn from(e: vqprobe_nn::NnError) -> Self {
        use vqprobe_nn::NnError;
        match e {
            NnError::NonFiniteGradient(_) => HarnessError::Numeric(e.to_string()),
            NnError::Config(m) => HarnessError::Config(m),
            NnError::Io(io) => HarnessError::Io(io),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

/// Worker threads for evaluation: `VQPROBE_THREADS`, else the machine's
/// parallelism; always 1 in serial mode.
pub fn thread_count(serial: bool) -> usize {
    if serial {
        return 1;
    }
    std::env::var("VQPROBE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
