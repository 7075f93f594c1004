//! File formats and run orchestration around `wave-sim-core`.
//!
//! Config files are strict JSON; results are one CSV per metric series plus
//! `summary.csv`, `counters.csv` and `metadata.json`.

pub mod config;
pub mod export;
pub mod report;

use std::path::PathBuf;

use wave_sim_core::sim::SimError;

pub use config::{apply_override, config_from_value, load_config, load_config_value, parse_param, Overrides, SweepParam};
pub use export::{export_csv, SERIES_HEADER};
pub use report::summary_table;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Encode { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    /// 1 for anything wrong with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Encode { .. } | CliError::Sim(_) => 2,
        }
    }
}
