//! Configuration, data files, draw files and checkpoints.

pub mod config;
pub mod data;
pub mod output;

pub use config::{
    BlockingConfig, FactorSection, LgTruth, ModelName, RunConfig, SimulateSection, SortName,
};
pub use data::{
    compute_log_returns, load_returns_csv, parse_returns_csv, write_series_csv, DataMode,
    ReturnsTable, MIN_T,
};
pub use output::{
    load_checkpoint, read_draws, read_json, save_checkpoint, write_draws, write_json,
    ChainCheckpoint, Checkpoint, DrawSchema,
};
