//! Deterministic simulation harness: scripted scenarios over the assembled
//! system, and the keyword-spotting experiment.

mod config;
mod experiment;
mod report;
mod scenario;
mod system;

pub use config::{
    read_file, AcousticModel, ConfigError, ConfigPaths, ExperimentConfig, Mic, SpotChannels, SystemConfig,
    SHIPPED_ACOUSTIC,
};
pub use experiment::{run_keyword_experiment, AccuracyGrid, Cell, KEYWORD, KEYWORD_INTENT};
pub use report::{glyph, parse_csv, render_csv, render_heatmap, render_table, CsvError};
pub use scenario::{ScenarioError, ScenarioEvent, ScenarioScript};
pub use system::{run_scenario, OperatorLogEntry, RunResult, RunningStatus, Status, System, SETTLE_HORIZON};
