//! Experiment orchestration: configurations, seeded sweeps, rate fitting,
//! phase classification and plot data.

pub mod config;
pub mod phase;
pub mod plot;
pub mod rate;
pub mod sweep;

pub use config::{profile_grid, ConfigGrid, ExperimentConfig, GridAxes, LinkKind, Profile, Setup, TransferBlock};
pub use phase::{classify_phase, Region};
pub use plot::{emit_plot_data, Recipe};
pub use rate::{fit_rate_exponent, RateFit, XField, YField};
pub use sweep::{
    read_configs_csv, read_rows_csv, run_trial, sweep, sweep_configs, trial_instance, write_configs_csv, write_rows_csv,
    ConfigSummary, SweepResult, SweepRow, TrialInstance,
};
