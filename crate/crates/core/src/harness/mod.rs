//! Experiment configuration, Monte-Carlo sweeps and CSV output.

pub mod config;
pub mod metrics;
pub mod oracle;
pub mod sweep;

pub use config::{AoConfig, Cell, ChannelConfig, ExperimentConfig, GridConfig, PriorConfig, SceneConfig};
pub use metrics::{compute_metrics, Summary, TrialMetrics};
pub use oracle::{exhaustive_single_vehicle, oracle_agreement, oracle_geometry, OracleReport};
pub use sweep::{
    noise_seed, run_sweep, trial_seed, with_pool, write_convergence, write_metrics, write_outputs, write_trials,
    CellOutcome, ConvergenceRow, Experiment, IterationMetrics, Method, MetricRow, SweepResult, TrialPair,
    TrialRecord,
};
