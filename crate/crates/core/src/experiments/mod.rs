//! Configuration-driven experiment runner: scenario presets, repeats over
//! seeds, error metrics and deterministic CSV output with a JSON manifest.

pub mod config;
pub mod metrics;
pub mod output;
pub mod runner;

pub use config::{
    Disturbances, DpSetup, ExperimentConfig, FilterKind, FilterSetup, GridConfig, ModelConfig,
    Scenario,
};
pub use metrics::Summary;
pub use runner::{
    compare_dp, compare_filters, compute_errors, error_table, export_lq_oracle, export_riccati, run_scenario,
    run_seed, BuiltModel, DpComparison, DpStats, FilterComparison, FilterErrors, FilterStats, Outcomes,
    ScenarioReport, SeedMetrics, SeedOutcome,
};
