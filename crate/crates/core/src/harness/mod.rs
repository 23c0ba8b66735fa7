//! Experiment driver: configuration, sweeps, and CSV/JSON reports.
//!
//! Every subcommand writes `<out>/<subcommand>.csv` and
//! `<out>/<subcommand>.json`. The JSON verdict always carries
//! `subcommand`, `config_hash`, `pass` and `failures`.

mod cli;
pub mod config;
pub mod experiments;
pub mod report;

pub use cli::{run_cli, Subcommand};
pub use config::{ExperimentConfig, Geometry, LambdaSpec, Precision};
pub use experiments::{
    constancy_scan, cyclic_rank_check, gap_growth_probe, multiplicity_scan, sample_disorder,
    ConstancyReport, GapGrowthReport, MultiplicityProfile, PairSpec, RankResult,
};
pub use report::{Report, Verdict};
