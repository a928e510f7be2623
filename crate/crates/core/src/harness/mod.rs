//! Experiment drivers: configuration, result records and the tables each
//! experiment writes.

mod config;
mod experiments;
mod record;
mod variation;

pub use config::{
    AlphabetSection, ExperimentConfig, ExperimentKind, GridSection, PolicySection, SampleSection, SolverSection,
    Thresholds,
};
pub use experiments::{run_experiment, run_experiment_with_workers, RunOutput};
pub use record::{fmt_num, git_revision, Check, Metadata, ResultRecord, Scalar};
pub use variation::{smoothed_non_increasing, variation_scan, VariationRow, VariationScan};
