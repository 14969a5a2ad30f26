//! Training orchestration: splits, run configuration, the two training
//! phases, evaluation, sweeps and the synthetic task generator.

mod config;
mod split;
mod sweep;
mod synth;
mod trainer;

pub use config::{summarize, Phase, RunConfig, RunReport, Summary};
pub use split::{format_split_file, parse_split_file, DatasetSplit, Role, SampleRef, SplitMode, SplitSide};
pub use sweep::{run_pipeline, sweep, GridSpec, PipelineOutcome, SweepRow, SweepTable};
pub use synth::{generate_synthetic, SyntheticParams, SyntheticTask};
pub use trainer::{
    evaluate_attributes, evaluate_zsc, init_parameters, train_attribute_extraction, train_zsc,
    train_zsc_with_targets, AttributeEvaluation, TaskData, ZscEvaluation, ZscTargets,
};
