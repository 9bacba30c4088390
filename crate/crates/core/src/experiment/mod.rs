//! Configuration, the synthetic dataset, ablation drivers and report files.

mod config;
mod report;
mod runner;
mod synthetic;

pub use config::{
    Ablation, EpisodesConfig, EvalConfig, ExperimentConfig, PathsConfig, TargetKind,
    TargetsConfig,
};
pub use report::{
    read_csv, write_csv, write_json, write_sweep_dat, GridRow, ProximityEpisode, ProximityReport,
    ReportRow,
};
pub use runner::{
    load_network, run_ablation, run_ablation_classifiers, run_ablation_sources,
    run_ablation_targets, run_eval, run_proximity_check, run_semantic_grid, run_semevo, run_sweep,
    run_synth, run_train, synthetic_config, Experiment, PipelineScalar, SemevoOptions, TrainedNet,
};
pub use synthetic::{gen_synthetic, SyntheticData, SyntheticSpec, SYNTHETIC_ENCODER};
