//! Configuration, dataset I/O, synthetic data and end-to-end orchestration.

pub mod config;
pub mod dataset;
pub mod pipeline;
pub mod synthetic;

pub use config::{PlannerBackend, RunConfig};
pub use dataset::{
    load_dataset, parse_edge_list, parse_features_bin, parse_features_csv, parse_labels,
    parse_splits, stratified_split, write_dataset, FeatureFormat, LoadedDataset,
};
pub use pipeline::{
    ablate, prepare_graph, raw_feature_baseline, run_pipeline, run_pipeline_with_client,
    sweep_configs, EvaluationRecord, Report, RunOutcome, Sweep, SweepPoint, TestMetrics,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
