//! Configuration, in-memory benchmark and staged artifact pipeline.

pub mod config;
pub mod run;
pub mod stages;

pub use config::{EvalConfig, Paths, PipelineConfig, SplitConfig};
pub use run::{
    hgnn_embeddings, prepare, run_benchmark, two_tower, BenchmarkResult, Dataset, Prepared, TwoTowerRun,
};
pub use stages::{
    apply_overrides, default_ablation_variants, AblationReport, AblationRow, AblationVariant, ArtifactManifest,
    EvalReport, Layout, Pipeline, ProbeReport, ScoredItem, SplitSummary, Stage, StageArgs, StageOutcome,
};
