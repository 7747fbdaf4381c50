//! Splitting, training, scoring and the synthetic corpora used by the
//! factor experiments.

pub mod experiment;
pub mod fit;
pub mod metrics;
pub mod report;
pub mod split;
pub mod synth;
pub mod train;

pub use fit::{fit_and_evaluate, Evaluation, FitSettings};
pub use metrics::{metrics_from, ContingencyTable, Metrics};
pub use report::{corpus_stats, render_csv, CorpusStats, CsvRow, Scored, CSV_HEADER};
pub use split::{split_apps, split_by_app, AppSplit, DEFAULT_TRAIN_FRACTION};
pub use train::{
    aggregate_app, app_table, evaluate, table_from_probs, train, AppPrediction, AppRule, Trained,
    DEFAULT_THRESHOLD,
};
pub use experiment::{
    experiment_model, granularity_experiment, path_token_experiment, ArmResult, ExperimentSettings,
    GranularityReport, PathTokenReport, EXPERIMENTS,
};
