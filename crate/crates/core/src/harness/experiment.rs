use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fit::{fit_and_evaluate, FitSettings};
use super::report::{corpus_stats, CsvRow, Scored};
use super::split::{split_apps, AppSplit, DEFAULT_TRAIN_FRACTION};
use super::synth::{generate, CorpusSpec, DescriptorStyle, PlantedPattern};
use super::train::{AppRule, DEFAULT_THRESHOLD};
use crate::encode::{seq_len_for, DEFAULT_MIN_FREQ, DEFAULT_VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::ingest::RawDocument;
use crate::net::ModelConfig;
use crate::segment::{segment, SequenceUnit, UnitKind};

pub const EXPERIMENTS: [&str; 2] = ["granularity", "path-token"];

/// Knobs shared by both experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub corpus: CorpusSpec,
    /// Hyperparameter template; shape fields are set per arm.
    pub model: ModelConfig,
    pub vocab_size: usize,
    pub min_freq: usize,
    pub train_fraction: f64,
    pub threshold: f64,
    pub max_sequences: Option<usize>,
    /// Per-kind sequence length overrides.
    pub seq_lens: BTreeMap<UnitKind, usize>,
}

/// Smaller network than the classifier default, sized for corpora of a few
/// dozen apps where the coarse units yield only a few hundred sequences.
pub fn experiment_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 32,
        hidden: 32,
        dense_width: 32,
        batch_size: 16,
        learning_rate: 0.005,
        epochs: 4,
        ..ModelConfig::new(1, 2)
    }
}

impl ExperimentSettings {
    fn base(corpus: CorpusSpec) -> Self {
        ExperimentSettings {
            corpus,
            model: experiment_model(),
            vocab_size: DEFAULT_VOCAB_SIZE,
            min_freq: DEFAULT_MIN_FREQ,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: DEFAULT_THRESHOLD,
            max_sequences: None,
            seq_lens: BTreeMap::new(),
        }
    }

    /// A loader snippet planted in every malicious class, package paths
    /// independent of the label.
    pub fn granularity() -> Self {
        Self::base(CorpusSpec {
            apps_per_label: 100,
            planted: Some(PlantedPattern::loader()),
            ..CorpusSpec::default()
        })
    }

    /// Every app class lives in a package from its label's pool; nothing is
    /// planted, so package paths are the only signal.
    pub fn path_token() -> Self {
        Self::base(CorpusSpec {
            apps_per_label: 100,
            path_correlation: 1.0,
            ..CorpusSpec::default()
        })
    }

    pub fn seq_len(&self, kind: UnitKind) -> usize {
        self.seq_lens.get(&kind).copied().unwrap_or_else(|| seq_len_for(kind))
    }

    fn fit_settings(&self, kind: UnitKind, seed: u64) -> FitSettings {
        let mut model = self.model.clone();
        model.seed = seed;
        FitSettings {
            seq_len: self.seq_len(kind),
            vocab_size: self.vocab_size,
            min_freq: self.min_freq,
            model,
            max_sequences: self.max_sequences,
            threshold: self.threshold,
            app_rule: AppRule::Mean,
        }
    }
}

/// Scores of one trained arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub kind: UnitKind,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mean_tokens: f64,
    pub mean_lines: f64,
    pub epoch_losses: Vec<f64>,
    pub sequences: Scored,
    pub apps: Scored,
}

impl ArmResult {
    pub fn acc(&self) -> f64 {
        self.sequences.metrics.acc
    }

    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            kind: self.arm.clone(),
            dialect: "apktool".into(),
            tpr: self.sequences.metrics.tpr,
            fpr: self.sequences.metrics.fpr,
            acc: self.sequences.metrics.acc,
            mean_tokens: self.mean_tokens,
            n_sequences: self.n_train + self.n_test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GranularityReport {
    pub experiment: String,
    pub seed: u64,
    pub settings: ExperimentSettings,
    pub split_digest: String,
    /// One row per unit kind, finest first.
    pub rows: Vec<ArmResult>,
}

impl GranularityReport {
    pub fn acc(&self, kind: UnitKind) -> Option<f64> {
        self.rows.iter().find(|r| r.kind == kind).map(ArmResult::acc)
    }

    /// True if accuracy never drops by more than `tolerance` from one kind
    /// to the next coarser one.
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].acc() >= w[0].acc() - tolerance)
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.rows.iter().map(ArmResult::csv_row).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTokenReport {
    pub experiment: String,
    pub seed: u64,
    pub settings: ExperimentSettings,
    pub unit: UnitKind,
    pub split_digest: String,
    pub with_paths: ArmResult,
    pub without_paths: ArmResult,
}

impl PathTokenReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        vec![self.with_paths.csv_row(), self.without_paths.csv_row()]
    }
}

fn corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<RawDocument>> {
    let docs: Vec<RawDocument> = generate(spec, seed).iter().map(|a| a.to_document()).collect();
    if docs.is_empty() {
        return Err(Error::InvalidConfig("corpus spec yields no apps".into()));
    }
    Ok(docs)
}

fn run_arm(
    arm: &str,
    docs: &[RawDocument],
    split: &AppSplit,
    kind: UnitKind,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<ArmResult> {
    let units: Vec<SequenceUnit> = docs.iter().flat_map(|d| segment(d, kind)).collect();
    let stats = corpus_stats(docs, &units);
    let (train, test): (Vec<SequenceUnit>, Vec<SequenceUnit>) =
        units.into_iter().partition(|u| split.is_train(&u.app_id));
    let fs = settings.fit_settings(kind, seed);
    log::info!("{arm}: {} train / {} test sequences", train.len(), test.len());
    let ev = fit_and_evaluate(&train, &test, &fs)?;
    Ok(ArmResult {
        arm: arm.to_string(),
        kind,
        seq_len: fs.seq_len,
        vocab_size: ev.vocab.size(),
        n_train: train.len(),
        n_test: test.len(),
        mean_tokens: stats.mean_tokens,
        mean_lines: stats.mean_lines,
        epoch_losses: ev.trained.epoch_losses,
        sequences: ev.sequences,
        apps: ev.apps,
    })
}

fn split_docs(docs: &[RawDocument], settings: &ExperimentSettings, seed: u64) -> Result<AppSplit> {
    split_apps(docs.iter().map(|d| (d.app_id.as_str(), d.label)), settings.train_fraction, seed)
}

/// Trains one classifier per unit kind on the same corpus and split.
pub fn granularity_experiment(settings: &ExperimentSettings, seed: u64) -> Result<GranularityReport> {
    let docs = corpus(&settings.corpus, seed)?;
    let split = split_docs(&docs, settings, seed)?;
    let rows = UnitKind::ALL
        .iter()
        .map(|&k| run_arm(k.as_str(), &docs, &split, k, settings, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(GranularityReport {
        experiment: "granularity".into(),
        seed,
        settings: settings.clone(),
        split_digest: split.digest(),
        rows,
    })
}

/// Trains on the same apps twice, once with package-qualified class
/// references and once with bare class names.
pub fn path_token_experiment(settings: &ExperimentSettings, unit: UnitKind, seed: u64) -> Result<PathTokenReport> {
    let with_spec = CorpusSpec {
        descriptors: DescriptorStyle::WithPath,
        ..settings.corpus.clone()
    };
    let without_spec = CorpusSpec {
        descriptors: DescriptorStyle::BareClass,
        ..settings.corpus.clone()
    };
    let with_docs = corpus(&with_spec, seed)?;
    let without_docs = corpus(&without_spec, seed)?;
    let split = split_docs(&with_docs, settings, seed)?;
    Ok(PathTokenReport {
        experiment: "path-token".into(),
        seed,
        settings: settings.clone(),
        unit,
        split_digest: split.digest(),
        with_paths: run_arm("with-path", &with_docs, &split, unit, settings, seed)?,
        without_paths: run_arm("without-path", &without_docs, &split, unit, settings, seed)?,
    })
}
