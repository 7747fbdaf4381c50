//! End-to-end commands: ingest a corpus, train and score a classifier, run
//! the synthetic experiments, and replay any of them from a saved config.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encode::{seq_len_for, write_dataset, EncodedSequence, DEFAULT_MIN_FREQ, DEFAULT_VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::harness::{
    corpus_stats, fit_and_evaluate, granularity_experiment, path_token_experiment, render_csv, split_apps, AppRule,
    CorpusStats, CsvRow, ExperimentSettings, FitSettings, GranularityReport, PathTokenReport, Scored,
    DEFAULT_THRESHOLD, DEFAULT_TRAIN_FRACTION, EXPERIMENTS,
};
use crate::ingest::{load_document, load_manifest, scan_directory, DatasetManifest, Dialect, ManifestEntry, RawDocument};
use crate::net::{write_checkpoint, ModelConfig};
use crate::segment::{segment, SequenceUnit, UnitKind};

pub const DEFAULT_MAX_SEQUENCES: usize = 100_000;
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MODEL_FILE: &str = "model.dsqm";
pub const TRAIN_FILE: &str = "train.dsqe";
pub const TEST_FILE: &str = "test.dsqe";

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A manifest file, or a directory holding either `manifest.tsv` or
/// `benign/` and `malicious/` subdirectories.
pub fn load_input(input: &Path) -> Result<DatasetManifest> {
    if input.is_dir() {
        let manifest = input.join(MANIFEST_FILE);
        if manifest.is_file() {
            load_manifest(&manifest)
        } else {
            scan_directory(input)
        }
    } else {
        load_manifest(input)
    }
}

/// Loads every document; `dialect` overrides both manifest and detection.
pub fn load_corpus(manifest: &DatasetManifest, dialect: Option<Dialect>) -> Result<Vec<RawDocument>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            let entry = ManifestEntry {
                dialect: dialect.or(e.dialect),
                ..e.clone()
            };
            load_document(&entry)
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn save_config(out: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join(CONFIG_FILE), config)
}

/// Everything a command needs, saved as `config.json` before it starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Ingest(IngestArgs),
    Run(RunArgs),
    Experiment(ExperimentArgs),
}

impl RunConfig {
    pub fn out(&self) -> &Path {
        match self {
            RunConfig::Ingest(a) => &a.out,
            RunConfig::Run(a) => &a.out,
            RunConfig::Experiment(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunConfig::Ingest(a) => a.out = out,
            RunConfig::Run(a) => a.out = out,
            RunConfig::Experiment(a) => a.out = out,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub dialect: Option<Dialect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: usize,
    pub by_label: BTreeMap<String, usize>,
    pub by_dialect: BTreeMap<String, usize>,
    /// SHA-256 over the written manifest and every normalized document.
    pub digest: String,
}

/// Resolves dialects, normalizes every document and writes them under
/// `out/docs/` with a manifest that pins the dialect of each.
pub fn cmd_ingest(args: &IngestArgs) -> Result<IngestSummary> {
    save_config(&args.out, &RunConfig::Ingest(args.clone()))?;
    let manifest = load_input(&args.input)?;
    let docs = load_corpus(&manifest, args.dialect)?;
    let doc_dir = args.out.join("docs");
    fs::create_dir_all(&doc_dir)?;
    let mut hasher = Sha256::new();
    let mut entries = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        let rel = PathBuf::from("docs").join(format!("{i:06}.txt"));
        let mut text = doc.lines.join("\n");
        text.push('\n');
        fs::write(args.out.join(&rel), &text)?;
        hasher.update(text.as_bytes());
        entries.push(ManifestEntry {
            app_id: doc.app_id.clone(),
            path: rel,
            label: doc.label,
            dialect: Some(doc.dialect),
        });
    }
    let tsv = DatasetManifest::new(entries)?.to_tsv();
    hasher.update(tsv.as_bytes());
    fs::write(args.out.join(MANIFEST_FILE), &tsv)?;
    let stats = corpus_stats(&docs, &[]);
    let summary = IngestSummary {
        files: stats.files,
        by_label: stats.files_by_label,
        by_dialect: stats.files_by_dialect,
        digest: hex::encode(hasher.finalize()),
    };
    write_json(&args.out.join("ingest.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub unit: UnitKind,
    pub dialect: Option<Dialect>,
    /// Defaults to the per-unit length.
    pub seq_len: Option<usize>,
    pub vocab_size: usize,
    pub min_freq: usize,
    pub model: ModelConfig,
    pub max_sequences: Option<usize>,
    pub threshold: f64,
    pub train_fraction: f64,
    pub app_rule: AppRule,
}

impl RunArgs {
    pub fn new(input: PathBuf, out: PathBuf, unit: UnitKind) -> Self {
        let seq_len = seq_len_for(unit);
        RunArgs {
            input,
            out,
            unit,
            dialect: None,
            seq_len: None,
            vocab_size: DEFAULT_VOCAB_SIZE,
            min_freq: DEFAULT_MIN_FREQ,
            model: ModelConfig::new(seq_len, DEFAULT_VOCAB_SIZE),
            max_sequences: Some(DEFAULT_MAX_SEQUENCES),
            threshold: DEFAULT_THRESHOLD,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            app_rule: AppRule::Mean,
        }
    }

    pub fn effective_seq_len(&self) -> usize {
        self.seq_len.unwrap_or_else(|| seq_len_for(self.unit))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub digest: String,
    pub train_apps: usize,
    pub test_apps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub unit: UnitKind,
    /// The single dialect of the corpus, or `mixed`.
    pub dialect: String,
    pub config: ModelConfig,
    pub vocab_max_size: usize,
    pub min_freq: usize,
    pub max_sequences: Option<usize>,
    pub threshold: f64,
    pub app_rule: AppRule,
    pub split: SplitSummary,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub sequences_per_epoch: usize,
    pub epoch_losses: Vec<f64>,
    pub sequences: Scored,
    pub apps: Scored,
    pub stats: CorpusStats,
}

impl RunReport {
    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            kind: self.unit.as_str().into(),
            dialect: self.dialect.clone(),
            tpr: self.sequences.metrics.tpr,
            fpr: self.sequences.metrics.fpr,
            acc: self.sequences.metrics.acc,
            mean_tokens: self.stats.mean_tokens,
            n_sequences: self.stats.sequences,
        }
    }
}

fn corpus_dialect(docs: &[RawDocument]) -> String {
    match docs.first() {
        Some(first) if docs.iter().all(|d| d.dialect == first.dialect) => first.dialect.to_string(),
        Some(_) => "mixed".into(),
        None => "none".into(),
    }
}

fn write_sequences(path: &Path, seq_len: usize, seqs: &[EncodedSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, seq_len, seqs)?;
    w.flush()?;
    Ok(())
}

/// Segment, build the vocabulary on the training apps, encode, train and
/// score. Writes the vocabulary, encoded datasets, checkpoint and reports
/// into `args.out`.
pub fn cmd_run(args: &RunArgs) -> Result<RunReport> {
    let mut resolved = args.clone();
    resolved.seq_len = Some(args.effective_seq_len());
    resolved.model.seq_len = args.effective_seq_len();
    save_config(&args.out, &RunConfig::Run(resolved))?;
    let manifest = load_input(&args.input)?;
    let docs = load_corpus(&manifest, args.dialect)?;
    let split = split_apps(
        docs.iter().map(|d| (d.app_id.as_str(), d.label)),
        args.train_fraction,
        args.model.seed,
    )?;
    let units: Vec<SequenceUnit> = docs.iter().flat_map(|d| segment(d, args.unit)).collect();
    let stats = corpus_stats(&docs, &units);
    log::info!("{} {} sequences from {} files", units.len(), args.unit, docs.len());
    let (train, test): (Vec<SequenceUnit>, Vec<SequenceUnit>) =
        units.into_iter().partition(|u| split.is_train(&u.app_id));
    let seq_len = args.effective_seq_len();
    let settings = FitSettings {
        seq_len,
        vocab_size: args.vocab_size,
        min_freq: args.min_freq,
        model: args.model.clone(),
        max_sequences: args.max_sequences,
        threshold: args.threshold,
        app_rule: args.app_rule,
    };
    let ev = fit_and_evaluate(&train, &test, &settings)?;

    ev.vocab.save(&args.out.join(VOCAB_FILE))?;
    write_sequences(&args.out.join(TRAIN_FILE), seq_len, &ev.train)?;
    write_sequences(&args.out.join(TEST_FILE), seq_len, &ev.test)?;
    let mut w = BufWriter::new(File::create(args.out.join(MODEL_FILE))?);
    write_checkpoint(&mut w, &ev.config, &ev.trained.params)?;
    w.flush()?;

    let report = RunReport {
        tool_version: TOOL_VERSION.into(),
        unit: args.unit,
        dialect: corpus_dialect(&docs),
        config: ev.config,
        vocab_max_size: args.vocab_size,
        min_freq: args.min_freq,
        max_sequences: args.max_sequences,
        threshold: args.threshold,
        app_rule: args.app_rule,
        split: SplitSummary {
            digest: split.digest(),
            train_apps: split.train.len(),
            test_apps: split.test.len(),
        },
        train_sequences: ev.train.len(),
        test_sequences: ev.test.len(),
        sequences_per_epoch: ev.trained.consumed_per_epoch,
        epoch_losses: ev.trained.epoch_losses,
        sequences: ev.sequences,
        apps: ev.apps,
        stats,
    };
    write_json(&args.out.join(REPORT_JSON), &report)?;
    fs::write(args.out.join(REPORT_CSV), render_csv(&[report.csv_row()]))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentArgs {
    pub name: String,
    pub out: PathBuf,
    pub seed: u64,
    /// Unit kind of the path-token arms.
    pub unit: UnitKind,
    pub settings: ExperimentSettings,
}

impl ExperimentArgs {
    /// Defaults for a named experiment.
    pub fn new(name: &str, out: PathBuf, seed: u64) -> Result<Self> {
        let settings = match name {
            "granularity" => ExperimentSettings::granularity(),
            "path-token" => ExperimentSettings::path_token(),
            _ => return Err(Error::UnknownExperiment(name.into())),
        };
        Ok(ExperimentArgs {
            name: name.into(),
            out,
            seed,
            unit: UnitKind::Msm,
            settings,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentReport {
    Granularity(Box<GranularityReport>),
    PathToken(Box<PathTokenReport>),
}

impl ExperimentReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        match self {
            ExperimentReport::Granularity(r) => r.csv_rows(),
            ExperimentReport::PathToken(r) => r.csv_rows(),
        }
    }
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExperimentReport> {
    if !EXPERIMENTS.contains(&args.name.as_str()) {
        return Err(Error::UnknownExperiment(args.name.clone()));
    }
    save_config(&args.out, &RunConfig::Experiment(args.clone()))?;
    let report = match args.name.as_str() {
        "granularity" => ExperimentReport::Granularity(Box::new(granularity_experiment(&args.settings, args.seed)?)),
        _ => ExperimentReport::PathToken(Box::new(path_token_experiment(&args.settings, args.unit, args.seed)?)),
    };
    write_json(&args.out.join(REPORT_JSON), &report)?;
    fs::write(args.out.join(REPORT_CSV), render_csv(&report.csv_rows()))?;
    Ok(report)
}

/// What a replayed command produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Ingest(IngestSummary),
    Run(Box<RunReport>),
    Experiment(Box<ExperimentReport>),
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    Ok(match config {
        RunConfig::Ingest(a) => Outcome::Ingest(cmd_ingest(a)?),
        RunConfig::Run(a) => Outcome::Run(Box::new(cmd_run(a)?)),
        RunConfig::Experiment(a) => Outcome::Experiment(Box::new(cmd_experiment(a)?)),
    })
}

/// Re-executes a saved `config.json`, optionally into another directory.
pub fn cmd_replay(config_path: &Path, out: Option<PathBuf>) -> Result<Outcome> {
    let mut config = load_run_config(config_path)?;
    if let Some(out) = out {
        config.set_out(out);
    }
    execute(&config)
}
