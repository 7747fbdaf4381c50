use serde::{Deserialize, Serialize};

use super::metrics::metrics_from;
use super::report::Scored;
use super::train::{aggregate_app, app_table, table_from_probs, train, AppPrediction, AppRule, Trained};
use crate::encode::{build_vocabulary, encode, EncodedSequence, Vocabulary};
use crate::error::Result;
use crate::net::{predict, ModelConfig};
use crate::segment::SequenceUnit;

/// Everything needed to turn train/test units into a scored model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub min_freq: usize,
    /// Hyperparameters; `seq_len` and `vocab_size` are filled in by the fit.
    pub model: ModelConfig,
    pub max_sequences: Option<usize>,
    pub threshold: f64,
    pub app_rule: AppRule,
}

pub struct Evaluation {
    pub vocab: Vocabulary,
    pub config: ModelConfig,
    pub trained: Trained,
    pub train: Vec<EncodedSequence>,
    pub test: Vec<EncodedSequence>,
    pub test_probs: Vec<f64>,
    pub sequences: Scored,
    pub app_predictions: Vec<AppPrediction>,
    pub apps: Scored,
}

/// Vocabulary from the training units, encode, train, score the test units
/// per sequence and per application.
pub fn fit_and_evaluate(train_units: &[SequenceUnit], test_units: &[SequenceUnit], s: &FitSettings) -> Result<Evaluation> {
    let vocab = build_vocabulary(train_units, s.vocab_size, s.min_freq)?;
    let mut config = s.model.clone();
    config.seq_len = s.seq_len;
    config.vocab_size = vocab.size();
    config.validate()?;
    let train_enc: Vec<EncodedSequence> = train_units.iter().map(|u| encode(u, &vocab, s.seq_len)).collect();
    let test_enc: Vec<EncodedSequence> = test_units.iter().map(|u| encode(u, &vocab, s.seq_len)).collect();
    let trained = train(&config, &train_enc, s.max_sequences)?;
    let probs = predict(&config, &trained.params, &test_enc)?;
    let labels: Vec<u8> = test_enc.iter().map(|e| e.label).collect();
    let seq_table = table_from_probs(&probs, &labels, s.threshold);
    let app_predictions = aggregate_app(
        test_enc.iter().zip(&probs).map(|(e, &p)| (e.app_id.as_str(), e.label, p)),
        s.threshold,
        s.app_rule,
    );
    let apps = app_table(&app_predictions);
    Ok(Evaluation {
        sequences: Scored {
            table: seq_table,
            metrics: metrics_from(&seq_table)?,
        },
        apps: Scored {
            table: apps,
            metrics: metrics_from(&apps)?,
        },
        vocab,
        config,
        trained,
        train: train_enc,
        test: test_enc,
        test_probs: probs,
        app_predictions,
    })
}
