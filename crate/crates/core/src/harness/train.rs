use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::ContingencyTable;
use crate::encode::EncodedSequence;
use crate::error::{Error, Result};
use crate::net::{adam_update, init_params, loss_and_grad, predict, AdamState, ModelConfig, ModelParams};
use crate::rng::{self, Stream};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    /// Mean batch loss of each epoch, weighted by batch size.
    pub epoch_losses: Vec<f64>,
    /// Sequences consumed in each epoch after the cap.
    pub consumed_per_epoch: usize,
}

/// Mini-batch Adam training. Each epoch reshuffles the sequences, keeps at
/// most `cap` of them and walks them in batches of `config.batch_size`,
/// keeping the final partial batch.
pub fn train(config: &ModelConfig, data: &[EncodedSequence], cap: Option<usize>) -> Result<Trained> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut params = init_params(config, config.seed);
    let consumed = cap.map_or(data.len(), |c| c.min(data.len()));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(Trained {
            params,
            epoch_losses,
            consumed_per_epoch: consumed,
        });
    }
    let mut shuffle = rng::stream(config.seed, Stream::Shuffle);
    let mut dropout = rng::stream(config.seed, Stream::Dropout);
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut weighted = 0.0;
        for chunk in order[..consumed].chunks(config.batch_size) {
            let batch: Vec<&EncodedSequence> = chunk.iter().map(|&i| &data[i]).collect();
            let loss = loss_and_grad(config, &params, &batch, &mut dropout, &mut grads)?;
            adam_update(&mut params, &grads, &mut state, config.learning_rate);
            weighted += loss * batch.len() as f64;
        }
        let mean = weighted / consumed as f64;
        log::info!("epoch {}/{}: loss {mean:.6}", epoch + 1, config.epochs);
        epoch_losses.push(mean);
    }
    Ok(Trained {
        params,
        epoch_losses,
        consumed_per_epoch: consumed,
    })
}

pub fn table_from_probs(probs: &[f64], labels: &[u8], threshold: f64) -> ContingencyTable {
    ContingencyTable::from_predictions(
        probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| (p >= threshold, y == 1)),
    )
}

/// Sequence-level contingency table: probability `>= threshold` predicts
/// malicious.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    test: &[EncodedSequence],
    threshold: f64,
) -> Result<ContingencyTable> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let probs = predict(config, params, test)?;
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    Ok(table_from_probs(&probs, &labels, threshold))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppRule {
    /// Mean sequence probability against the threshold.
    #[default]
    Mean,
    /// More than half of the sequences individually at or above the threshold.
    Majority,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppPrediction {
    pub app_id: String,
    pub label: u8,
    pub sequences: usize,
    pub mean_prob: f64,
    pub malicious: bool,
}

/// Collapses sequence probabilities into one decision per application.
/// Output is ordered by app id.
pub fn aggregate_app<'a, I>(scored: I, threshold: f64, rule: AppRule) -> Vec<AppPrediction>
where
    I: IntoIterator<Item = (&'a str, u8, f64)>,
{
    let mut groups: BTreeMap<&str, (u8, Vec<f64>)> = BTreeMap::new();
    for (app, label, prob) in scored {
        groups.entry(app).or_insert_with(|| (label, Vec::new())).1.push(prob);
    }
    groups
        .into_iter()
        .map(|(app, (label, probs))| {
            let mean_prob = probs.iter().sum::<f64>() / probs.len() as f64;
            let malicious = match rule {
                AppRule::Mean => mean_prob >= threshold,
                AppRule::Majority => 2 * probs.iter().filter(|&&p| p >= threshold).count() > probs.len(),
            };
            AppPrediction {
                app_id: app.to_string(),
                label,
                sequences: probs.len(),
                mean_prob,
                malicious,
            }
        })
        .collect()
}

pub fn app_table(preds: &[AppPrediction]) -> ContingencyTable {
    ContingencyTable::from_predictions(preds.iter().map(|p| (p.malicious, p.label == 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(n: usize, len: usize) -> Vec<EncodedSequence> {
        (0..n)
            .map(|i| EncodedSequence {
                app_id: format!("a{}", i % 7),
                ids: (0..len).map(|t| ((i + t) % 9 + 1) as u32).collect(),
                label: (i % 2) as u8,
            })
            .collect()
    }

    fn tiny(len: usize) -> ModelConfig {
        let mut c = ModelConfig::new(len, 10);
        c.embed_dim = 3;
        c.hidden = 3;
        c.dense_width = 3;
        c.batch_size = 16;
        c
    }

    #[test]
    fn zero_epochs_returns_init() {
        let mut c = tiny(4);
        c.epochs = 0;
        let t = train(&c, &seqs(10, 4), None).unwrap();
        assert_eq!(t.params, init_params(&c, c.seed));
        assert!(t.epoch_losses.is_empty());
    }

    #[test]
    fn cap_limits_consumption() {
        let mut c = tiny(3);
        c.epochs = 1;
        let t = train(&c, &seqs(1000, 3), Some(100)).unwrap();
        assert_eq!(t.consumed_per_epoch, 100);
        assert_eq!(t.epoch_losses.len(), 1);
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(train(&tiny(3), &[], None), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn zero_params_predict_everything_malicious() {
        let c = tiny(4);
        let p = ModelParams::zeros_for(&c);
        let t = evaluate(&c, &p, &seqs(30, 4), 0.5).unwrap();
        assert_eq!((t.fn_, t.tn), (0, 0));
        assert_eq!(t.total(), 30);
    }

    #[test]
    fn threshold_must_be_open_interval() {
        let c = tiny(4);
        let p = ModelParams::zeros_for(&c);
        assert!(evaluate(&c, &p, &seqs(3, 4), 1.0).is_err());
    }

    #[test]
    fn app_aggregation() {
        let preds = aggregate_app([("x", 1, 0.9), ("x", 1, 0.9), ("x", 1, 0.1), ("y", 0, 0.2)], 0.5, AppRule::Mean);
        assert!(preds[0].malicious);
        assert!((preds[0].mean_prob - 1.9 / 3.0).abs() < 1e-15);
        assert!(!preds[1].malicious);
        let at = aggregate_app([("z", 0, 0.5), ("z", 0, 0.5)], 0.5, AppRule::Mean);
        assert!(at[0].malicious);
        let maj = aggregate_app([("x", 1, 0.9), ("x", 1, 0.1), ("x", 1, 0.2)], 0.5, AppRule::Majority);
        assert!(!maj[0].malicious);
        let t = app_table(&preds);
        assert_eq!((t.tp, t.tn), (1, 1));
    }
}
