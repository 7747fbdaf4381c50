//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use dsq_core::encode::EncodedSequence;
use dsq_core::net::{backward, bce_loss, forward, init_params, ModelConfig, ModelParams, Pooling};
use dsq_core::rng::{self, Stream};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-3;

/// Outcome of comparing backprop against central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub coords: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Relative error with a tiny floor so exact zeros compare as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn batch_loss(config: &ModelConfig, params: &ModelParams, batch: &[EncodedSequence], labels: &[u8], mask_seed: u64) -> f64 {
    let mut r = rng::stream(mask_seed, Stream::Dropout);
    let (probs, _) = forward(config, params, batch, true, &mut r).unwrap();
    bce_loss(&probs, labels)
}

/// Compares every parameter coordinate of `backward` with central
/// differences of the loss, holding the dropout masks fixed.
pub fn gradient_check(config: &ModelConfig, params: &ModelParams, batch: &[EncodedSequence], mask_seed: u64) -> GradCheck {
    let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();
    let mut r = rng::stream(mask_seed, Stream::Dropout);
    let (_, cache) = forward(config, params, batch, true, &mut r).unwrap();
    let grads = backward(&cache, &labels);
    let mut probe = params.clone();
    let mut out = GradCheck { coords: 0, max_rel_err: 0.0, max_abs_err: 0.0 };
    for i in 0..params.num_params() {
        let x = params.get_flat(i);
        probe.set_flat(i, x + FD_STEP);
        let up = batch_loss(config, &probe, batch, &labels, mask_seed);
        probe.set_flat(i, x - FD_STEP);
        let down = batch_loss(config, &probe, batch, &labels, mask_seed);
        probe.set_flat(i, x);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads.get_flat(i);
        out.coords += 1;
        out.max_rel_err = out.max_rel_err.max(rel_err(analytic, numeric));
        out.max_abs_err = out.max_abs_err.max((analytic - numeric).abs());
    }
    out
}

/// Distance every ReLU input and max-pool winner must keep from its kink,
/// so that a step of `FD_STEP` stays on one smooth piece.
pub const KINK_MARGIN: f64 = 0.02;

/// A random small network and batch for gradient checking, redrawn until
/// no ReLU input or max-pool tie lies within [`KINK_MARGIN`] of its kink.
pub fn random_case(seed: u64) -> (ModelConfig, ModelParams, Vec<EncodedSequence>) {
    random_case_with(seed, Pooling::Max)
}

pub fn random_case_with(seed: u64, pooling: Pooling) -> (ModelConfig, ModelParams, Vec<EncodedSequence>) {
    let mut r = rng::stream(seed, Stream::Corpus);
    loop {
        let (mut config, params, batch) = draw_case(seed, &mut r);
        config.pooling = pooling;
        let mut masks = rng::stream(seed, Stream::Dropout);
        let (_, cache) = forward(&config, &params, &batch, true, &mut masks).unwrap();
        let smooth = cache.seqs().iter().all(|s| {
            (pooling == Pooling::Mean || s.pooling_margin() > KINK_MARGIN)
                && s.dense_preactivations().iter().all(|x| x.abs() > KINK_MARGIN)
        });
        if smooth {
            return (config, params, batch);
        }
    }
}

fn draw_case(seed: u64, r: &mut rng::Rng) -> (ModelConfig, ModelParams, Vec<EncodedSequence>) {
    let vocab = r.gen_range(5..=50);
    let seq_len = r.gen_range(2..=10);
    let mut config = ModelConfig::new(seq_len, vocab);
    config.embed_dim = r.gen_range(1..=8);
    config.hidden = r.gen_range(1..=8);
    config.dense_width = r.gen_range(1..=8);
    config.seed = seed;
    let mut params = init_params(&config, seed);
    // move biases off zero so every path carries gradient
    for b in params.lstm_b.iter_mut().chain(params.dense1_b.iter_mut()).chain(params.dense2_b.iter_mut()) {
        *b += r.gen_range(-0.3..0.3);
    }
    let n = r.gen_range(1..=4);
    let batch = (0..n)
        .map(|_| {
            let len = r.gen_range(0..=seq_len);
            let mut ids: Vec<u32> = (0..len).map(|_| r.gen_range(1..vocab as u32)).collect();
            ids.resize(seq_len, 0);
            EncodedSequence { app_id: String::new(), ids, label: r.gen_range(0..2) }
        })
        .collect();
    (config, params, batch)
}
