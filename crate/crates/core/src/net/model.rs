//! Forward pass, loss and backpropagation through time for
//! embedding -> LSTM -> pooling -> dropout -> dense(ReLU) -> dense(sigmoid).
//!
//! Sequences are processed up to their first `<PAD>` id; padding only ever
//! appears as a suffix, and padded steps are excluded from pooling, so the
//! hidden states computed there could never reach the output.

use rand::Rng as _;

use super::config::{ModelConfig, Pooling};
use super::params::{Gradients, ModelParams};
use crate::encode::{EncodedSequence, PAD_ID};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the loss.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Computes gate activations (input, forget, cell, output) into `gates`
/// and the new cell and hidden states.
fn cell_forward(
    p: &ModelParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    h: &mut [f64],
) {
    let hd = p.hidden;
    let g = 4 * hd;
    gates.copy_from_slice(&p.lstm_b);
    for (k, &xk) in x.iter().enumerate() {
        axpy(gates, xk, &p.lstm_w[k * g..(k + 1) * g]);
    }
    for (k, &hk) in h_prev.iter().enumerate() {
        if hk != 0.0 {
            axpy(gates, hk, &p.lstm_u[k * g..(k + 1) * g]);
        }
    }
    let (ifg, o) = gates.split_at_mut(3 * hd);
    let (i_f, gg) = ifg.split_at_mut(2 * hd);
    let (i, f) = i_f.split_at_mut(hd);
    for k in 0..hd {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        gg[k] = gg[k].tanh();
        o[k] = sigmoid(o[k]);
        c[k] = f[k] * c_prev[k] + i[k] * gg[k];
        h[k] = o[k] * c[k].tanh();
    }
}

/// One LSTM cell step.
pub fn lstm_step(params: &ModelParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = params.hidden;
    let mut gates = vec![0.0; 4 * hd];
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    cell_forward(params, x, h_prev, c_prev, &mut gates, &mut c, &mut h);
    (h, c)
}

/// Intermediates of one sequence kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SeqCache {
    ids: Vec<u32>,
    /// `T x 4H` gate activations.
    gates: Vec<f64>,
    /// `(T+1) x H`, row 0 is the zero initial state.
    cells: Vec<f64>,
    hiddens: Vec<f64>,
    /// Timestep chosen by max pooling for each hidden coordinate.
    argmax: Vec<usize>,
    /// Dropout multipliers (0 or 1/(1-rate)); `None` in eval mode.
    mask: Option<Vec<f64>>,
    dropped: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    prob: f64,
}

impl SeqCache {
    pub fn prob(&self) -> f64 {
        self.prob
    }

    pub fn steps(&self) -> usize {
        self.ids.len()
    }

    /// Inputs of the first dense layer's ReLU.
    pub fn dense_preactivations(&self) -> &[f64] {
        &self.pre1
    }

    /// Smallest gap between the best and runner-up timestep over all
    /// max-pooled coordinates; infinite when fewer than two steps exist.
    pub fn pooling_margin(&self) -> f64 {
        let hd = self.argmax.len();
        let len = self.ids.len();
        let mut margin = f64::INFINITY;
        if len < 2 {
            return margin;
        }
        for k in 0..hd {
            let best = self.hiddens[(self.argmax[k] + 1) * hd + k];
            for t in (0..len).filter(|&t| t != self.argmax[k]) {
                margin = margin.min(best - self.hiddens[(t + 1) * hd + k]);
            }
        }
        margin
    }
}

fn check_ids(params: &ModelParams, ids: &[u32]) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= params.vocab) {
        Some(&id) => Err(Error::IdOutOfRange {
            id,
            size: params.vocab,
        }),
        None => Ok(()),
    }
}

fn dropout_mask(rate: f64, hidden: usize, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..hidden)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn forward_seq(
    config: &ModelConfig,
    p: &ModelParams,
    ids: &[u32],
    mask: Option<Vec<f64>>,
) -> SeqCache {
    let (e, hd, d) = (p.embed, p.hidden, p.dense);
    let g = 4 * hd;
    let len = ids.iter().position(|&id| id == PAD_ID).unwrap_or(ids.len());
    let ids = ids[..len].to_vec();
    let mut gates = vec![0.0; len * g];
    let mut cells = vec![0.0; (len + 1) * hd];
    let mut hiddens = vec![0.0; (len + 1) * hd];
    for (t, &id) in ids.iter().enumerate() {
        let x = &p.embedding[id as usize * e..(id as usize + 1) * e];
        let (c_done, c_rest) = cells.split_at_mut((t + 1) * hd);
        let (h_done, h_rest) = hiddens.split_at_mut((t + 1) * hd);
        cell_forward(
            p,
            x,
            &h_done[t * hd..],
            &c_done[t * hd..],
            &mut gates[t * g..(t + 1) * g],
            &mut c_rest[..hd],
            &mut h_rest[..hd],
        );
    }

    let mut pooled = vec![0.0; hd];
    let mut argmax = vec![0usize; hd];
    if len > 0 {
        match config.pooling {
            Pooling::Max => {
                for k in 0..hd {
                    let mut best = hiddens[hd + k];
                    let mut at = 0;
                    for t in 1..len {
                        let v = hiddens[(t + 1) * hd + k];
                        if v > best {
                            best = v;
                            at = t;
                        }
                    }
                    pooled[k] = best;
                    argmax[k] = at;
                }
            }
            Pooling::Mean => {
                for t in 0..len {
                    axpy(&mut pooled, 1.0, &hiddens[(t + 1) * hd..(t + 2) * hd]);
                }
                pooled.iter_mut().for_each(|x| *x /= len as f64);
            }
        }
    }

    let dropped: Vec<f64> = match &mask {
        Some(m) => pooled.iter().zip(m).map(|(x, m)| x * m).collect(),
        None => pooled,
    };
    let mut pre1 = p.dense1_b.clone();
    for (k, &xk) in dropped.iter().enumerate() {
        axpy(&mut pre1, xk, &p.dense1_w[k * d..(k + 1) * d]);
    }
    let act1: Vec<f64> = pre1.iter().map(|&x| x.max(0.0)).collect();
    let logit = p.dense2_b[0] + dot(&p.dense2_w, &act1);
    SeqCache {
        ids,
        gates,
        cells,
        hiddens,
        argmax,
        mask,
        dropped,
        pre1,
        act1,
        prob: sigmoid(logit),
    }
}

/// Accumulates the gradient of `dlogit * logit` into `grads`.
fn backward_seq(config: &ModelConfig, p: &ModelParams, s: &SeqCache, dlogit: f64, grads: &mut Gradients) {
    let (e, hd, d) = (p.embed, p.hidden, p.dense);
    let g = 4 * hd;

    grads.dense2_b[0] += dlogit;
    axpy(&mut grads.dense2_w, dlogit, &s.act1);
    let dpre1: Vec<f64> = (0..d)
        .map(|j| if s.pre1[j] > 0.0 { dlogit * p.dense2_w[j] } else { 0.0 })
        .collect();
    axpy(&mut grads.dense1_b, 1.0, &dpre1);
    let mut dpooled = vec![0.0; hd];
    for k in 0..hd {
        axpy(&mut grads.dense1_w[k * d..(k + 1) * d], s.dropped[k], &dpre1);
        let dd = dot(&p.dense1_w[k * d..(k + 1) * d], &dpre1);
        dpooled[k] = match &s.mask {
            Some(m) => dd * m[k],
            None => dd,
        };
    }

    let len = s.ids.len();
    if len == 0 {
        return;
    }
    let mean_scale = 1.0 / len as f64;
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; g];
    let mut dx = vec![0.0; e];
    for t in (0..len).rev() {
        let gates = &s.gates[t * g..(t + 1) * g];
        let c_t = &s.cells[(t + 1) * hd..(t + 2) * hd];
        let c_prev = &s.cells[t * hd..(t + 1) * hd];
        for k in 0..hd {
            let pool_grad = match config.pooling {
                Pooling::Max if s.argmax[k] == t => dpooled[k],
                Pooling::Max => 0.0,
                Pooling::Mean => dpooled[k] * mean_scale,
            };
            let dh = dh_next[k] + pool_grad;
            let (i, f, gg, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            let tc = c_t[k].tanh();
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * gg * i * (1.0 - i);
            dz[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - gg * gg);
            dz[3 * hd + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        axpy(&mut grads.lstm_b, 1.0, &dz);

        let id = s.ids[t] as usize;
        let x = &p.embedding[id * e..(id + 1) * e];
        for k in 0..e {
            axpy(&mut grads.lstm_w[k * g..(k + 1) * g], x[k], &dz);
            dx[k] = dot(&p.lstm_w[k * g..(k + 1) * g], &dz);
        }
        axpy(&mut grads.embedding[id * e..(id + 1) * e], 1.0, &dx);

        if t > 0 {
            let h_prev = &s.hiddens[t * hd..(t + 1) * hd];
            for k in 0..hd {
                axpy(&mut grads.lstm_u[k * g..(k + 1) * g], h_prev[k], &dz);
                dh_next[k] = dot(&p.lstm_u[k * g..(k + 1) * g], &dz);
            }
        }
    }
}

/// Everything [`backward`] needs from a forward pass.
pub struct ForwardCache<'a> {
    config: &'a ModelConfig,
    params: &'a ModelParams,
    seqs: Vec<SeqCache>,
}

impl ForwardCache<'_> {
    pub fn probs(&self) -> Vec<f64> {
        self.seqs.iter().map(|s| s.prob).collect()
    }

    pub fn seqs(&self) -> &[SeqCache] {
        &self.seqs
    }
}

/// Runs the network on a batch. Dropout masks are drawn from `rng` in
/// batch order, only when `train_mode` is set.
pub fn forward<'a>(
    config: &'a ModelConfig,
    params: &'a ModelParams,
    batch: &[EncodedSequence],
    train_mode: bool,
    rng: &mut Rng,
) -> Result<(Vec<f64>, ForwardCache<'a>)> {
    let mut seqs = Vec::with_capacity(batch.len());
    for seq in batch {
        check_ids(params, &seq.ids)?;
        let mask = (train_mode && config.dropout_rate > 0.0)
            .then(|| dropout_mask(config.dropout_rate, params.hidden, rng));
        seqs.push(forward_seq(config, params, &seq.ids, mask));
    }
    let cache = ForwardCache { config, params, seqs };
    Ok((cache.probs(), cache))
}

/// Gradient of the mean clamped binary cross-entropy w.r.t. the logit.
fn dloss_dlogit(prob: f64, label: u8, batch: usize) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prob) {
        // clamped region: the loss is flat there
        return 0.0;
    }
    (prob - label as f64) / batch as f64
}

/// Gradients of [`bce_loss`] over the cached batch.
pub fn backward(cache: &ForwardCache<'_>, labels: &[u8]) -> Gradients {
    assert_eq!(cache.seqs.len(), labels.len(), "labels must match the batch");
    let mut grads = cache.params.zeros_like();
    let n = labels.len();
    for (s, &y) in cache.seqs.iter().zip(labels) {
        backward_seq(cache.config, cache.params, s, dloss_dlogit(s.prob, y, n), &mut grads);
    }
    grads
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

/// Forward and backward one sequence at a time, accumulating into `grads`
/// (which is overwritten). Returns the batch loss. Memory stays bounded by
/// the longest sequence rather than the whole batch.
pub fn loss_and_grad(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &[&EncodedSequence],
    rng: &mut Rng,
    grads: &mut Gradients,
) -> Result<f64> {
    grads.fill(0.0);
    let n = batch.len();
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for &seq in batch {
        check_ids(params, &seq.ids)?;
        let mask = (config.dropout_rate > 0.0).then(|| dropout_mask(config.dropout_rate, params.hidden, rng));
        let cache = forward_seq(config, params, &seq.ids, mask);
        backward_seq(config, params, &cache, dloss_dlogit(cache.prob, seq.label, n), grads);
        probs.push(cache.prob);
        labels.push(seq.label);
    }
    Ok(bce_loss(&probs, &labels))
}

/// Eval-mode probabilities without keeping intermediates.
pub fn predict(config: &ModelConfig, params: &ModelParams, seqs: &[EncodedSequence]) -> Result<Vec<f64>> {
    seqs.iter()
        .map(|s| {
            check_ids(params, &s.ids)?;
            Ok(forward_seq(config, params, &s.ids, None).prob)
        })
        .collect()
}
