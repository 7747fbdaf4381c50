use std::io::{Read, Write};

use rand::Rng as _;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

const CHECKPOINT_MAGIC: &[u8; 4] = b"DSQM";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Learnable arrays of the network, all row-major.
///
/// The LSTM input and recurrent weights are stored input-major: row `k`
/// holds the contributions of input coordinate `k` to all `4H` gate
/// pre-activations, laid out as the blocks (input, forget, cell, output).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub dense: usize,
    /// `vocab x embed`
    pub embedding: Vec<f64>,
    /// `embed x 4*hidden`
    pub lstm_w: Vec<f64>,
    /// `hidden x 4*hidden`
    pub lstm_u: Vec<f64>,
    /// `4*hidden`
    pub lstm_b: Vec<f64>,
    /// `hidden x dense`
    pub dense1_w: Vec<f64>,
    pub dense1_b: Vec<f64>,
    /// `dense`
    pub dense2_w: Vec<f64>,
    /// length 1
    pub dense2_b: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

pub const TENSOR_NAMES: [&str; 8] = [
    "embedding",
    "lstm_w",
    "lstm_u",
    "lstm_b",
    "dense1_w",
    "dense1_b",
    "dense2_w",
    "dense2_b",
];

impl ModelParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, dense: usize) -> Self {
        let g = 4 * hidden;
        ModelParams {
            vocab,
            embed,
            hidden,
            dense,
            embedding: vec![0.0; vocab * embed],
            lstm_w: vec![0.0; embed * g],
            lstm_u: vec![0.0; hidden * g],
            lstm_b: vec![0.0; g],
            dense1_w: vec![0.0; hidden * dense],
            dense1_b: vec![0.0; dense],
            dense2_w: vec![0.0; dense],
            dense2_b: vec![0.0; 1],
        }
    }

    pub fn zeros_for(config: &ModelConfig) -> Self {
        Self::zeros(config.vocab_size, config.embed_dim, config.hidden, config.dense_width)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab, self.embed, self.hidden, self.dense)
    }

    pub fn shapes(&self) -> [Vec<usize>; 8] {
        let g = 4 * self.hidden;
        [
            vec![self.vocab, self.embed],
            vec![self.embed, g],
            vec![self.hidden, g],
            vec![g],
            vec![self.hidden, self.dense],
            vec![self.dense],
            vec![self.dense],
            vec![1],
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.embedding,
            &self.lstm_w,
            &self.lstm_u,
            &self.lstm_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.dense2_w,
            &self.dense2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.embedding,
            &mut self.lstm_w,
            &mut self.lstm_u,
            &mut self.lstm_b,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Forget-gate block of the LSTM bias.
    pub fn forget_bias(&self) -> &[f64] {
        &self.lstm_b[self.hidden..2 * self.hidden]
    }

    /// Flat coordinate accessor spanning all tensors in [`TENSOR_NAMES`] order.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for t in self.tensors() {
            if idx < t.len() {
                return t[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range")
    }
}

/// Glorot-uniform weights, zero biases, forget-gate bias 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::zeros_for(config);
    let mut rng = rng::stream(seed, Stream::Init);
    let (v, e, h, d) = (p.vocab, p.embed, p.hidden, p.dense);
    let mut fill = |buf: &mut [f64], fan_in: usize, fan_out: usize| {
        let s = glorot_bound(fan_in, fan_out);
        for x in buf.iter_mut() {
            *x = (2.0 * rng.gen::<f64>() - 1.0) * s;
        }
    };
    fill(&mut p.embedding, v, e);
    fill(&mut p.lstm_w, e, 4 * h);
    fill(&mut p.lstm_u, h, 4 * h);
    fill(&mut p.dense1_w, h, d);
    fill(&mut p.dense2_w, d, 1);
    p.lstm_b[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    p
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Writes `DSQM`, version, the JSON config and every tensor as
/// (name, shape, little-endian f64 values).
pub fn write_checkpoint<W: Write>(mut w: W, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    check_shapes(config, params)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;
    let cfg = serde_json::to_vec(config)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    w.write_all(&(TENSOR_NAMES.len() as u32).to_le_bytes())?;
    for ((name, shape), data) in TENSOR_NAMES.iter().zip(params.shapes()).zip(params.tensors()) {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[shape.len() as u8])?;
        for dim in &shape {
            w.write_all(&(*dim as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(data.len() * 8);
        for x in data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelConfig, ModelParams)> {
    let bad = |reason: &str| Error::format("checkpoint", reason);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    if magic[4] != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config: ModelConfig = serde_json::from_slice(&cfg)?;
    config.validate()?;
    let mut params = ModelParams::zeros_for(&config);
    let count = read_u32(&mut r)? as usize;
    if count != TENSOR_NAMES.len() {
        return Err(bad("unexpected tensor count"));
    }
    let shapes = params.shapes();
    for (i, tensor) in params.tensors_mut().into_iter().enumerate() {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut name)?;
        if name != TENSOR_NAMES[i].as_bytes() {
            return Err(bad("unexpected tensor name"));
        }
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        if shape != shapes[i] {
            return Err(bad("tensor shape does not match config"));
        }
        let mut buf = vec![0u8; tensor.len() * 8];
        r.read_exact(&mut buf)?;
        for (x, b) in tensor.iter_mut().zip(buf.chunks_exact(8)) {
            *x = f64::from_le_bytes(b.try_into().unwrap());
        }
    }
    Ok((config, params))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn check_shapes(config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let expect = ModelParams::zeros_for(config).shapes();
    let lengths_ok = params
        .shapes()
        .iter()
        .zip(params.tensors())
        .all(|(shape, t)| shape.iter().product::<usize>() == t.len());
    if params.shapes() != expect || !lengths_ok {
        return Err(Error::InvalidConfig("parameter shapes do not match config".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::new(6, 20);
        c.embed_dim = 5;
        c.hidden = 4;
        c.dense_width = 3;
        c
    }

    #[test]
    fn init_is_deterministic() {
        let c = small();
        assert_eq!(init_params(&c, 3), init_params(&c, 3));
        assert_ne!(init_params(&c, 3), init_params(&c, 4));
    }

    #[test]
    fn init_respects_bounds_and_forget_bias() {
        let c = small();
        let p = init_params(&c, 11);
        assert!(p.forget_bias().iter().all(|&b| b == 1.0));
        let (h, e, v, d) = (c.hidden, c.embed_dim, c.vocab_size, c.dense_width);
        let checks: [(&[f64], f64); 5] = [
            (&p.embedding, glorot_bound(v, e)),
            (&p.lstm_w, glorot_bound(e, 4 * h)),
            (&p.lstm_u, glorot_bound(h, 4 * h)),
            (&p.dense1_w, glorot_bound(h, d)),
            (&p.dense2_w, glorot_bound(d, 1)),
        ];
        for (t, s) in checks {
            assert!(t.iter().all(|x| x.abs() <= s));
            assert!(t.iter().any(|&x| x != 0.0));
        }
        let other_bias: Vec<_> = p.lstm_b.iter().enumerate().filter(|(i, _)| *i < h || *i >= 2 * h).collect();
        assert!(other_bias.iter().all(|(_, &b)| b == 0.0));
        assert!(p.dense1_b.iter().chain(&p.dense2_b).all(|&b| b == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let c = small();
        let p = init_params(&c, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();
        let (c2, p2) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(c2, c);
        for (a, b) in p.tensors().iter().zip(p2.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let mut again = Vec::new();
        write_checkpoint(&mut again, &c2, &p2).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn checkpoint_rejects_mismatch() {
        let c = small();
        let mut p = init_params(&c, 5);
        p.dense1_b.push(0.0);
        assert!(write_checkpoint(Vec::new(), &c, &p).is_err());
        assert!(read_checkpoint(&b"NOPE\x01"[..]).is_err());
    }

    #[test]
    fn flat_access_spans_tensors() {
        let mut p = ModelParams::zeros(3, 2, 1, 2);
        let n = p.num_params();
        p.set_flat(n - 1, 4.5);
        assert_eq!(p.dense2_b[0], 4.5);
        p.set_flat(0, -1.0);
        assert_eq!(p.embedding[0], -1.0);
        assert_eq!(p.get_flat(n - 1), 4.5);
    }
}
