//! Tokenization, vocabulary construction and fixed-length integer encoding.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::segment::{SequenceUnit, UnitKind};

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const OOV_TOKEN: &str = "<OOV>";

pub const DEFAULT_VOCAB_SIZE: usize = 30_000;
pub const DEFAULT_MIN_FREQ: usize = 1;

const DATASET_MAGIC: &[u8; 4] = b"DSQE";
pub const DATASET_VERSION: u8 = 1;

/// Default sequence length (in tokens) for each unit kind.
pub fn seq_len_for(kind: UnitKind) -> usize {
    match kind {
        UnitKind::Ism => 15,
        UnitKind::Bsm => 40,
        UnitKind::Msm => 500,
        UnitKind::Csm => 2500,
    }
}

/// Splits one instruction line: commas become spaces, then whitespace split.
pub fn tokenize_line(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
}

pub fn tokenize_lines<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    lines
        .iter()
        .flat_map(|l| tokenize_line(l.as_ref()))
        .map(str::to_owned)
        .collect()
}

pub fn tokenize(unit: &SequenceUnit) -> Vec<String> {
    tokenize_lines(&unit.lines)
}

pub fn token_count(unit: &SequenceUnit) -> usize {
    unit.lines.iter().map(|l| tokenize_line(l).count()).sum()
}

/// Token to id map with `<PAD>` = 0 and `<OOV>` = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    by_id: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// A vocabulary with only the reserved entries.
    pub fn empty() -> Self {
        Vocabulary {
            by_id: vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()],
            ids: HashMap::new(),
        }
    }

    /// Builds a vocabulary from ranked tokens; ids are assigned from 2 upward.
    pub fn from_ranked<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::empty();
        for t in tokens {
            let t = t.into();
            if !v.ids.contains_key(&t) {
                v.ids.insert(t.clone(), v.by_id.len() as u32);
                v.by_id.push(t);
            }
        }
        v
    }

    pub fn size(&self) -> usize {
        self.by_id.len()
    }

    /// Id of a token, or `None` for out-of-vocabulary tokens.
    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.by_id.get(id as usize).map(String::as_str)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.by_id.iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::format("vocabulary", format!("line {}: missing tab", idx + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::format("vocabulary", format!("line {}: bad id {id:?}", idx + 1)))?;
            if id != idx {
                return Err(Error::format(
                    "vocabulary",
                    format!("line {}: ids must be contiguous, found {id}", idx + 1),
                ));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != OOV_TOKEN {
            return Err(Error::format("vocabulary", "ids 0 and 1 must be <PAD> and <OOV>"));
        }
        let v = Self::from_ranked(tokens.drain(2..));
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_tsv(&fs::read_to_string(path)?)
    }
}

/// Counts tokens over the training units and keeps the `max_size - 2` most
/// frequent ones with count `>= min_freq`, ties broken lexicographically.
pub fn build_vocabulary(units: &[SequenceUnit], max_size: usize, min_freq: usize) -> Result<Vocabulary> {
    if max_size < 3 || min_freq < 1 {
        return Err(Error::InvalidConfig(format!(
            "vocabulary needs max_size >= 3 and min_freq >= 1 (got {max_size}, {min_freq})"
        )));
    }
    if units.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for unit in units {
        for line in &unit.lines {
            for tok in tokenize_line(line) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - 2);
    Ok(Vocabulary::from_ranked(ranked.into_iter().map(|(t, _)| t)))
}

/// Fixed-length id sequence with its target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub app_id: String,
    pub ids: Vec<u32>,
    /// 1 = malicious.
    pub label: u8,
}

impl EncodedSequence {
    /// Number of leading non-pad positions.
    pub fn len_unpadded(&self) -> usize {
        self.ids.iter().position(|&id| id == PAD_ID).unwrap_or(self.ids.len())
    }
}

/// Maps ids to tokens and pads the tail to `seq_len`; keeps the first
/// `seq_len` tokens when the unit is longer.
pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, seq_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = tokens.iter().take(seq_len).map(|t| vocab.id_of(t.as_ref())).collect();
    ids.resize(seq_len, PAD_ID);
    ids
}

pub fn encode(unit: &SequenceUnit, vocab: &Vocabulary, seq_len: usize) -> EncodedSequence {
    let mut ids: Vec<u32> = unit
        .lines
        .iter()
        .flat_map(|l| tokenize_line(l))
        .take(seq_len)
        .map(|t| vocab.id_of(t))
        .collect();
    ids.resize(seq_len, PAD_ID);
    EncodedSequence {
        app_id: unit.app_id.clone(),
        ids,
        label: unit.label.as_target(),
    }
}

/// Inverse of encoding for in-vocabulary tokens; trailing pads are dropped.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .take_while(|&&id| id != PAD_ID)
        .map(|&id| vocab.token(id).unwrap_or(OOV_TOKEN).to_string())
        .collect()
}

pub fn label_from_target(target: u8) -> Label {
    if target == 1 {
        Label::Malicious
    } else {
        Label::Benign
    }
}

/// Writes the binary container: `DSQE`, version, L (u32), count (u64),
/// `count * L` little-endian u32 ids, then `count` label bytes.
pub fn write_dataset<W: Write>(mut w: W, seq_len: usize, seqs: &[EncodedSequence]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&[DATASET_VERSION])?;
    w.write_all(&(seq_len as u32).to_le_bytes())?;
    w.write_all(&(seqs.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(seqs.len() * seq_len * 4);
    for s in seqs {
        if s.ids.len() != seq_len {
            return Err(Error::format(
                "dataset",
                format!("sequence of length {} in a length-{seq_len} container", s.ids.len()),
            ));
        }
        for id in &s.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    let labels: Vec<u8> = seqs.iter().map(|s| s.label).collect();
    w.write_all(&labels)?;
    Ok(())
}

/// One stored sequence: padded ids and its 0/1 label.
pub type DatasetRecord = (Vec<u32>, u8);

/// Reads the container back as `(seq_len, records)`.
pub fn read_dataset<R: Read>(mut r: R) -> Result<(usize, Vec<DatasetRecord>)> {
    let mut head = [0u8; 17];
    r.read_exact(&mut head).map_err(|e| truncated(e, "header"))?;
    if &head[0..4] != DATASET_MAGIC {
        return Err(Error::format("dataset", "bad magic"));
    }
    if head[4] != DATASET_VERSION {
        return Err(Error::format("dataset", format!("unsupported version {}", head[4])));
    }
    let seq_len = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(head[9..17].try_into().unwrap()) as usize;
    let mut ids = vec![0u8; count * seq_len * 4];
    r.read_exact(&mut ids).map_err(|e| truncated(e, "ids"))?;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels).map_err(|e| truncated(e, "labels"))?;
    let flat: Vec<u32> = ids
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let rows = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| (flat[i * seq_len..(i + 1) * seq_len].to_vec(), label))
        .collect();
    Ok((seq_len, rows))
}

fn truncated(e: io::Error, part: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format("dataset", format!("truncated {part}"))
    } else {
        Error::Io(e)
    }
}
