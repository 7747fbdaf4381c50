//! Segmentation of Dalvik disassembly into instruction, block, method and
//! class sequences, and an LSTM classifier trained on them.

pub mod encode;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod segment;

pub use encode::{EncodedSequence, Vocabulary};
pub use error::{Error, Result};
pub use ingest::{DatasetManifest, Dialect, Label, ManifestEntry, RawDocument};
pub use net::{ModelConfig, ModelParams};
pub use segment::{SequenceUnit, UnitKind};
