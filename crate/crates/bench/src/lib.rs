//! Fixtures shared by the benchmarks.

use dsq_core::encode::{build_vocabulary, encode};
use dsq_core::harness::synth::{generate_documents, CorpusSpec, PlantedPattern};
use dsq_core::segment::segment;
use dsq_core::{EncodedSequence, ModelConfig, RawDocument, UnitKind};

/// A small planted corpus, `apps` per label.
pub fn documents(apps: usize) -> Vec<RawDocument> {
    let spec = CorpusSpec {
        apps_per_label: apps,
        planted: Some(PlantedPattern::loader()),
        ..CorpusSpec::default()
    };
    generate_documents(&spec, 0)
}

/// Encoded units of one kind and a matching default-sized config.
pub fn encoded(kind: UnitKind, apps: usize, seq_len: usize) -> (ModelConfig, Vec<EncodedSequence>) {
    let units: Vec<_> = documents(apps).iter().flat_map(|d| segment(d, kind)).collect();
    let vocab = build_vocabulary(&units, 30_000, 1).expect("non-empty corpus");
    let seqs = units.iter().map(|u| encode(u, &vocab, seq_len)).collect();
    (ModelConfig::new(seq_len, vocab.size()), seqs)
}
