use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{ContingencyTable, Metrics};
use crate::encode::token_count;
use crate::ingest::RawDocument;
use crate::segment::SequenceUnit;

/// File, sequence and token counts of a segmented corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub files: usize,
    pub files_by_label: BTreeMap<String, usize>,
    pub files_by_dialect: BTreeMap<String, usize>,
    pub sequences: usize,
    pub sequences_by_label: BTreeMap<String, usize>,
    pub mean_lines: f64,
    pub mean_tokens: f64,
}

pub fn corpus_stats(docs: &[RawDocument], units: &[SequenceUnit]) -> CorpusStats {
    let mut files_by_label = BTreeMap::new();
    let mut files_by_dialect = BTreeMap::new();
    for d in docs {
        *files_by_label.entry(d.label.to_string()).or_insert(0) += 1;
        *files_by_dialect.entry(d.dialect.to_string()).or_insert(0) += 1;
    }
    let mut sequences_by_label = BTreeMap::new();
    let (mut lines, mut tokens) = (0usize, 0usize);
    for u in units {
        *sequences_by_label.entry(u.label.to_string()).or_insert(0) += 1;
        lines += u.lines.len();
        tokens += token_count(u);
    }
    let mean = |total: usize| if units.is_empty() { 0.0 } else { total as f64 / units.len() as f64 };
    CorpusStats {
        files: docs.len(),
        files_by_label,
        files_by_dialect,
        sequences: units.len(),
        sequences_by_label,
        mean_lines: mean(lines),
        mean_tokens: mean(tokens),
    }
}

/// A contingency table with the rates derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub table: ContingencyTable,
    pub metrics: Metrics,
}

/// One line of the flat results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub kind: String,
    pub dialect: String,
    pub tpr: f64,
    pub fpr: f64,
    pub acc: f64,
    pub mean_tokens: f64,
    pub n_sequences: usize,
}

pub const CSV_HEADER: &str = "kind,dialect,tpr,fpr,acc,mean_tokens,n_sequences";

pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.kind, r.dialect, r.tpr, r.fpr, r.acc, r.mean_tokens, r.n_sequences
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Dialect, Label};
    use crate::segment::UnitKind;

    #[test]
    fn stats_count_everything() {
        let doc = RawDocument {
            app_id: "a".into(),
            label: Label::Benign,
            dialect: Dialect::Jeb,
            lines: vec![],
        };
        let unit = |lines: &[&str]| SequenceUnit {
            app_id: "a".into(),
            kind: UnitKind::Bsm,
            label: Label::Benign,
            lines: lines.iter().map(|s| s.to_string()).collect(),
        };
        let s = corpus_stats(&[doc], &[unit(&["a, b c"]), unit(&["d", "e"])]);
        assert_eq!(s.files, 1);
        assert_eq!(s.files_by_dialect["jeb"], 1);
        assert_eq!(s.sequences, 2);
        assert_eq!(s.mean_tokens, 2.5);
        assert_eq!(s.mean_lines, 1.5);
    }

    #[test]
    fn csv_layout() {
        let csv = render_csv(&[CsvRow {
            kind: "csm".into(),
            dialect: "apktool".into(),
            tpr: 0.5,
            fpr: 0.0,
            acc: 0.75,
            mean_tokens: 12.25,
            n_sequences: 8,
        }]);
        assert_eq!(csv, "kind,dialect,tpr,fpr,acc,mean_tokens,n_sequences\ncsm,apktool,0.5,0,0.75,12.25,8\n");
    }
}
