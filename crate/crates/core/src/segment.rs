//! Splitting normalized listings into instruction, basic-block, method and
//! class sequences.
//!
//! Every kind partitions the document: concatenating the units of a
//! document in order gives back its lines exactly. Lines that fall outside
//! any method (class headers, fields, annotations) become residual units of
//! their own instead of being dropped.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{Dialect, Label, RawDocument};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    /// One instruction line per sequence.
    Ism,
    /// One basic block per sequence.
    Bsm,
    /// One method per sequence.
    Msm,
    /// One class per sequence.
    Csm,
}

impl UnitKind {
    pub const ALL: [UnitKind; 4] = [UnitKind::Ism, UnitKind::Bsm, UnitKind::Msm, UnitKind::Csm];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Ism => "ism",
            UnitKind::Bsm => "bsm",
            UnitKind::Msm => "msm",
            UnitKind::Csm => "csm",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ism" => Ok(UnitKind::Ism),
            "bsm" => Ok(UnitKind::Bsm),
            "msm" => Ok(UnitKind::Msm),
            "csm" => Ok(UnitKind::Csm),
            other => Err(format!("unknown unit kind {other:?}")),
        }
    }
}

/// One training sequence cut from a document. Inherits the document label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceUnit {
    pub app_id: String,
    pub kind: UnitKind,
    pub label: Label,
    pub lines: Vec<String>,
}

/// Lowercased first whitespace-delimited token of a line.
pub fn mnemonic(line: &str) -> String {
    line.split_whitespace()
        .next()
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Mnemonic prefixes after which a basic block ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminatorSet {
    prefixes: Vec<String>,
}

impl TerminatorSet {
    /// Dalvik jumps, calls, switches and exits.
    pub const DALVIK: [&'static str; 7] = [
        "goto",
        "if-",
        "invoke-",
        "return",
        "throw",
        "packed-switch",
        "sparse-switch",
    ];

    pub fn new<I, S>(prefixes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TerminatorSet {
            prefixes: prefixes.into_iter().map(|p| p.into().to_ascii_lowercase()).collect(),
        }
    }

    pub fn dalvik() -> Self {
        Self::new(Self::DALVIK)
    }

    pub fn prefixes(&self) -> &[String] {
        &self.prefixes
    }

    pub fn matches_mnemonic(&self, mnemonic: &str) -> bool {
        !mnemonic.is_empty() && self.prefixes.iter().any(|p| mnemonic.starts_with(p.as_str()))
    }

    pub fn is_terminator(&self, line: &str) -> bool {
        self.matches_mnemonic(&mnemonic(line))
    }
}

/// Block terminators for a dialect. All three tools print Dalvik mnemonics,
/// so they share one set.
pub fn terminator_set(_dialect: Dialect) -> TerminatorSet {
    TerminatorSet::dalvik()
}

/// Line patterns marking method and class boundaries in one dialect.
#[derive(Clone, Debug)]
pub struct BoundaryRules {
    pub method_start: Regex,
    /// Without an end marker a method runs until the next method or class start.
    pub method_end: Option<Regex>,
    pub class_start: Regex,
}

impl BoundaryRules {
    pub fn new(method_start: &str, method_end: Option<&str>, class_start: &str) -> Result<Self> {
        Ok(BoundaryRules {
            method_start: Regex::new(method_start)?,
            method_end: method_end.map(Regex::new).transpose()?,
            class_start: Regex::new(class_start)?,
        })
    }

    pub fn for_dialect(dialect: Dialect) -> Self {
        let (start, end, class) = match dialect {
            Dialect::Apktool => (r"^\.method\b", Some(r"^\.end method\b"), r"^\.class\b"),
            // JEB's Dalvik view keeps smali-style directives.
            Dialect::Jeb => (r"^\.method\b", Some(r"^\.end method\b"), r"^\.class\b"),
            // IDA names routines `Class_method@SIG:`; listings may lack end markers.
            Dialect::Ida => (
                r"^(?:\.method\b|[\w$]+@[\w$\[]+:$)",
                Some(r"^\.end method\b"),
                r"^\.class\b",
            ),
        };
        Self::new(start, end, class).expect("built-in boundary patterns are valid")
    }

    fn is_method_end(&self, line: &str) -> bool {
        self.method_end.as_ref().is_some_and(|re| re.is_match(line))
    }
}

/// Configurable segmentation rules. [`Segmenter::default`] gives the
/// built-in terminators and boundary markers for every dialect.
#[derive(Clone, Debug)]
pub struct Segmenter {
    terminators: HashMap<Dialect, TerminatorSet>,
    rules: HashMap<Dialect, BoundaryRules>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter {
            terminators: Dialect::ALL.iter().map(|&d| (d, terminator_set(d))).collect(),
            rules: Dialect::ALL.iter().map(|&d| (d, BoundaryRules::for_dialect(d))).collect(),
        }
    }
}

impl Segmenter {
    pub fn with_terminators(mut self, dialect: Dialect, set: TerminatorSet) -> Self {
        self.terminators.insert(dialect, set);
        self
    }

    pub fn with_rules(mut self, dialect: Dialect, rules: BoundaryRules) -> Self {
        self.rules.insert(dialect, rules);
        self
    }

    pub fn terminators(&self, dialect: Dialect) -> &TerminatorSet {
        &self.terminators[&dialect]
    }

    pub fn rules(&self, dialect: Dialect) -> &BoundaryRules {
        &self.rules[&dialect]
    }

    pub fn segment(&self, doc: &RawDocument, kind: UnitKind) -> Vec<SequenceUnit> {
        let groups = match kind {
            UnitKind::Ism => doc.lines.iter().map(|l| vec![l.clone()]).collect(),
            UnitKind::Bsm => split_blocks(&doc.lines, self.terminators(doc.dialect)),
            UnitKind::Msm => split_methods(&doc.lines, self.rules(doc.dialect), &doc.app_id),
            UnitKind::Csm => split_classes(&doc.lines, self.rules(doc.dialect), &doc.app_id),
        };
        groups
            .into_iter()
            .map(|lines| SequenceUnit {
                app_id: doc.app_id.clone(),
                kind,
                label: doc.label,
                lines,
            })
            .collect()
    }
}

fn default_segmenter() -> &'static Segmenter {
    static SEG: OnceLock<Segmenter> = OnceLock::new();
    SEG.get_or_init(Segmenter::default)
}

/// Segments with the built-in rules.
pub fn segment(doc: &RawDocument, kind: UnitKind) -> Vec<SequenceUnit> {
    default_segmenter().segment(doc, kind)
}

fn split_blocks(lines: &[String], terms: &TerminatorSet) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for line in lines {
        cur.push(line.clone());
        if terms.is_terminator(line) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn split_methods(lines: &[String], rules: &BoundaryRules, app_id: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut in_method = false;
    let mut seen_method = false;
    for line in lines {
        let starts = rules.method_start.is_match(line);
        if starts || (in_method && rules.class_start.is_match(line)) {
            // a start closes any open residual run or unterminated method
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            in_method = starts;
            seen_method |= starts;
            cur.push(line.clone());
            continue;
        }
        cur.push(line.clone());
        if in_method && rules.is_method_end(line) {
            out.push(std::mem::take(&mut cur));
            in_method = false;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if !seen_method && !lines.is_empty() {
        log::warn!("{app_id}: no method markers matched; document kept as one unit");
    }
    out
}

fn split_classes(lines: &[String], rules: &BoundaryRules, app_id: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut seen_class = false;
    for line in lines {
        if rules.class_start.is_match(line) {
            seen_class = true;
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(line.clone());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if !seen_class && !lines.is_empty() {
        log::warn!("{app_id}: no class markers matched; document kept as one unit");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitStats {
    pub count: usize,
    pub mean_lines: f64,
}

pub fn unit_stats(units: &[SequenceUnit]) -> UnitStats {
    if units.is_empty() {
        return UnitStats {
            count: 0,
            mean_lines: 0.0,
        };
    }
    let total: usize = units.iter().map(|u| u.lines.len()).sum();
    UnitStats {
        count: units.len(),
        mean_lines: total as f64 / units.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(lines: &[&str]) -> RawDocument {
        RawDocument {
            app_id: "app".into(),
            label: Label::Malicious,
            dialect: Dialect::Apktool,
            lines: lines.iter().map(|s| s.to_string()).collect(),
        }
    }

    const FOO: [&str; 8] = [
        ".class public Lcom/e/Foo;",
        ".method public bar()V",
        "const/4 v0, 0x0",
        "if-eqz v0, :cond_0",
        "invoke-static {}, Lcom/e/Foo;->baz()V",
        ":cond_0",
        "return-void",
        ".end method",
    ];

    fn lines_of(units: &[SequenceUnit]) -> Vec<Vec<&str>> {
        units
            .iter()
            .map(|u| u.lines.iter().map(String::as_str).collect())
            .collect()
    }

    #[test]
    fn blocks_close_after_terminators() {
        let units = segment(&doc(&FOO), UnitKind::Bsm);
        assert_eq!(
            lines_of(&units),
            vec![
                FOO[0..4].to_vec(),
                FOO[4..5].to_vec(),
                FOO[5..7].to_vec(),
                FOO[7..8].to_vec(),
            ]
        );
        assert!(units.iter().all(|u| u.label == Label::Malicious && u.kind == UnitKind::Bsm));
    }

    #[test]
    fn methods_with_residual_header() {
        let units = segment(&doc(&FOO), UnitKind::Msm);
        assert_eq!(lines_of(&units), vec![FOO[0..1].to_vec(), FOO[1..8].to_vec()]);
    }

    #[test]
    fn instructions_one_per_unit() {
        let units = segment(&doc(&FOO), UnitKind::Ism);
        assert_eq!(units.len(), FOO.len());
        assert!(units.iter().all(|u| u.lines.len() == 1));
    }

    #[test]
    fn classes_split_at_class_starts_only() {
        let mut lines = FOO.to_vec();
        lines.insert(0, ".source \"x\"");
        lines.extend_from_slice(&[".class public Lcom/e/Bar;", ".super Ljava/lang/Object;"]);
        let units = segment(&doc(&lines), UnitKind::Csm);
        let got = lines_of(&units);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0], vec![".source \"x\""]);
        assert_eq!(got[1], FOO.to_vec());
        assert_eq!(got[2], vec![".class public Lcom/e/Bar;", ".super Ljava/lang/Object;"]);
    }

    #[test]
    fn empty_document_no_units() {
        for kind in UnitKind::ALL {
            assert!(segment(&doc(&[]), kind).is_empty());
        }
    }

    #[test]
    fn unmatched_markers_degrade_to_single_unit() {
        let lines = ["const/4 v0, 0x0", "return-void", "nop"];
        assert_eq!(segment(&doc(&lines), UnitKind::Msm).len(), 1);
        assert_eq!(segment(&doc(&lines), UnitKind::Csm).len(), 1);
    }

    #[test]
    fn method_without_end_marker_closed_by_next_start() {
        let mut d = doc(&[
            ".class LA;",
            "A_f@V:",
            "const/4 v0, 0x0",
            "return-void",
            "A_g@V:",
            "return-void",
        ]);
        d.dialect = Dialect::Ida;
        let units = segment(&d, UnitKind::Msm);
        assert_eq!(lines_of(&units), vec![
            vec![".class LA;"],
            vec!["A_f@V:", "const/4 v0, 0x0", "return-void"],
            vec!["A_g@V:", "return-void"],
        ]);
    }

    #[test]
    fn terminator_membership() {
        let set = terminator_set(Dialect::Apktool);
        let mut prefixes: Vec<_> = set.prefixes().to_vec();
        prefixes.sort();
        assert_eq!(
            prefixes,
            ["goto", "if-", "invoke-", "packed-switch", "return", "sparse-switch", "throw"]
        );
        assert!(!set.is_terminator("const/4 v0, 0x0"));
        assert!(set.is_terminator("if-eqz v0, :cond_0"));
        assert!(set.is_terminator("GOTO/16 :goto_3"));
        assert!(set.is_terminator("return-object v1"));
        assert!(!set.is_terminator(".packed-switch 0x1"));
        assert!(!set.is_terminator(":cond_0"));
    }

    #[test]
    fn custom_terminators_change_blocks() {
        let seg = Segmenter::default()
            .with_terminators(Dialect::Apktool, TerminatorSet::new(["return"]));
        let units = seg.segment(&doc(&FOO), UnitKind::Bsm);
        assert_eq!(units.len(), 2);
    }

    #[test]
    fn stats_arithmetic() {
        let mk = |n: usize| SequenceUnit {
            app_id: "a".into(),
            kind: UnitKind::Bsm,
            label: Label::Benign,
            lines: vec!["x".into(); n],
        };
        let s = unit_stats(&[mk(2), mk(1), mk(2)]);
        assert_eq!(s.count, 3);
        assert!((s.mean_lines - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(unit_stats(&[]), UnitStats { count: 0, mean_lines: 0.0 });
    }
}
