//! Corpus loading: manifests, directory scans, dialect detection and line
//! normalization of disassembler text output.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidate lines inspected by [`detect_dialect`].
pub const DETECT_WINDOW: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }

    pub fn is_malicious(self) -> bool {
        self == Label::Malicious
    }

    /// 1 for malicious, 0 for benign.
    pub fn as_target(self) -> u8 {
        self.is_malicious() as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "benign" => Ok(Label::Benign),
            "malicious" => Ok(Label::Malicious),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// The tool that produced a disassembly listing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Jeb,
    Ida,
    Apktool,
}

impl Dialect {
    pub const ALL: [Dialect; 3] = [Dialect::Jeb, Dialect::Ida, Dialect::Apktool];

    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Jeb => "jeb",
            Dialect::Ida => "ida",
            Dialect::Apktool => "apktool",
        }
    }

    /// Parses a manifest dialect column; `auto` yields `None`.
    pub fn parse_choice(s: &str) -> std::result::Result<Option<Dialect>, String> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(None),
            other => other.parse().map(Some),
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jeb" => Ok(Dialect::Jeb),
            "ida" => Ok(Dialect::Ida),
            "apktool" => Ok(Dialect::Apktool),
            other => Err(format!("unknown dialect {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub app_id: String,
    pub path: PathBuf,
    pub label: Label,
    /// `None` means detect from content.
    pub dialect: Option<Dialect>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting repeated app ids or paths.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for e in &entries {
            if !ids.insert(e.app_id.as_str()) {
                return Err(Error::DuplicateAppId(e.app_id.clone()));
            }
            if !paths.insert(e.path.as_path()) {
                return Err(Error::DuplicatePath(e.path.clone()));
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders the tab-separated manifest format read by [`load_manifest`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let dialect = e.dialect.map_or("auto", Dialect::as_str);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.app_id,
                e.path.display(),
                e.label,
                dialect
            ));
        }
        out
    }
}

/// Reads a manifest of `app_id<TAB>path<TAB>label<TAB>dialect` records.
///
/// Relative paths are resolved against the manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let malformed = |reason: String| Error::MalformedEntry {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let app_id = fields[0].trim();
        if app_id.is_empty() {
            return Err(malformed("empty app id".into()));
        }
        let rel = fields[1].trim();
        if rel.is_empty() {
            return Err(malformed("empty path".into()));
        }
        let label: Label = fields[2].trim().parse().map_err(malformed)?;
        let dialect = Dialect::parse_choice(fields[3].trim()).map_err(malformed)?;
        let p = Path::new(rel);
        let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        entries.push(ManifestEntry {
            app_id: app_id.to_string(),
            path,
            label,
            dialect,
        });
    }
    DatasetManifest::new(entries)
}

/// Builds a manifest from `<root>/benign/*` and `<root>/malicious/*`.
///
/// Entries are ordered by label, then file name, so the result does not
/// depend on directory iteration order.
pub fn scan_directory(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    for label in [Label::Benign, Label::Malicious] {
        let dir = root.join(label.as_str());
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| !n.starts_with('.'))
            })
            .collect();
        files.sort();
        for path in files {
            let app_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            entries.push(ManifestEntry {
                app_id,
                path,
                label,
                dialect: None,
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    DatasetManifest::new(entries)
}

/// One disassembled application after normalization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub app_id: String,
    pub label: Label,
    pub dialect: Dialect,
    pub lines: Vec<String>,
}

/// Reads a text file as lines, replacing invalid UTF-8.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    Ok(String::from_utf8_lossy(&bytes).lines().map(str::to_owned).collect())
}

/// Loads, dialect-resolves and normalizes one manifest entry.
pub fn load_document(entry: &ManifestEntry) -> Result<RawDocument> {
    let raw = read_lines(&entry.path)?;
    let dialect = match entry.dialect {
        Some(d) => d,
        None => detect_dialect(&raw)?,
    };
    Ok(RawDocument {
        app_id: entry.app_id.clone(),
        label: entry.label,
        dialect,
        lines: normalize(&raw),
    })
}

/// Drops blank lines and `#` comment lines and trims what is left.
pub fn normalize<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    lines
        .iter()
        .map(|l| l.as_ref().trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

struct Signatures {
    apktool: Regex,
    ida: Regex,
    jeb: Regex,
}

fn signatures() -> &'static Signatures {
    static SIGS: OnceLock<Signatures> = OnceLock::new();
    SIGS.get_or_init(|| Signatures {
        // `{v0, v1}, Lpkg/Cls;->` (Table-8 output also has `; ->`)
        apktool: Regex::new(r"\{[^{}]*\}\s*,\s*L[^;\s]*/[^;\s]*;\s*->").unwrap(),
        // `<ref Cls.m()Ret@L>` / `<void Cls.m(..) Cls_m@VLZ>`
        ida: Regex::new(r"<\w+\s[^<>]*@[^<>]*>").unwrap(),
        // `Cls->member(`
        jeb: Regex::new(r"[\w$]->[\w$<>]+\(").unwrap(),
    })
}

/// Signature hits of each dialect on a single line, in (apktool, ida, jeb) order.
fn line_votes(line: &str) -> (bool, bool, bool) {
    let s = signatures();
    let apktool = s.apktool.is_match(line);
    let ida = s.ida.is_match(line);
    let jeb = !apktool && !ida && !line.contains('<') && s.jeb.is_match(line);
    (apktool, ida, jeb)
}

/// Guesses the disassembler by signature voting over the first
/// [`DETECT_WINDOW`] non-blank, non-comment lines.
///
/// Ties go to Apktool, then IDA, then JEB.
pub fn detect_dialect<S: AsRef<str>>(lines: &[S]) -> Result<Dialect> {
    let (mut apk, mut ida, mut jeb) = (0usize, 0usize, 0usize);
    let candidates = lines
        .iter()
        .map(|l| l.as_ref().trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .take(DETECT_WINDOW);
    for line in candidates {
        let (a, i, j) = line_votes(line);
        apk += a as usize;
        ida += i as usize;
        jeb += j as usize;
    }
    if apk + ida + jeb == 0 {
        return Err(Error::Undecidable(DETECT_WINDOW));
    }
    let ranked = [(apk, Dialect::Apktool), (ida, Dialect::Ida), (jeb, Dialect::Jeb)];
    let best = ranked
        .iter()
        .fold(ranked[0], |best, &cur| if cur.0 > best.0 { cur } else { best });
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manifest_two_entries() {
        let m = parse_manifest("a\tx.txt\tbenign\tauto\nb\ty.txt\tMALICIOUS\tapktool\n", Path::new("/c")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].path, Path::new("/c/x.txt"));
        assert_eq!(m.entries()[1].label, Label::Malicious);
        assert_eq!(m.entries()[1].dialect, Some(Dialect::Apktool));
    }

    #[test]
    fn manifest_duplicate_id() {
        let err = parse_manifest("a\tx\tbenign\tauto\na\ty\tbenign\tauto\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::DuplicateAppId(id) if id == "a"));
    }

    #[test]
    fn manifest_unknown_label_names_line() {
        let err = parse_manifest("# c\na\tx\triskware\tauto\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::MalformedEntry { line: 2, .. }), "{err}");
    }

    #[test]
    fn manifest_wrong_arity() {
        let err = parse_manifest("a\tx\tbenign\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::MalformedEntry { line: 1, .. }));
    }

    #[test]
    fn manifest_missing_file() {
        let err = load_manifest(Path::new("/nonexistent/manifest.tsv")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn scan_labels_from_directories() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("benign")).unwrap();
        fs::create_dir_all(dir.path().join("malicious")).unwrap();
        fs::write(dir.path().join("benign/x.txt"), "return-void\n").unwrap();
        fs::write(dir.path().join("malicious/y.txt"), "return-void\n").unwrap();
        let m = scan_directory(dir.path()).unwrap();
        let got: Vec<_> = m.entries().iter().map(|e| (e.app_id.as_str(), e.label)).collect();
        assert_eq!(got, vec![("x", Label::Benign), ("y", Label::Malicious)]);
        assert!(m.entries().iter().all(|e| e.dialect.is_none()));
    }

    #[test]
    fn scan_benign_only() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("benign")).unwrap();
        for n in ["a", "b", "c"] {
            fs::write(dir.path().join(format!("benign/{n}.txt")), "nop\n").unwrap();
        }
        let m = scan_directory(dir.path()).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m.entries().iter().all(|e| e.label == Label::Benign));
    }

    #[test]
    fn scan_empty_root() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(scan_directory(dir.path()), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(normalize(&["# header", "", "  const/4 v0, 0x0  "]), vec!["const/4 v0, 0x0"]);
        assert!(normalize::<&str>(&[]).is_empty());
        let input = ["a", "# x", "b", "c", "   # y", "d", "e"];
        assert_eq!(normalize(&input), vec!["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn directives_survive_normalize() {
        let input = [".class public LFoo;", ".method f()V", ":cond_0", ".end method"];
        assert_eq!(normalize(&input), input.to_vec());
    }

    #[test]
    fn detect_undecidable() {
        let err = detect_dialect(&["const/4 v0, 0x0", "return-void"]).unwrap_err();
        assert!(matches!(err, Error::Undecidable(DETECT_WINDOW)));
    }

    #[test]
    fn detect_standard_smali() {
        let lines = [
            ".method public foo()V",
            "invoke-virtual {p0}, Lcom/example/Foo;->bar()V",
            "return-void",
        ];
        assert_eq!(detect_dialect(&lines).unwrap(), Dialect::Apktool);
    }

    #[test]
    fn detect_tie_prefers_apktool() {
        let lines = [
            "invoke-static {}, Lcom/a/B;->c()V",
            "invoke-static {}, <ref B.c()V B_c@V>",
            "invoke-static B->c()V",
        ];
        assert_eq!(detect_dialect(&lines).unwrap(), Dialect::Apktool);
        assert_eq!(detect_dialect(&lines[1..]).unwrap(), Dialect::Ida);
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_order_preserving(
            lines in proptest::collection::vec("[ #a-z]{0,6}", 0..30)
        ) {
            let once = normalize(&lines);
            prop_assert_eq!(normalize(&once), once.clone());
            // surviving lines form a subsequence of the trimmed input
            let mut it = lines.iter().map(|l| l.trim());
            for kept in &once {
                prop_assert!(it.any(|l| l == kept));
            }
            prop_assert!(once.iter().all(|l| !l.is_empty() && !l.starts_with('#')));
        }
    }
}
