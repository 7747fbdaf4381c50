//! Seeded generator of Apktool-style smali listings with known structure.
//!
//! Every generated class has at least one method and every method ends in
//! a terminator, so instruction, block, method and class counts are
//! ordered. Malicious apps can carry a planted multi-instruction pattern,
//! and class package paths can be made to correlate with the label.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ingest::{normalize, Dialect, Label, RawDocument};
use crate::rng::{self, Rng, Stream};

const NEUTRAL_PATHS: [&str; 10] = [
    "com/appcore/ui",
    "com/appcore/util",
    "com/appcore/net",
    "com/appcore/data",
    "org/libkit/core",
    "org/libkit/io",
    "net/widgets/view",
    "io/support/json",
    "com/media/player",
    "com/store/billing",
];
const BENIGN_PATHS: [&str; 5] = [
    "com/notes/editor",
    "com/weather/forecast",
    "org/reader/pages",
    "com/fitness/tracker",
    "com/photo/gallery",
];
const MALICIOUS_PATHS: [&str; 5] = [
    "com/smspay/sender",
    "net/pushad/agent",
    "com/rootkit/exec",
    "cn/dropper/loader",
    "com/clickbot/svc",
];
const CLASS_NAMES: [&str; 16] = [
    "MainActivity",
    "Helper",
    "Config",
    "Worker",
    "Receiver",
    "Service",
    "Adapter",
    "Manager",
    "Cache",
    "Client",
    "Parser",
    "Loader",
    "Task",
    "Session",
    "Store",
    "View",
];
const METHOD_NAMES: [&str; 12] = [
    "onCreate", "run", "init", "update", "load", "save", "handle", "process", "build", "start", "stop", "reset",
];
const FRAMEWORK: [(&str, &str, &str); 6] = [
    ("java/lang", "StringBuilder", "append(Ljava/lang/String;)Ljava/lang/StringBuilder;"),
    ("java/lang", "String", "length()I"),
    ("android/util", "Log", "d(Ljava/lang/String;Ljava/lang/String;)I"),
    ("android/content", "Context", "getPackageName()Ljava/lang/String;"),
    ("java/util", "ArrayList", "add(Ljava/lang/Object;)Z"),
    ("android/os", "Handler", "post(Ljava/lang/Runnable;)Z"),
];

/// A multi-instruction snippet planted into malicious classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    /// Lines in smali syntax; `{cls}` and `{dex}` are replaced by class
    /// references in the corpus' descriptor style.
    pub lines: Vec<String>,
    /// Fraction of malicious classes that carry the pattern (in one method).
    pub class_fraction: f64,
}

impl PlantedPattern {
    /// Four instructions across two basic blocks: decrypt an asset, then
    /// load the result as code.
    pub fn loader() -> Self {
        PlantedPattern {
            lines: vec![
                "const-string v2, \"payload.enc\"".into(),
                "invoke-static {v2}, {cls}->decryptAsset(Ljava/lang/String;)[B".into(),
                "move-result-object v3".into(),
                "invoke-static {v3}, {dex}->loadDexBytes([B)V".into(),
            ],
            class_fraction: 1.0,
        }
    }
}

/// How invoke descriptors name their target classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorStyle {
    /// `Lpkg/path/Cls; ->method()V`, the path-bearing form.
    WithPath,
    /// `Cls->method()V`, no package path.
    BareClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub apps_per_label: usize,
    pub classes_per_app: (usize, usize),
    pub methods_per_class: (usize, usize),
    pub blocks_per_method: (usize, usize),
    pub instrs_per_block: (usize, usize),
    pub planted: Option<PlantedPattern>,
    /// Probability that a class package comes from its label's own pool
    /// instead of the shared one.
    pub path_correlation: f64,
    pub descriptors: DescriptorStyle,
    /// Emit `#` comment lines (dropped by normalization).
    pub comments: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            apps_per_label: 20,
            classes_per_app: (2, 4),
            methods_per_class: (2, 4),
            blocks_per_method: (2, 4),
            instrs_per_block: (1, 4),
            planted: None,
            path_correlation: 0.0,
            descriptors: DescriptorStyle::WithPath,
            comments: true,
        }
    }
}

/// Raw text of one generated application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedApp {
    pub app_id: String,
    pub label: Label,
    pub lines: Vec<String>,
}

impl GeneratedApp {
    pub fn to_document(&self) -> RawDocument {
        RawDocument {
            app_id: self.app_id.clone(),
            label: self.label,
            dialect: Dialect::Apktool,
            lines: normalize(&self.lines),
        }
    }
}

struct ClassRef {
    path: String,
    name: String,
}

struct Writer<'a> {
    spec: &'a CorpusSpec,
    rng: Rng,
    label_counter: usize,
}

impl Writer<'_> {
    fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        self.rng.gen_range(lo..=hi.max(lo))
    }

    fn class_ref(&self, path: &str, name: &str) -> String {
        match self.spec.descriptors {
            DescriptorStyle::WithPath => format!("L{path}/{name}; "),
            DescriptorStyle::BareClass => name.to_string(),
        }
    }

    fn type_ref(&self, path: &str, name: &str) -> String {
        match self.spec.descriptors {
            DescriptorStyle::WithPath => format!("L{path}/{name};"),
            DescriptorStyle::BareClass => name.to_string(),
        }
    }

    fn straight_line(&mut self, classes: &[ClassRef]) -> String {
        let r = self.rng.gen_range(0..6);
        let n = self.rng.gen_range(0..8);
        match self.rng.gen_range(0..8) {
            0 => format!("const/4 v{r}, 0x{n:x}"),
            1 => format!("move-result-object v{r}"),
            2 => format!("add-int/lit8 v{r}, v{r}, 0x{n:x}"),
            3 => {
                let c = &classes[self.rng.gen_range(0..classes.len())];
                format!("iget-object v{r}, p0, {}->f{n}:Ljava/lang/String;", self.type_ref(&c.path, &c.name))
            }
            4 => format!("new-instance v{r}, {}", self.type_ref("java/lang", "StringBuilder")),
            5 => format!("check-cast v{r}, {}", self.type_ref("android/content", "Context")),
            6 => format!("const-string v{r}, \"s{n}\""),
            _ => format!("aget v{r}, v{}, v{}", (r + 1) % 6, (r + 2) % 6),
        }
    }

    fn invoke(&mut self, classes: &[ClassRef]) -> String {
        let r = self.rng.gen_range(0..4);
        if self.rng.gen_bool(0.5) {
            let c = &classes[self.rng.gen_range(0..classes.len())];
            let m = METHOD_NAMES[self.rng.gen_range(0..METHOD_NAMES.len())];
            format!("invoke-virtual {{v{r}}}, {}->{m}()V", self.class_ref(&c.path, &c.name))
        } else {
            let (path, cls, sig) = FRAMEWORK[self.rng.gen_range(0..FRAMEWORK.len())];
            format!("invoke-virtual {{v{r}, v{}}}, {}->{sig}", r + 1, self.class_ref(path, cls))
        }
    }

    fn terminator(&mut self, classes: &[ClassRef], next_label: &str) -> String {
        match self.rng.gen_range(0..3) {
            0 => format!("if-eqz v{}, {next_label}", self.rng.gen_range(0..4)),
            1 => format!("goto {next_label}"),
            _ => self.invoke(classes),
        }
    }

    fn method(&mut self, classes: &[ClassRef], plant: Option<&PlantedPattern>, out: &mut Vec<String>) {
        let name = METHOD_NAMES[self.rng.gen_range(0..METHOD_NAMES.len())];
        out.push(format!(".method public {name}(I)V"));
        out.push(format!(".registers {}", self.rng.gen_range(4..8)));
        let blocks = self.range(self.spec.blocks_per_method).max(1);
        let plant_at = plant.map(|_| self.rng.gen_range(0..blocks));
        for b in 0..blocks {
            if b > 0 && self.rng.gen_bool(0.5) {
                out.push(format!(":cond_{}", self.label_counter));
            }
            if plant_at == Some(b) {
                let p = plant.unwrap();
                for line in &p.lines {
                    out.push(self.render_planted(line));
                }
            }
            for _ in 0..self.range(self.spec.instrs_per_block) {
                let line = self.straight_line(classes);
                out.push(line);
            }
            self.label_counter += 1;
            if b + 1 == blocks {
                out.push("return-void".into());
            } else {
                let next = format!(":cond_{}", self.label_counter);
                let t = self.terminator(classes, &next);
                out.push(t);
            }
        }
        out.push(".end method".into());
    }

    fn render_planted(&self, line: &str) -> String {
        line.replace("{cls}", &self.class_ref("com/appcore/util", "AssetCodec"))
            .replace("{dex}", &self.class_ref("dalvik/system", "InMemoryDexLoader"))
    }

    fn app(&mut self, app_id: String, label: Label) -> GeneratedApp {
        let n_classes = self.range(self.spec.classes_per_app).max(1);
        let own_pool: &[&str] = match label {
            Label::Benign => &BENIGN_PATHS,
            Label::Malicious => &MALICIOUS_PATHS,
        };
        let classes: Vec<ClassRef> = (0..n_classes)
            .map(|_| {
                let pool: &[&str] = if self.rng.gen_bool(self.spec.path_correlation.clamp(0.0, 1.0)) {
                    own_pool
                } else {
                    &NEUTRAL_PATHS
                };
                ClassRef {
                    path: pool.choose(&mut self.rng).unwrap().to_string(),
                    name: CLASS_NAMES.choose(&mut self.rng).unwrap().to_string(),
                }
            })
            .collect();
        let mut lines = Vec::new();
        for (ci, class) in classes.iter().enumerate() {
            if self.spec.comments {
                lines.push(format!("# class {ci} of {app_id}"));
                lines.push(String::new());
            }
            lines.push(format!(".class public {}", self.type_ref(&class.path, &class.name)));
            lines.push(format!(".super {}", self.type_ref("java/lang", "Object")));
            lines.push(format!(".source \"{}.java\"", class.name));
            let n_methods = self.range(self.spec.methods_per_class).max(1);
            let plant = match (&self.spec.planted, label) {
                (Some(p), Label::Malicious) if self.rng.gen_bool(p.class_fraction.clamp(0.0, 1.0)) => Some(p),
                _ => None,
            };
            let plant_method = self.rng.gen_range(0..n_methods);
            for m in 0..n_methods {
                if self.spec.comments && self.rng.gen_bool(0.3) {
                    lines.push("    # method body".into());
                }
                let p = plant.filter(|_| m == plant_method);
                self.method(&classes, p, &mut lines);
            }
        }
        if self.spec.descriptors == DescriptorStyle::BareClass {
            for line in &mut lines {
                *line = strip_paths(line);
            }
        }
        GeneratedApp { app_id, label, lines }
    }
}

/// `Lpkg/path/Name;` -> `Name` everywhere in a line.
fn strip_paths(line: &str) -> String {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| regex::Regex::new(r"L(?:[\w$]+/)+([\w$]+);").unwrap());
    re.replace_all(line, "$1").into_owned()
}

/// Generates `apps_per_label` benign then as many malicious applications.
pub fn generate(spec: &CorpusSpec, seed: u64) -> Vec<GeneratedApp> {
    let mut w = Writer {
        spec,
        rng: rng::stream(seed, Stream::Corpus),
        label_counter: 0,
    };
    let mut apps = Vec::with_capacity(2 * spec.apps_per_label);
    for label in [Label::Benign, Label::Malicious] {
        for i in 0..spec.apps_per_label {
            let id = format!("{}{i:04}", &label.as_str()[..3]);
            apps.push(w.app(id, label));
        }
    }
    apps
}

pub fn generate_documents(spec: &CorpusSpec, seed: u64) -> Vec<RawDocument> {
    generate(spec, seed).iter().map(GeneratedApp::to_document).collect()
}

/// Writes `<root>/benign/<id>.txt` and `<root>/malicious/<id>.txt`.
pub fn write_corpus(apps: &[GeneratedApp], root: &std::path::Path) -> std::io::Result<()> {
    for app in apps {
        let dir = root.join(app.label.as_str());
        std::fs::create_dir_all(&dir)?;
        let mut text = app.lines.join("\n");
        text.push('\n');
        std::fs::write(dir.join(format!("{}.txt", app.app_id)), text)?;
    }
    Ok(())
}

/// Units with a marker token planted in every malicious unit and in no
/// benign one. Each app contributes `units_per_app` units.
pub fn planted_token_units(
    n_units: usize,
    units_per_app: usize,
    marker: &str,
    seed: u64,
) -> Vec<crate::segment::SequenceUnit> {
    let spec = CorpusSpec::default();
    let mut w = Writer {
        spec: &spec,
        rng: rng::stream(seed, Stream::Corpus),
        label_counter: 0,
    };
    let classes: Vec<ClassRef> = NEUTRAL_PATHS
        .iter()
        .zip(CLASS_NAMES)
        .map(|(p, n)| ClassRef {
            path: p.to_string(),
            name: n.to_string(),
        })
        .collect();
    (0..n_units)
        .map(|i| {
            let app = i / units_per_app.max(1);
            let label = if app % 2 == 0 { Label::Benign } else { Label::Malicious };
            let n_lines = w.rng.gen_range(2..=5);
            let mut lines: Vec<String> = (0..n_lines).map(|_| w.straight_line(&classes)).collect();
            if label.is_malicious() {
                let at = w.rng.gen_range(0..=1.min(lines.len()));
                lines.insert(at, format!("invoke-static {{v0}}, {marker}"));
            }
            crate::segment::SequenceUnit {
                app_id: format!("{}{app:05}", &label.as_str()[..3]),
                kind: crate::segment::UnitKind::Bsm,
                label,
                lines,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::detect_dialect;
    use crate::segment::{segment, UnitKind};

    #[test]
    fn deterministic() {
        let spec = CorpusSpec::default();
        assert_eq!(generate(&spec, 3), generate(&spec, 3));
        assert_ne!(generate(&spec, 3), generate(&spec, 4));
    }

    #[test]
    fn generated_text_reads_as_apktool() {
        let apps = generate(&CorpusSpec::default(), 1);
        for app in apps.iter().take(5) {
            assert_eq!(detect_dialect(&app.lines).unwrap(), Dialect::Apktool);
        }
    }

    #[test]
    fn planted_pattern_only_in_malicious() {
        let spec = CorpusSpec {
            planted: Some(PlantedPattern::loader()),
            ..CorpusSpec::default()
        };
        for app in generate(&spec, 2) {
            let hit = app.lines.iter().any(|l| l.contains("decryptAsset"));
            assert_eq!(hit, app.label.is_malicious(), "{}", app.app_id);
        }
    }

    #[test]
    fn structural_premise_holds() {
        let spec = CorpusSpec {
            planted: Some(PlantedPattern::loader()),
            ..CorpusSpec::default()
        };
        for doc in generate_documents(&spec, 5) {
            let counts: Vec<usize> = UnitKind::ALL.iter().map(|&k| segment(&doc, k).len()).collect();
            assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        }
    }

    #[test]
    fn bare_descriptors_have_no_paths() {
        let spec = CorpusSpec {
            descriptors: DescriptorStyle::BareClass,
            ..CorpusSpec::default()
        };
        let apps = generate(&spec, 1);
        let descriptor = regex::Regex::new(r"L[\w$]+/").unwrap();
        assert!(apps.iter().flat_map(|a| &a.lines).all(|l| !descriptor.is_match(l)));
    }

    #[test]
    fn marker_units() {
        let units = planted_token_units(40, 4, "MALSIG", 0);
        for u in &units {
            let has = u.lines.iter().any(|l| l.contains("MALSIG"));
            assert_eq!(has, u.label.is_malicious());
        }
        assert_eq!(units.iter().filter(|u| u.label.is_malicious()).count(), 20);
    }
}
