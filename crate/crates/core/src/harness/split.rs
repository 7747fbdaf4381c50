use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{DatasetManifest, Label};
use crate::rng::{self, Stream};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Application ids on each side of a train/test split, each side sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl AppSplit {
    /// SHA-256 over both id lists; identifies the split in reports.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (tag, ids) in [("train", &self.train), ("test", &self.test)] {
            h.update(tag.as_bytes());
            for id in ids {
                h.update([0u8]);
                h.update(id.as_bytes());
            }
            h.update(*b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn is_train(&self, app_id: &str) -> bool {
        self.train.binary_search_by(|x| x.as_str().cmp(app_id)).is_ok()
    }

    pub fn is_test(&self, app_id: &str) -> bool {
        self.test.binary_search_by(|x| x.as_str().cmp(app_id)).is_ok()
    }
}

/// Stratified split by application: each label is shuffled on its own and
/// `round(n * train_fraction)` of its apps go to training.
pub fn split_apps<'a, I>(apps: I, train_fraction: f64, seed: u64) -> Result<AppSplit>
where
    I: IntoIterator<Item = (&'a str, Label)>,
{
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_label: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for (id, label) in apps {
        by_label.entry(label).or_default().push(id);
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Benign, Label::Malicious] {
        let mut ids = by_label.remove(&label).unwrap_or_default();
        ids.sort_unstable();
        let n = ids.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::TooFewApps(format!(
                "{n} {label} apps cannot fill both sides at fraction {train_fraction}"
            )));
        }
        ids.shuffle(&mut rng);
        train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        test.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    train.sort();
    test.sort();
    Ok(AppSplit { train, test })
}

pub fn split_by_app(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<AppSplit> {
    split_apps(
        manifest.entries().iter().map(|e| (e.app_id.as_str(), e.label)),
        train_fraction,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apps(n_benign: usize, n_mal: usize) -> Vec<(String, Label)> {
        (0..n_benign)
            .map(|i| (format!("b{i}"), Label::Benign))
            .chain((0..n_mal).map(|i| (format!("m{i}"), Label::Malicious)))
            .collect()
    }

    fn split(a: &[(String, Label)], f: f64, seed: u64) -> Result<AppSplit> {
        split_apps(a.iter().map(|(s, l)| (s.as_str(), *l)), f, seed)
    }

    #[test]
    fn stratified_counts() {
        let a = apps(5, 5);
        let s = split(&a, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s.test.iter().filter(|id| id.starts_with('b')).count(), 1);
        assert_eq!(s.test.iter().filter(|id| id.starts_with('m')).count(), 1);
        assert!(s.train.iter().all(|id| !s.is_test(id)));
        assert!(s.test.iter().all(|id| s.is_test(id) && !s.is_train(id)));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = apps(20, 13);
        assert_eq!(split(&a, 0.7, 9).unwrap(), split(&a, 0.7, 9).unwrap());
        assert_eq!(split(&a, 0.7, 9).unwrap().digest(), split(&a, 0.7, 9).unwrap().digest());
    }

    #[test]
    fn too_few_apps() {
        assert!(matches!(split(&apps(1, 5), 0.8, 0), Err(Error::TooFewApps(_))));
        assert!(matches!(split(&apps(5, 0), 0.8, 0), Err(Error::TooFewApps(_))));
        assert!(split(&apps(5, 5), 1.0, 0).is_err());
    }
}
