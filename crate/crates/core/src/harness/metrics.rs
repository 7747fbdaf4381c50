use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with MALICIOUS as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ContingencyTable {
    pub fn record(&mut self, predicted_malicious: bool, actually_malicious: bool) {
        match (predicted_malicious, actually_malicious) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_predictions<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (bool, bool)>,
    {
        let mut t = ContingencyTable::default();
        for (pred, actual) in pairs {
            t.record(pred, actual);
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub fpr: f64,
    pub acc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// TPR, FPR and accuracy; a rate with a zero denominator is reported as 0.
pub fn metrics_from(table: &ContingencyTable) -> Result<Metrics> {
    let total = table.total();
    if total == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(Metrics {
        tpr: ratio(table.tp, table.tp + table.fn_),
        fpr: ratio(table.fp, table.fp + table.tn),
        acc: ratio(table.tp + table.tn, total),
    })
}
