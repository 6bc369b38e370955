//! Confusion counts, the mean F1 score and aggregation over repeated runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step confusion counts with anomaly as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Normal-class F1, `2TN / (2TN + FP + FN)`.
    pub fn f1_normal(&self) -> f64 {
        ratio(2 * self.tn, 2 * self.tn + self.fp + self.fn_)
    }

    /// Anomaly-class F1, `2TP / (2TP + FP + FN)`.
    pub fn f1_anomaly(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// A zero denominator yields 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs truth",
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Average of the normal-class and anomaly-class F1 scores.
pub fn mean_f1(c: &Confusion) -> f64 {
    (c.f1_normal() + c.f1_anomaly()) / 2.0
}

/// Mean, sample standard deviation and standard error of per-run scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub run_count: usize,
}

pub fn aggregate_runs(values: &[f64]) -> Result<RunSummary> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("cannot aggregate zero runs".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(RunSummary {
        values: values.to_vec(),
        mean,
        std,
        stderr: std / n.sqrt(),
        run_count: values.len(),
    })
}
