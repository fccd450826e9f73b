//! Decision rule, threshold calibration and evaluation metrics.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to a calibrated margin.
pub const MIN_ETA: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    InClass,
    Anomaly,
}

/// In-class iff `s1 ≥ η` and `s2 ≤ −η`.
pub fn classify(s1: f64, s2: f64, eta: f64) -> Label {
    if s1 >= eta && s2 <= -eta {
        Label::InClass
    } else {
        Label::Anomaly
    }
}

/// `max(η − s1, s2 + η)`; non-positive exactly when [`classify`] says in-class.
pub fn anomaly_score(s1: f64, s2: f64, eta: f64) -> f64 {
    (eta - s1).max(s2 + eta)
}

/// Optimal 1-D 2-means by scanning every split of the sorted values.
/// Returns the centroids in increasing order.
pub fn two_means_1d(values: &[f64]) -> Result<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateClustering("non-finite score".into()));
    }
    v.sort_by(f64::total_cmp);
    if v.len() < 2 || v.first() == v.last() {
        return Err(Error::DegenerateClustering(format!(
            "need at least two distinct values, got {}",
            v.len()
        )));
    }
    let n = v.len();
    let mut best: Option<(f64, usize)> = None;
    for s in 1..n {
        let sse = sse(&v[..s]) + sse(&v[s..]);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, s));
        }
    }
    let s = best.map(|b| b.1).unwrap_or(1);
    Ok((mean(&v[..s]), mean(&v[s..])))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eta: f64,
    pub eta_prime: f64,
    pub delta: f64,
    pub centroids_l: (f64, f64),
    pub centroids_u: (f64, f64),
    pub clamped: bool,
}

/// Margin update from the cluster structure of the two score sets:
/// `Δη = ½([η − min c_l]₊ − [η + min c_u]₊)`, `η′ = η + Δη` (at least `1e-6`).
pub fn calibrate(scores_l: &[f64], scores_u: &[f64], eta: f64) -> Result<Calibration> {
    let cl = two_means_1d(scores_l)?;
    let cu = two_means_1d(scores_u)?;
    let delta = 0.5 * ((eta - cl.0).max(0.0) - (eta + cu.0).max(0.0));
    let mut eta_prime = eta + delta;
    let clamped = eta_prime < MIN_ETA;
    if clamped {
        warn!("calibrated margin {eta_prime:e} clamped to {MIN_ETA:e}");
        eta_prime = MIN_ETA;
    }
    Ok(Calibration { eta, eta_prime, delta, centroids_l: cl, centroids_u: cu, clamped })
}

pub fn calibrate_eta(scores_l: &[f64], scores_u: &[f64], eta: f64) -> Result<f64> {
    calibrate(scores_l, scores_u, eta).map(|c| c.eta_prime)
}

/// Counts with in-class as the positive label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(pred: &[Label], truth: &[Label]) -> Self {
        let mut c = Self::default();
        for (p, t) in pred.iter().zip(truth) {
            match (p, t) {
                (Label::InClass, Label::InClass) => c.tp += 1,
                (Label::InClass, Label::Anomaly) => c.fp += 1,
                (Label::Anomaly, Label::Anomaly) => c.tn += 1,
                (Label::Anomaly, Label::InClass) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts with the roles of the two labels exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics; `None` marks a quantity whose denominator is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub f1_bar: Option<f64>,
    pub tnr: Option<f64>,
    pub npv: Option<f64>,
    pub auc: Option<f64>,
    pub far: Option<f64>,
    pub confusion: ConfusionCounts,
    pub threshold: f64,
}

pub fn f1_score(c: &ConfusionCounts) -> Option<f64> {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// `scores` are anomaly scores (larger means more anomalous).
pub fn compute_metrics(
    pred: &[Label],
    truth: &[Label],
    scores: &[f64],
    threshold: f64,
) -> Result<EvalReport> {
    if pred.len() != truth.len() || pred.len() != scores.len() {
        return Err(crate::error::dim_err(format!(
            "{} predictions, {} labels, {} scores",
            pred.len(),
            truth.len(),
            scores.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyData);
    }
    let c = ConfusionCounts::from_labels(pred, truth);
    Ok(EvalReport {
        accuracy: ratio(c.tp + c.tn, c.total()),
        f1: f1_score(&c),
        f1_bar: f1_score(&c.swapped()),
        tnr: ratio(c.tn, c.tn + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
        auc: auc(truth, scores),
        far: ratio(c.fp, c.fp + c.tn),
        confusion: c,
        threshold,
    })
}

/// ROC points `(false positive rate, true positive rate)` treating anomalies as
/// the positive class, one point per distinct score, from `(0,0)` to `(1,1)`.
pub fn roc_curve(truth: &[Label], scores: &[f64]) -> Option<Vec<(f64, f64)>> {
    let pos = truth.iter().filter(|t| **t == Label::Anomaly).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            match truth[idx[i]] {
                Label::Anomaly => tp += 1,
                Label::InClass => fp += 1,
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Some(pts)
}

/// Trapezoidal area under [`roc_curve`].
pub fn auc(truth: &[Label], scores: &[f64]) -> Option<f64> {
    let pts = roc_curve(truth, scores)?;
    Some(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}
