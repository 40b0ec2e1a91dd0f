//! GLUE evaluation metrics.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};
use crate::text::MetricName;

/// Binary confusion counts, class 1 being "positive".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn from_predictions(predicted: &[usize], gold: &[usize]) -> Result<Self> {
        check_lengths(predicted.len(), gold.len())?;
        let mut c = ConfusionCounts::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            if p > 1 || g > 1 {
                return Err(CertError::InvalidInput(format!(
                    "binary confusion counts need labels in {{0, 1}}, got {p}/{g}"
                )));
            }
            match (p == 1, g == 1) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CertError::InvalidInput(format!(
            "prediction/label length mismatch: {a} vs {b}"
        )));
    }
    Ok(())
}

/// Fraction of exact matches; 0 for empty input.
pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    check_lengths(predicted.len(), gold.len())?;
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// `2tp / (2tp + fp + fn)`, 0 when the denominator vanishes.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Matthews correlation; any zero marginal gives 0.
pub fn matthews_corr(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

fn check_corr_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(CertError::InvalidInput("correlation needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CertError::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// Product-moment correlation. Constant inputs are an error.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_corr_inputs(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CertError::InvalidInput(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_corr_inputs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Metric values for one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: IndexMap<String, f64>,
    pub count: usize,
}

impl MetricReport {
    pub fn get(&self, name: MetricName) -> Option<f64> {
        self.values.get(name.as_str()).copied()
    }
}

/// Predictions in the form the task's label kind produces.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Scores(Vec<f64>),
}

/// Computes every metric in `metrics`.
pub fn compute_report(metrics: &[MetricName], predictions: &Predictions, gold: &Predictions) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    match (predictions, gold) {
        (Predictions::Classes(p), Predictions::Classes(g)) => {
            report.count = p.len();
            for m in metrics {
                let v = match m {
                    MetricName::Accuracy => accuracy(p, g)?,
                    MetricName::F1 => f1(&ConfusionCounts::from_predictions(p, g)?),
                    MetricName::Mcc => matthews_corr(&ConfusionCounts::from_predictions(p, g)?),
                    MetricName::Pearson | MetricName::Spearman => {
                        return Err(CertError::Config(format!(
                            "{} needs real-valued predictions",
                            m.as_str()
                        )))
                    }
                };
                report.values.insert(m.as_str().to_string(), v);
            }
        }
        (Predictions::Scores(p), Predictions::Scores(g)) => {
            report.count = p.len();
            for m in metrics {
                let v = match m {
                    MetricName::Pearson => pearson(p, g)?,
                    MetricName::Spearman => spearman(p, g)?,
                    _ => return Err(CertError::Config(format!("{} needs class predictions", m.as_str()))),
                };
                report.values.insert(m.as_str().to_string(), v);
            }
        }
        _ => {
            return Err(CertError::InvalidInput(
                "predictions and labels are of different kinds".into(),
            ))
        }
    }
    Ok(report)
}
