//! Evaluation of predicted CSMFs and individual cause assignments.

use std::io::Write;

use serde::Serialize;

use crate::data::LabelDictionary;
use crate::error::{LcvaError, Result};
use crate::predict::{argmax, PredictOutput};

const SIMPLEX_TOL: f64 = 1e-8;

/// `1 - sum_c |est_c - truth_c| / (2 (1 - min_c truth_c))`.
pub fn csmf_accuracy(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(LcvaError::DimensionMismatch(format!(
            "estimate has {} causes, truth has {}",
            est.len(),
            truth.len()
        )));
    }
    let total: f64 = truth.iter().sum();
    if truth.iter().any(|&t| t < 0.0) || (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(LcvaError::InvalidParameter(format!(
            "true CSMF is not a simplex (sums to {total})"
        )));
    }
    let min = truth.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 1.0 {
        return Err(LcvaError::InvalidParameter(
            "true CSMF puts all mass on a single cause of a length-1 vector".into(),
        ));
    }
    let l1: f64 = est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum();
    Ok((1.0 - l1 / (2.0 * (1.0 - min))).clamp(0.0, 1.0))
}

/// Fraction of records whose most probable cause equals the label. Ties go
/// to the lowest cause index.
pub fn top_cause_accuracy(probs: &[f64], causes: usize, labels: &[usize]) -> Result<f64> {
    if causes == 0 || probs.len() != labels.len() * causes {
        return Err(LcvaError::DimensionMismatch(format!(
            "{} probabilities for {} labels and C={causes}",
            probs.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(LcvaError::Empty("no labels to evaluate".into()));
    }
    let hits = probs
        .chunks(causes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row).0 == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn empirical_csmf(labels: &[usize], causes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(LcvaError::Empty("cannot form a CSMF from zero labels".into()));
    }
    let mut out = vec![0.0; causes];
    for &c in labels {
        if c >= causes {
            return Err(LcvaError::DimensionMismatch(format!(
                "label {c} outside 0..{causes}"
            )));
        }
        out[c] += 1.0;
    }
    let n = labels.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauseRow {
    pub cause: String,
    pub true_csmf: f64,
    pub estimated_mean: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub csmf_accuracy: f64,
    pub top_cause_accuracy: f64,
    pub n: usize,
    pub causes: Vec<CauseRow>,
}

impl EvalReport {
    /// Builds a report from an estimated CSMF (with optional credible
    /// bounds) and predicted top causes.
    pub fn from_estimates(
        labels: &LabelDictionary,
        est_csmf: &[f64],
        bounds: Option<&[(f64, f64)]>,
        predicted: &[usize],
        truth: &[usize],
    ) -> Result<Self> {
        let c_n = labels.len();
        if est_csmf.len() != c_n {
            return Err(LcvaError::DimensionMismatch(format!(
                "prediction covers C={} causes, truth dictionary has C={c_n}",
                est_csmf.len()
            )));
        }
        if predicted.len() != truth.len() {
            return Err(LcvaError::DimensionMismatch(format!(
                "{} predictions for {} true labels",
                predicted.len(),
                truth.len()
            )));
        }
        let true_csmf = empirical_csmf(truth, c_n)?;
        let csmf_acc = csmf_accuracy(est_csmf, &true_csmf)?;
        let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
        let causes = (0..c_n)
            .map(|c| CauseRow {
                cause: labels.label(c).to_string(),
                true_csmf: true_csmf[c],
                estimated_mean: est_csmf[c],
                lower: bounds.map(|b| b[c].0),
                upper: bounds.map(|b| b[c].1),
            })
            .collect();
        Ok(Self {
            csmf_accuracy: csmf_acc,
            top_cause_accuracy: hits as f64 / truth.len() as f64,
            n: truth.len(),
            causes,
        })
    }

    pub fn evaluate(
        pred: &PredictOutput,
        labels: &LabelDictionary,
        truth: &[usize],
    ) -> Result<Self> {
        if pred.num_records() != truth.len() {
            return Err(LcvaError::DimensionMismatch(format!(
                "{} predicted records, {} labels",
                pred.num_records(),
                truth.len()
            )));
        }
        let mut report = {
            let bounds: Vec<(f64, f64)> =
                pred.pi0_summary.iter().map(|s| (s.q025, s.q975)).collect();
            let top: Vec<usize> = pred.top_causes().into_iter().map(|(c, _)| c).collect();
            Self::from_estimates(labels, &pred.csmf_mean(), Some(&bounds), &top, truth)?
        };
        report.top_cause_accuracy = top_cause_accuracy(&pred.cause_probs, pred.causes, truth)?;
        Ok(report)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| LcvaError::Csv {
            path: "<report>".into(),
            source: e,
        };
        wtr.write_record(["cause", "true_csmf", "estimated_mean", "lower", "upper"])
            .map_err(err)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.causes {
            wtr.write_record([
                row.cause.clone(),
                row.true_csmf.to_string(),
                row.estimated_mean.to_string(),
                opt(row.lower),
                opt(row.upper),
            ])
            .map_err(err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
