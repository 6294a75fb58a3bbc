use serde::{Deserialize, Serialize};

use super::EvalError;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(y: &[u8], pred: &[u8]) -> Result<Self, EvalError> {
        if y.len() != pred.len() {
            return Err(EvalError::LengthMismatch(y.len(), pred.len()));
        }
        let mut c = Self::default();
        for (&t, &p) in y.iter().zip(pred) {
            match (t == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// Counts at `p >= threshold`.
    pub fn from_probabilities(y: &[u8], p: &[f64], threshold: f64) -> Result<Self, EvalError> {
        let pred: Vec<u8> = p.iter().map(|&v| u8::from(v >= threshold)).collect();
        Self::from_predictions(y, &pred)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(c: &ConfusionCounts) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check(y: &[u8], p: &[f64]) -> Result<(), EvalError> {
    if y.len() != p.len() {
        return Err(EvalError::LengthMismatch(y.len(), p.len()));
    }
    if y.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Mean binary log-loss in nats.
pub fn cross_entropy(y: &[u8], p: &[f64]) -> Result<f64, EvalError> {
    check(y, p)?;
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&t, &q)| {
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if t == 1 {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

/// Mean squared error over the positive examples only.
pub fn brier_positive(y: &[u8], p: &[f64]) -> Result<f64, EvalError> {
    check(y, p)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (&t, &q) in y.iter().zip(p) {
        if t == 1 {
            sum += (1.0 - q) * (1.0 - q);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoPositives);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub cross_entropy: f64,
    pub brier_positive: f64,
    /// Seconds spent fitting.
    pub fit_time: f64,
    pub counts: ConfusionCounts,
}

impl MetricReport {
    pub fn compute(y: &[u8], p: &[f64], threshold: f64, fit_time: f64) -> Result<Self, EvalError> {
        let counts = ConfusionCounts::from_probabilities(y, p, threshold)?;
        Ok(Self {
            f1: f1_score(&counts),
            precision: precision(&counts),
            recall: recall(&counts),
            cross_entropy: cross_entropy(y, p)?,
            brier_positive: brier_positive(y, p)?,
            fit_time,
            counts,
        })
    }
}
