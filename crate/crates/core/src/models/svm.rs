//! Linear SVM trained by averaged stochastic subgradient descent (Pegasos),
//! with Platt scaling for probabilities.
//!
//! Primal objective, with the bias folded in as a constant feature:
//!
//! ```text
//! P(w, b) = (λ/2)(‖w‖² + b²) + (1/N) Σ max(0, 1 − ỹᵢ (w·xᵢ + b)),   λ = 1/(C·N)
//! ```

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::logreg::validate_xy;
use super::{ClassWeight, LinearModel, ModelError, Penalty};
use crate::linalg::CsrMatrix;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// Relative change of the averaged objective between epochs.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 200,
        }
    }
}

/// Objective of the averaged iterate at the end of every epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmTrace {
    pub epoch_objective: Vec<f64>,
}

/// `1/(1 + exp(A·s + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

pub fn decision_value(model: &LinearModel, x: &CsrMatrix, row: usize) -> f64 {
    x.row_dot(row, &model.weights) + model.bias
}

pub fn hinge_objective(x: &CsrMatrix, y: &[u8], w: &[f64], b: f64, c: f64) -> f64 {
    let n = y.len() as f64;
    let lambda = 1.0 / (c * n);
    let hinge: f64 = (0..x.n_rows)
        .map(|i| {
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            (1.0 - s * (x.row_dot(i, w) + b)).max(0.0)
        })
        .sum();
    0.5 * lambda * (w.iter().map(|v| v * v).sum::<f64>() + b * b) + hinge / n
}

/// Runs Pegasos and returns the averaged iterate with its objective curve.
pub fn fit_pegasos(x: &CsrMatrix, y: &[u8], params: &SvmParams, seed: u64) -> (LinearModel, SvmTrace) {
    let n = x.n_rows;
    let d = x.n_cols;
    let lambda = 1.0 / (params.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..n).collect();
    // index d holds the bias
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut t = 0usize;
    let mut trace = SvmTrace::default();
    let mut converged = false;
    let mut epochs = 0;

    for _ in 0..params.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            let margin = s * (x.row_dot(i, &w[..d]) + w[d]);
            let shrink = 1.0 - 1.0 / t as f64;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            if margin < 1.0 {
                x.row_axpy(i, eta * s, &mut w[..d]);
                w[d] += eta * s;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let f = radius / norm;
                for v in w.iter_mut() {
                    *v *= f;
                }
            }
            let inv_t = 1.0 / t as f64;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) * inv_t;
            }
        }
        let obj = hinge_objective(x, y, &avg[..d], avg[d], params.c);
        let done = trace
            .epoch_objective
            .last()
            .is_some_and(|&prev| (prev - obj).abs() <= params.tol * obj.abs().max(1e-12));
        trace.epoch_objective.push(obj);
        if done {
            converged = true;
            break;
        }
    }

    let objective = *trace.epoch_objective.last().unwrap_or(&f64::NAN);
    let model = LinearModel {
        weights: avg[..d].to_vec(),
        bias: avg[d],
        penalty: Penalty::L2,
        c: params.c,
        class_weight: ClassWeight::None,
        converged,
        iterations: epochs,
        objective,
    };
    (model, trace)
}

/// Stratified split into `k` folds; returns fold id per example.
fn internal_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut fold = vec![0; y.len()];
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

/// Fits the SVM on all data and a Platt calibrator on decision values from
/// an internal stratified 3-fold split.
pub fn train_linear_svm(
    x: &CsrMatrix,
    y: &[u8],
    params: &SvmParams,
    seed: u64,
) -> Result<(LinearModel, PlattCalibrator), ModelError> {
    validate_xy(x, y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ModelError::InvalidParam(format!("C must be positive, got {}", params.c)));
    }
    if params.max_epochs == 0 {
        return Err(ModelError::InvalidParam("max_epochs must be at least 1".into()));
    }
    const K: usize = 3;
    let n = y.len();
    let mut decisions = vec![0.0; n];
    if n >= 2 * K {
        let folds = internal_folds(y, K, derive_seed(seed, 1));
        for f in 0..K {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let (m, _) = fit_pegasos(&xt, &yt, params, derive_seed(seed, 10 + f as u64));
            for &i in &test {
                decisions[i] = decision_value(&m, x, i);
            }
        }
    }
    let (model, _) = fit_pegasos(x, y, params, derive_seed(seed, 0));
    if n < 2 * K {
        for (i, d) in decisions.iter_mut().enumerate() {
            *d = decision_value(&model, x, i);
        }
    }
    let calibrator = fit_platt(&decisions, y);
    if model.converged {
        Ok((model, calibrator))
    } else {
        Err(ModelError::NotConverged {
            max_iter: params.max_epochs,
            best: Box::new(model),
            calibrator: Some(calibrator),
        })
    }
}

/// Platt's sigmoid fit by Newton's method with backtracking, using the
/// smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub fn fit_platt(decisions: &[f64], y: &[u8]) -> PlattCalibrator {
    let prior1 = y.iter().filter(|&&l| l == 1).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = y.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let f = s * a + b;
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    const SIGMA: f64 = 1e-12;
    const MIN_STEP: f64 = 1e-10;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&s, &t) in decisions.iter().zip(&targets) {
            let f = s * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    PlattCalibrator { a, b }
}
