//! Weighted, regularized logistic regression.
//!
//! The objective is normalized by the sample count so that tolerances do not
//! depend on the data size:
//!
//! ```text
//! F(w, b) = (1/N) Σ sᵢ log(1 + exp(-ỹᵢ (w·xᵢ + b))) + R(w) / (C·N)
//! ```
//!
//! with `R = ½‖w‖²` (L2) or `‖w‖₁` (L1), `ỹ ∈ {-1, +1}` and per-sample class
//! weights `sᵢ`. It has the same minimizer as the usual `R(w) + C Σ sᵢ ℓᵢ`.
//! Both penalties are solved by accelerated proximal gradient with
//! backtracking and function-value restarts; for L2 the proximal map is the
//! identity and the method reduces to line-searched gradient descent.

use serde::{Deserialize, Serialize};

use super::{class_weights, sigmoid, ClassWeight, LinearModel, ModelError, Penalty};
use crate::linalg::{norm, CsrMatrix};

/// Smooth part of the objective: weighted mean log-loss (+ L2 term when the
/// penalty is L2). Exposed for gradient checking.
pub struct LogisticObjective<'a> {
    pub x: &'a CsrMatrix,
    pub y: &'a [u8],
    pub sample_weight: Vec<f64>,
    pub penalty: Penalty,
    pub c: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a CsrMatrix, y: &'a [u8], penalty: Penalty, c: f64, class_weight: ClassWeight) -> Self {
        let cw = class_weights(y, class_weight);
        let sample_weight = y.iter().map(|&l| cw[usize::from(l)]).collect();
        Self {
            x,
            y,
            sample_weight,
            penalty,
            c,
        }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    /// Regularization strength on the normalized scale.
    pub fn lambda(&self) -> f64 {
        1.0 / (self.c * self.n())
    }

    /// `params = [w..., b]`. Value of the smooth part.
    pub fn value(&self, params: &[f64]) -> f64 {
        let d = self.x.n_cols;
        let (w, b) = (&params[..d], params[d]);
        let mut loss = 0.0;
        for i in 0..self.x.n_rows {
            let z = self.x.row_dot(i, w) + b;
            let m = if self.y[i] == 1 { z } else { -z };
            loss += self.sample_weight[i] * log1p_exp(-m);
        }
        let mut f = loss / self.n();
        if self.penalty == Penalty::L2 {
            f += 0.5 * self.lambda() * w.iter().map(|v| v * v).sum::<f64>();
        }
        f
    }

    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = self.x.n_cols;
        let (w, b) = (&params[..d], params[d]);
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        let n = self.n();
        for i in 0..self.x.n_rows {
            let z = self.x.row_dot(i, w) + b;
            let yi = f64::from(self.y[i]);
            let m = if self.y[i] == 1 { z } else { -z };
            let s = self.sample_weight[i];
            loss += s * log1p_exp(-m);
            let r = s * (sigmoid(z) - yi) / n;
            self.x.row_axpy(i, r, &mut grad[..d]);
            grad[d] += r;
        }
        let mut f = loss / n;
        if self.penalty == Penalty::L2 {
            let lam = self.lambda();
            f += 0.5 * lam * w.iter().map(|v| v * v).sum::<f64>();
            for (g, wi) in grad[..d].iter_mut().zip(w) {
                *g += lam * wi;
            }
        }
        (f, grad)
    }

    fn nonsmooth(&self, params: &[f64]) -> f64 {
        match self.penalty {
            Penalty::L1 => self.lambda() * params[..self.x.n_cols].iter().map(|v| v.abs()).sum::<f64>(),
            Penalty::L2 => 0.0,
        }
    }

    /// Full objective including the L1 term.
    pub fn total(&self, params: &[f64]) -> f64 {
        self.value(params) + self.nonsmooth(params)
    }

    fn prox(&self, params: &mut [f64], step: f64) {
        if self.penalty == Penalty::L1 {
            let t = step * self.lambda();
            for v in params[..self.x.n_cols].iter_mut() {
                *v = v.signum() * (v.abs() - t).max(0.0);
            }
        }
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogregParams {
    pub penalty: Penalty,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            class_weight: ClassWeight::None,
            tol: 1e-6,
            max_iter: 20_000,
        }
    }
}

pub(crate) fn validate_xy(x: &CsrMatrix, y: &[u8]) -> Result<(), ModelError> {
    if x.n_rows != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: x.n_rows,
            labels: y.len(),
        });
    }
    if x.n_rows == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(ModelError::InvalidLabel(bad));
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}

/// Fits logistic regression. When `max_iter` is exhausted the best iterate is
/// returned inside [`ModelError::NotConverged`].
pub fn train_logreg(x: &CsrMatrix, y: &[u8], params: &LogregParams) -> Result<LinearModel, ModelError> {
    validate_xy(x, y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ModelError::InvalidParam(format!("C must be positive, got {}", params.c)));
    }
    if params.class_weight == ClassWeight::BalancedSubsample {
        return Err(ModelError::InvalidParam("balanced_subsample applies to forests only".into()));
    }
    let obj = LogisticObjective::new(x, y, params.penalty, params.c, params.class_weight);
    let d = x.n_cols;
    let mut xk = vec![0.0; d + 1];
    let mut yk = xk.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut f_x = obj.total(&xk);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let (f_y, g_y) = obj.value_and_gradient(&yk);
        let next = loop {
            let step = 1.0 / lipschitz;
            let mut cand: Vec<f64> = yk.iter().zip(&g_y).map(|(v, g)| v - step * g).collect();
            obj.prox(&mut cand, step);
            let diff: Vec<f64> = cand.iter().zip(&yk).map(|(a, b)| a - b).collect();
            let quad = f_y + diff.iter().zip(&g_y).map(|(d, g)| d * g).sum::<f64>()
                + 0.5 * lipschitz * diff.iter().map(|d| d * d).sum::<f64>();
            let f_c = obj.value(&cand);
            if f_c <= quad + 1e-12 * quad.abs().max(1.0) || lipschitz > 1e20 {
                let total = f_c + obj.nonsmooth(&cand);
                break (cand, total, norm(&diff) * lipschitz);
            }
            lipschitz *= 2.0;
        };
        let (cand, f_cand, step_norm) = next;
        if step_norm < params.tol {
            xk = cand;
            converged = true;
            break;
        }
        if f_cand > f_x {
            // restart momentum from the current iterate
            t = 1.0;
            yk = xk.clone();
            continue;
        }
        // gradient-based restart: the step opposes the momentum direction
        let opposed = yk
            .iter()
            .zip(&cand)
            .zip(&xk)
            .map(|((y, c), p)| (y - c) * (c - p))
            .sum::<f64>()
            > 0.0;
        let t_next = if opposed { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let beta = if opposed { 0.0 } else { (t - 1.0) / t_next };
        yk = cand
            .iter()
            .zip(&xk)
            .map(|(c, p)| c + beta * (c - p))
            .collect();
        xk = cand;
        f_x = f_cand;
        t = t_next;
        // let the step grow back when the local curvature is lower
        lipschitz = (lipschitz * 0.9).max(1e-12);
    }

    let model = LinearModel {
        weights: xk[..d].to_vec(),
        bias: xk[d],
        penalty: params.penalty,
        c: params.c,
        class_weight: params.class_weight,
        converged,
        iterations,
        objective: obj.total(&xk),
    };
    if converged {
        Ok(model)
    } else {
        Err(ModelError::NotConverged {
            max_iter: params.max_iter,
            best: Box::new(model),
            calibrator: None,
        })
    }
}
