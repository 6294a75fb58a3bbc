//! Probabilistic binary classifiers and the fitted text pipeline.

mod forest;
mod logreg;
mod pipeline;
mod svm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{gini, entropy, train_random_forest, Criterion, Forest, ForestParams, Node, Tree};
pub use logreg::{train_logreg, LogisticObjective, LogregParams};
pub use pipeline::{
    ClassifierSpec, PipelineSpec, TrainedPipeline, TrainingMetadata, MODEL_FORMAT, MODEL_VERSION,
};
pub use svm::{
    decision_value, fit_pegasos, fit_platt, hinge_objective, train_linear_svm, PlattCalibrator, SvmParams, SvmTrace,
};

use crate::features::FeatureError;
use crate::linalg::SparseVector;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not converged within {max_iter} iterations")]
    NotConverged {
        max_iter: usize,
        best: Box<LinearModel>,
        calibrator: Option<PlattCalibrator>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("model file: {0}")]
    Envelope(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// `N / (2·N_c)` from the full training set.
    Balanced,
    /// Like `Balanced`, recomputed on each bootstrap sample (forests only).
    BalancedSubsample,
}

/// Per-class weights `[w0, w1]`. Absent classes get weight 1.
pub fn class_weights(y: &[u8], mode: ClassWeight) -> [f64; 2] {
    match mode {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced | ClassWeight::BalancedSubsample => {
            let n = y.len() as f64;
            let n1 = y.iter().filter(|&&l| l == 1).count() as f64;
            let n0 = n - n1;
            let w = |nc: f64| if nc > 0.0 { n / (2.0 * nc) } else { 1.0 };
            [w(n0), w(n1)]
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weights and bias of a linear decision function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
            penalty: Penalty::L2,
            c: 1.0,
            class_weight: ClassWeight::None,
            converged: true,
            iterations: 0,
            objective: f64::NAN,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &SparseVector) -> Result<f64, ModelError> {
        if x.dim != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim,
            });
        }
        Ok(x.dot_dense(&self.weights) + self.bias)
    }

    /// `sigmoid(w·x + b)`.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64, ModelError> {
        Ok(sigmoid(self.margin(x)?))
    }
}

/// Free-function form of [`LinearModel::predict_proba`].
pub fn predict_proba_linear(model: &LinearModel, x: &SparseVector) -> Result<f64, ModelError> {
    model.predict_proba(x)
}

/// A fitted classifier over feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Logreg { model: LinearModel },
    Svm { model: LinearModel, calibrator: PlattCalibrator },
    Forest { forest: Forest },
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Logreg { .. } => "logreg",
            Classifier::Svm { .. } => "svm",
            Classifier::Forest { .. } => "forest",
        }
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64, ModelError> {
        match self {
            Classifier::Logreg { model } => model.predict_proba(x),
            Classifier::Svm { model, calibrator } => Ok(calibrator.probability(model.margin(x)?)),
            Classifier::Forest { forest } => forest.predict_proba(x),
        }
    }
}
