//! Seeded random search over pipeline hyperparameters.
//!
//! Trials are ranked by mean F1 (higher first), then mean cross-entropy and
//! mean positive-class Brier score (lower first), then trial index.

use std::cmp::Ordering;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{run_cv, CvResult, Example, FoldAssignment};
use crate::features::{pipeline_svd, FeatureSpec, Word2VecParams};
use crate::models::{
    ClassWeight, ClassifierSpec, Criterion, ForestParams, LogregParams, ModelError, Penalty, PipelineSpec, SvmParams,
    TrainedPipeline,
};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search budget must be at least 1")]
    InvalidBudget,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("no trial finished successfully")]
    NoSuccessfulTrials,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Bow,
    Bong,
    Word2vec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logreg,
    Svm,
    Forest,
}

/// Domains searched. Reals are sampled log-uniformly, integers uniformly,
/// categorical sets uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamSpace {
    pub features: Vec<FeatureKind>,
    pub classifiers: Vec<ClassifierKind>,
    /// Whether BoNG features are compressed by truncated SVD.
    pub bong_svd: Vec<bool>,
    pub n_tsvd: (usize, usize),
    pub c: (f64, f64),
    pub penalty: Vec<Penalty>,
    pub class_weight: Vec<ClassWeight>,
    pub n_estimators: (usize, usize),
    pub criterion: Vec<Criterion>,
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self {
            features: vec![FeatureKind::Bow, FeatureKind::Bong, FeatureKind::Word2vec],
            classifiers: vec![ClassifierKind::Logreg, ClassifierKind::Svm, ClassifierKind::Forest],
            bong_svd: vec![true, false],
            n_tsvd: (50, 300),
            c: (1e-2, 1e5),
            penalty: vec![Penalty::L1, Penalty::L2],
            class_weight: vec![ClassWeight::None, ClassWeight::Balanced, ClassWeight::BalancedSubsample],
            n_estimators: (50, 800),
            criterion: vec![Criterion::Gini, Criterion::Entropy],
        }
    }
}

fn pick<T: Copy>(rng: &mut Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

impl ParamSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidSpace(m.into()));
        if self.features.is_empty() || self.classifiers.is_empty() {
            return bad("features and classifiers must be non-empty");
        }
        if self.bong_svd.is_empty() || self.penalty.is_empty() || self.class_weight.is_empty() || self.criterion.is_empty() {
            return bad("categorical domains must be non-empty");
        }
        if !(self.c.0 > 0.0 && self.c.0 <= self.c.1 && self.c.1.is_finite()) {
            return bad("C bounds must satisfy 0 < lo <= hi");
        }
        if self.n_tsvd.0 == 0 || self.n_tsvd.0 > self.n_tsvd.1 {
            return bad("n_tsvd bounds must satisfy 1 <= lo <= hi");
        }
        if self.n_estimators.0 == 0 || self.n_estimators.0 > self.n_estimators.1 {
            return bad("n_estimators bounds must satisfy 1 <= lo <= hi");
        }
        Ok(())
    }

    fn log_uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            return lo;
        }
        (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
    }

    /// Draws one pipeline spec; `base` supplies preprocessing and threshold.
    pub fn sample(&self, rng: &mut Rng, base: &PipelineSpec) -> PipelineSpec {
        let features = match pick(rng, &self.features) {
            FeatureKind::Bow => FeatureSpec::bow(),
            FeatureKind::Bong => {
                let k = pick(rng, &self.bong_svd).then(|| rng.random_range(self.n_tsvd.0..=self.n_tsvd.1));
                FeatureSpec::Bong {
                    n_max: 3,
                    min_df: 1,
                    svd_components: k,
                    svd: pipeline_svd(),
                }
            }
            FeatureKind::Word2vec => FeatureSpec::Word2vec {
                params: Word2VecParams::default(),
            },
        };
        let classifier = match pick(rng, &self.classifiers) {
            ClassifierKind::Logreg => {
                let c = Self::log_uniform(rng, self.c);
                let penalty = pick(rng, &self.penalty);
                let allowed: Vec<ClassWeight> = self
                    .class_weight
                    .iter()
                    .copied()
                    .filter(|w| *w != ClassWeight::BalancedSubsample)
                    .collect();
                let class_weight = if allowed.is_empty() { ClassWeight::None } else { pick(rng, &allowed) };
                ClassifierSpec::Logreg(LogregParams {
                    penalty,
                    c,
                    class_weight,
                    ..LogregParams::default()
                })
            }
            ClassifierKind::Svm => ClassifierSpec::Svm(SvmParams {
                c: Self::log_uniform(rng, self.c),
                ..SvmParams::default()
            }),
            ClassifierKind::Forest => ClassifierSpec::Forest(ForestParams {
                n_estimators: rng.random_range(self.n_estimators.0..=self.n_estimators.1),
                criterion: pick(rng, &self.criterion),
                class_weight: pick(rng, &self.class_weight),
                ..ForestParams::default()
            }),
        };
        PipelineSpec {
            preprocess: base.preprocess.clone(),
            features,
            classifier,
            threshold: base.threshold,
            seed: base.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankKey {
    pub f1: f64,
    pub cross_entropy: f64,
    pub brier_positive: f64,
}

impl RankKey {
    pub fn of(result: &CvResult) -> Self {
        Self {
            f1: result.mean.f1,
            cross_entropy: result.mean.cross_entropy,
            brier_positive: result.mean.brier_positive,
        }
    }

    /// `Less` means `self` ranks ahead of `other`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .f1
            .total_cmp(&self.f1)
            .then(self.cross_entropy.total_cmp(&other.cross_entropy))
            .then(self.brier_positive.total_cmp(&other.brier_positive))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub spec: PipelineSpec,
    pub rank_key: Option<RankKey>,
    pub result: Option<CvResult>,
    pub error: Option<String>,
}

/// Successful trials by rank key, then failed ones; ties by trial index.
pub fn rank_trials(trials: &mut [Trial]) {
    trials.sort_by(|a, b| match (&a.rank_key, &b.rank_key) {
        (Some(x), Some(y)) => x.rank_cmp(y).then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
}

/// Evaluates `budget` sampled specs by cross-validation on `folds`. Failed
/// trials are kept with their error.
pub fn random_search(
    space: &ParamSpace,
    budget: usize,
    base: &PipelineSpec,
    examples: &[Example],
    folds: &FoldAssignment,
    seed: u64,
) -> Result<Vec<Trial>, SearchError> {
    if budget == 0 {
        return Err(SearchError::InvalidBudget);
    }
    space.validate()?;
    let mut rng = seeded(seed);
    let specs: Vec<PipelineSpec> = (0..budget)
        .map(|i| space.sample(&mut rng, base).with_seed(derive_seed(seed, i as u64)))
        .collect();
    let mut trials: Vec<Trial> = specs
        .into_par_iter()
        .enumerate()
        .map(|(index, spec)| match run_cv(&spec, examples, folds) {
            Ok(result) => Trial {
                index,
                rank_key: Some(RankKey::of(&result)),
                spec,
                result: Some(result),
                error: None,
            },
            Err(e) => Trial {
                index,
                spec,
                rank_key: None,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rank_trials(&mut trials);
    Ok(trials)
}

/// Refits the top-ranked successful trial on all examples.
pub fn best_pipeline(trials: &[Trial], examples: &[Example]) -> Result<TrainedPipeline, SearchError> {
    let top = trials
        .iter()
        .filter(|t| t.rank_key.is_some())
        .min_by(|a, b| {
            a.rank_key
                .as_ref()
                .unwrap()
                .rank_cmp(b.rank_key.as_ref().unwrap())
                .then(a.index.cmp(&b.index))
        })
        .ok_or(SearchError::NoSuccessfulTrials)?;
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok(TrainedPipeline::fit(&top.spec, &texts, &labels)?)
}
