//! Metrics, stratified folds, cross-validation and pipeline comparison.

mod cv;
mod metrics;
mod stats;
mod stratify;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{fold_pipeline, run_cv, CvResult, MetricSummary};
pub use metrics::{brier_positive, cross_entropy, f1_score, precision, recall, ConfusionCounts, MetricReport, PROB_EPS};
pub use stats::{
    average_ranks, compare_pipelines, holm_adjust, maximal_cliques, wilcoxon_signed_rank, PairwiseComparison,
    DEFAULT_ALPHA,
};
pub use stratify::{iterative_stratification, stratified_multilabel_kfold, FoldAssignment};

use crate::corpus::{Corpus, SpeechKey};
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("no positive examples")]
    NoPositives,
    #[error("{n} examples cannot fill {k} folds")]
    TooFewExamples { n: usize, k: usize },
    #[error("invalid fold count {0}; need at least 2")]
    InvalidK(usize),
    #[error("results were computed on different fold assignments")]
    MismatchedFolds,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
}

/// One labelled moderator speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub key: SpeechKey,
    pub text: String,
    pub debater: String,
    pub label: u8,
}

/// Labelled moderator speeches of the agenda items called `agenda_label`, in
/// corpus order. Speeches without a label in `labels` are skipped.
pub fn examples_from_corpus(corpus: &Corpus, agenda_label: &str, labels: &BTreeMap<SpeechKey, u8>) -> Vec<Example> {
    corpus
        .moderator_speeches(agenda_label)
        .into_iter()
        .filter_map(|s| {
            labels.get(&s.key()).map(|&label| Example {
                key: s.key(),
                text: s.text.clone(),
                debater: s.debater.clone(),
                label,
            })
        })
        .collect()
}
