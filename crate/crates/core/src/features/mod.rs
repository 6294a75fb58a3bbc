//! Fitted text → vector transforms.

mod svd;
mod vocab;
mod word2vec;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use svd::{fit_truncated_svd, project_svd, SvdConfig, SvdProjection};
pub use vocab::{fit_bong, fit_bow, ngrams, transform_bow, Vocabulary, NGRAM_SEPARATOR};
pub use word2vec::{embed_sentence, train_word2vec, EmbeddingTable, Word2VecParams};

pub use crate::linalg::{CsrMatrix, SparseVector};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("rank {k} is not in 1..=min({rows}, {cols})")]
    RankTooLarge { k: usize, rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unsupported extractor envelope: {0}")]
    Envelope(String),
}

/// How to build features; fitted into a [`FeatureExtractor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Bow {
        #[serde(default = "one")]
        min_df: usize,
    },
    Bong {
        #[serde(default = "three")]
        n_max: usize,
        #[serde(default = "one")]
        min_df: usize,
        /// Truncated SVD rank; `None` keeps the raw n-gram counts.
        #[serde(default)]
        svd_components: Option<usize>,
        #[serde(default = "pipeline_svd")]
        svd: SvdConfig,
    },
    Word2vec {
        #[serde(default)]
        params: Word2VecParams,
    },
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

/// Pipelines refit the projection once per fold, so they cap subspace
/// iterations well below the standalone default.
pub fn pipeline_svd() -> SvdConfig {
    SvdConfig {
        min_power_iter: 7,
        max_power_iter: 7,
        ..SvdConfig::default()
    }
}

impl FeatureSpec {
    pub fn bow() -> Self {
        FeatureSpec::Bow { min_df: 1 }
    }

    pub fn bong(svd_components: Option<usize>) -> Self {
        FeatureSpec::Bong {
            n_max: 3,
            min_df: 1,
            svd_components,
            svd: pipeline_svd(),
        }
    }

    pub fn word2vec() -> Self {
        FeatureSpec::Word2vec {
            params: Word2VecParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSpec::Bow { .. } => "bow",
            FeatureSpec::Bong { .. } => "bong",
            FeatureSpec::Word2vec { .. } => "word2vec",
        }
    }
}

/// A fitted, frozen transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureExtractor {
    Bow {
        vocab: Vocabulary,
    },
    Bong {
        vocab: Vocabulary,
        svd: Option<SvdProjection>,
    },
    Word2vec {
        table: EmbeddingTable,
    },
}

impl FeatureExtractor {
    /// Fits on already preprocessed documents.
    pub fn fit(spec: &FeatureSpec, token_docs: &[Vec<String>], seed: u64) -> Result<Self, FeatureError> {
        match spec {
            FeatureSpec::Bow { min_df } => Ok(FeatureExtractor::Bow {
                vocab: fit_bow(token_docs, *min_df)?,
            }),
            FeatureSpec::Bong {
                n_max,
                min_df,
                svd_components,
                svd,
            } => {
                let vocab = fit_bong(token_docs, *n_max, *min_df)?;
                let svd = match svd_components {
                    None => None,
                    Some(k) => {
                        let rows: Vec<SparseVector> = token_docs.iter().map(|d| vocab.transform(d)).collect();
                        let matrix = CsrMatrix::from_rows(vocab.len(), &rows);
                        Some(fit_truncated_svd(&matrix, *k, seed, svd)?)
                    }
                };
                Ok(FeatureExtractor::Bong { vocab, svd })
            }
            FeatureSpec::Word2vec { params } => Ok(FeatureExtractor::Word2vec {
                table: train_word2vec(token_docs, params, seed)?,
            }),
        }
    }

    /// Output dimension.
    pub fn dim(&self) -> usize {
        match self {
            FeatureExtractor::Bow { vocab } => vocab.len(),
            FeatureExtractor::Bong { vocab, svd } => svd.as_ref().map_or(vocab.len(), SvdProjection::k),
            FeatureExtractor::Word2vec { table } => table.dim,
        }
    }

    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        match self {
            FeatureExtractor::Bow { vocab } => vocab.transform(tokens),
            FeatureExtractor::Bong { vocab, svd } => {
                let counts = vocab.transform(tokens);
                match svd {
                    None => counts,
                    Some(p) => SparseVector::from_dense(&p.project(&counts).expect("vocabulary and projection share a dimension")),
                }
            }
            FeatureExtractor::Word2vec { table } => SparseVector::from_dense(&embed_sentence(tokens, table)),
        }
    }

    pub fn transform_many(&self, token_docs: &[Vec<String>]) -> CsrMatrix {
        let rows: Vec<SparseVector> = token_docs.par_iter().map(|d| self.transform(d)).collect();
        CsrMatrix::from_rows(self.dim(), &rows)
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match self {
            FeatureExtractor::Bow { vocab } | FeatureExtractor::Bong { vocab, .. } => Some(vocab),
            FeatureExtractor::Word2vec { .. } => None,
        }
    }

    pub fn fingerprint(&self) -> String {
        crate::fingerprint::fingerprint(self)
    }

    /// Versioned JSON envelope.
    pub fn to_envelope(&self) -> serde_json::Value {
        serde_json::json!({
            "format": EXTRACTOR_FORMAT,
            "version": EXTRACTOR_VERSION,
            "fingerprint": self.fingerprint(),
            "extractor": self,
        })
    }

    pub fn from_envelope(value: serde_json::Value) -> Result<Self, FeatureError> {
        let format = value.get("format").and_then(|f| f.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(EXTRACTOR_FORMAT) || version != Some(EXTRACTOR_VERSION) {
            return Err(FeatureError::Envelope(format!("format {format:?} version {version:?}")));
        }
        let extractor = value
            .get("extractor")
            .cloned()
            .ok_or_else(|| FeatureError::Envelope("missing `extractor`".into()))?;
        serde_json::from_value(extractor).map_err(|e| FeatureError::Envelope(e.to_string()))
    }
}

pub const EXTRACTOR_FORMAT: &str = "debacer-extractor";
pub const EXTRACTOR_VERSION: u64 = 1;
