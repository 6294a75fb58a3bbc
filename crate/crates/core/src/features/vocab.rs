use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::linalg::SparseVector;

/// Joins the tokens of an n-gram. Tokens never contain whitespace.
pub const NGRAM_SEPARATOR: char = ' ';

/// Fitted n-gram → column map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
    entries: Vec<String>,
    doc_freq: Vec<usize>,
    pub n_max: usize,
    pub min_df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    n_max: usize,
    min_df: usize,
    /// `(n-gram, document frequency)` in column order.
    entries: Vec<(String, usize)>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let (entries, doc_freq): (Vec<String>, Vec<usize>) = r.entries.into_iter().unzip();
        let index = entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self {
            index,
            entries,
            doc_freq,
            n_max: r.n_max,
            min_df: r.min_df,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            n_max: v.n_max,
            min_df: v.min_df,
            entries: v.entries.into_iter().zip(v.doc_freq).collect(),
        }
    }
}

/// Every contiguous n-gram of `tokens` with `1 ≤ n ≤ n_max`, in text order.
pub fn ngrams(tokens: &[String], n_max: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n_max).flat_map(move |n| {
        tokens
            .windows(n)
            .map(|w| w.join(&NGRAM_SEPARATOR.to_string()))
    })
}

impl Vocabulary {
    /// Fits over all n-grams up to `n_max` whose document frequency is at
    /// least `min_df`. Columns follow lexicographic order of the n-grams.
    pub fn fit(token_docs: &[Vec<String>], n_max: usize, min_df: usize) -> Result<Self, FeatureError> {
        if token_docs.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        if n_max == 0 {
            return Err(FeatureError::InvalidParam("n_max must be at least 1".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in token_docs {
            let unique: HashSet<String> = ngrams(doc, n_max).collect();
            for g in unique {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let (entries, doc_freq): (Vec<String>, Vec<usize>) =
            df.into_iter().filter(|(_, f)| *f >= min_df.max(1)).unzip();
        let index = entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Ok(Self {
            index,
            entries,
            doc_freq,
            n_max,
            min_df,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn doc_freq(&self, column: usize) -> usize {
        self.doc_freq[column]
    }

    /// Raw n-gram counts; unknown n-grams are ignored.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let pairs = ngrams(tokens, self.n_max)
            .filter_map(|g| self.get(&g))
            .map(|i| (i, 1.0))
            .collect();
        SparseVector::from_pairs(self.len(), pairs)
    }
}

pub fn fit_bow(token_docs: &[Vec<String>], min_df: usize) -> Result<Vocabulary, FeatureError> {
    Vocabulary::fit(token_docs, 1, min_df)
}

pub fn fit_bong(token_docs: &[Vec<String>], n_max: usize, min_df: usize) -> Result<Vocabulary, FeatureError> {
    Vocabulary::fit(token_docs, n_max, min_df)
}

pub fn transform_bow(tokens: &[String], vocab: &Vocabulary) -> SparseVector {
    vocab.transform(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(d: &[&[&str]]) -> Vec<Vec<String>> {
        d.iter().map(|x| x.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn bow_examples() {
        let d = docs(&[&["a", "b", "a"], &["b", "c"]]);
        let v = fit_bow(&d, 1).unwrap();
        assert_eq!(v.entries(), &["a", "b", "c"]);
        let v2 = fit_bow(&d, 2).unwrap();
        assert_eq!(v2.entries(), &["b"]);
        assert_eq!(v2.doc_freq(0), 2);
        assert!(matches!(fit_bow(&[], 1), Err(FeatureError::EmptyCorpus)));
    }

    #[test]
    fn transform_counts() {
        let v = fit_bow(&docs(&[&["a", "b"]]), 1).unwrap();
        let x = transform_bow(&docs(&[&["a", "b", "a"]])[0], &v);
        assert_eq!(x.indices, vec![0, 1]);
        assert_eq!(x.values, vec![2.0, 1.0]);
        assert!(transform_bow(&docs(&[&["z", "q"]])[0], &v).is_empty());
        assert!(transform_bow(&[], &v).is_empty());
    }

    #[test]
    fn bong_enumerates_all_ngrams() {
        let v = fit_bong(&docs(&[&["a", "b", "c"]]), 3, 1).unwrap();
        assert_eq!(v.len(), 6);
        for g in ["a", "b", "c", "a b", "b c", "a b c"] {
            assert!(v.get(g).is_some(), "{g}");
        }
    }

    #[test]
    fn bong_unigram_equals_bow() {
        let d = docs(&[&["x", "y", "x"], &["y", "z"], &["z"]]);
        let a = fit_bong(&d, 1, 1).unwrap();
        let b = fit_bow(&d, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for doc in &d {
            assert_eq!(a.transform(doc), b.transform(doc));
        }
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = fit_bong(&docs(&[&["a", "b"], &["b", "c"]]), 2, 1).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get("b c"), v.get("b c"));
    }
}
