//! Skip-gram word embeddings trained with negative sampling.
//!
//! Single-threaded so that a seed fully determines the table.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Word2VecParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub learning_rate: f64,
}

impl Default for Word2VecParams {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 2,
            learning_rate: 0.025,
        }
    }
}

/// token → dense vector, plus the training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr", into = "TableRepr")]
pub struct EmbeddingTable {
    pub dim: usize,
    pub params: Word2VecParams,
    pub seed: u64,
    /// Mean skip-gram loss per epoch.
    pub epoch_loss: Vec<f64>,
    words: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    dim: usize,
    params: Word2VecParams,
    seed: u64,
    epoch_loss: Vec<f64>,
    rows: Vec<(String, Vec<f64>)>,
}

impl From<TableRepr> for EmbeddingTable {
    fn from(r: TableRepr) -> Self {
        let mut words = Vec::with_capacity(r.rows.len());
        let mut vectors = Vec::with_capacity(r.rows.len() * r.dim);
        for (w, v) in r.rows {
            words.push(w);
            vectors.extend(v);
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            dim: r.dim,
            params: r.params,
            seed: r.seed,
            epoch_loss: r.epoch_loss,
            words,
            vectors,
            index,
        }
    }
}

impl From<EmbeddingTable> for TableRepr {
    fn from(t: EmbeddingTable) -> Self {
        let rows = t
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), t.vectors[i * t.dim..(i + 1) * t.dim].to_vec()))
            .collect();
        Self {
            dim: t.dim,
            params: t.params,
            seed: t.seed,
            epoch_loss: t.epoch_loss,
            rows,
        }
    }
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trains skip-gram with negative sampling over `token_docs`.
pub fn train_word2vec(
    token_docs: &[Vec<String>],
    params: &Word2VecParams,
    seed: u64,
) -> Result<EmbeddingTable, FeatureError> {
    if params.dim == 0 || params.window == 0 || params.epochs == 0 {
        return Err(FeatureError::InvalidParam("dim, window and epochs must be positive".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in token_docs {
        for t in doc {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let words: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c >= params.min_count.max(1))
        .map(|(w, _)| (*w).to_owned())
        .collect();
    if words.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let sentences: Vec<Vec<usize>> = token_docs
        .iter()
        .map(|d| d.iter().filter_map(|t| index.get(t).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() > 1)
        .collect();

    // unigram^0.75 noise distribution as a cumulative table
    let mut cumulative = Vec::with_capacity(words.len());
    let mut acc = 0.0;
    for w in &words {
        acc += (counts[w.as_str()] as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_noise = acc;

    let dim = params.dim;
    let mut r = rng::seeded(seed);
    let mut input: Vec<f64> = (0..words.len() * dim)
        .map(|_| (r.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0; words.len() * dim];

    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    let total_steps = (total_tokens * params.epochs).max(1) as f64;
    let min_lr = params.learning_rate * 1e-4;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];
    let mut epoch_loss = Vec::with_capacity(params.epochs);

    for _ in 0..params.epochs {
        let (mut loss, mut pairs) = (0.0, 0usize);
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (params.learning_rate * (1.0 - processed as f64 / total_steps)).max(min_lr);
                processed += 1;
                let reach = r.random_range(1..=params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    let inp = &mut input[context * dim..(context + 1) * dim];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for n in 0..=params.negatives {
                        let (target, label) = if n == 0 {
                            (center, 1.0)
                        } else {
                            let draw = r.random::<f64>() * total_noise;
                            let t = cumulative.partition_point(|&c| c <= draw).min(words.len() - 1);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = &mut output[target * dim..(target + 1) * dim];
                        let score: f64 = inp.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        loss -= if label > 0.5 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                        let g = (label - p) * lr;
                        for ((gr, o), i) in grad.iter_mut().zip(out.iter_mut()).zip(inp.iter()) {
                            *gr += g * *o;
                            *o += g * i;
                        }
                    }
                    inp.iter_mut().zip(&grad).for_each(|(i, g)| *i += g);
                    pairs += 1;
                }
            }
        }
        epoch_loss.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
    }

    Ok(EmbeddingTable {
        dim,
        params: params.clone(),
        seed,
        epoch_loss,
        words,
        vectors: input,
        index,
    })
}

/// Mean of the in-table token vectors; zero when no token is known.
pub fn embed_sentence(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| table.vector(t)) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        n += 1;
    }
    if n > 0 {
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Vec<String>> {
        ["a b c a", "b c d", "a d d b"]
            .iter()
            .map(|s| s.split(' ').map(String::from).collect())
            .collect()
    }

    #[test]
    fn shape_and_finiteness() {
        let t = train_word2vec(&docs(), &Word2VecParams::default(), 1).unwrap();
        assert_eq!(t.len(), 4);
        for w in t.words() {
            let v = t.vector(w).unwrap();
            assert_eq!(v.len(), 100);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn min_count_filters_and_empty_errors() {
        let params = Word2VecParams { min_count: 3, ..Default::default() };
        let t = train_word2vec(&docs(), &params, 1).unwrap();
        assert_eq!(t.words(), &["a", "b", "d"]);
        let none = Word2VecParams { min_count: 50, ..Default::default() };
        assert!(matches!(train_word2vec(&docs(), &none, 1), Err(FeatureError::EmptyCorpus)));
    }

    #[test]
    fn embed_averages_known_tokens() {
        let t = train_word2vec(&docs(), &Word2VecParams::default(), 2).unwrap();
        let one = embed_sentence(&["a".into()], &t);
        assert_eq!(one, t.vector("a").unwrap());
        let two = embed_sentence(&["a".into(), "b".into(), "zzz".into()], &t);
        for ((x, u), v) in two.iter().zip(t.vector("a").unwrap()).zip(t.vector("b").unwrap()) {
            assert!((x - (u + v) / 2.0).abs() < 1e-15);
        }
        assert!(embed_sentence(&["zzz".into()], &t).iter().all(|&x| x == 0.0));
        assert!(embed_sentence(&[], &t).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_serializable() {
        let a = train_word2vec(&docs(), &Word2VecParams::default(), 9).unwrap();
        let b = train_word2vec(&docs(), &Word2VecParams::default(), 9).unwrap();
        assert_eq!(a, b);
        let back: EmbeddingTable = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
