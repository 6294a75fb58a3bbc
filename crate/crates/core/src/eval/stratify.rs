//! Iterative stratification over several label sets at once.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Fold id of every example.
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Each example carries a set of label ids in `0..n_labels`. Labels are
/// processed rarest first; each example of the current label goes to the fold
/// that still wants that label most, then to the fold with the most free
/// capacity, then to a seeded random choice among the remaining ties.
pub fn iterative_stratification(
    label_sets: &[Vec<usize>],
    n_labels: usize,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvalError> {
    let n = label_sets.len();
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    if n < k {
        return Err(EvalError::TooFewExamples { n, k });
    }
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut label_total = vec![0usize; n_labels];
    for set in label_sets {
        for &l in set {
            label_total[l] += 1;
        }
    }
    let share = 1.0 / k as f64;
    let mut capacity = vec![n as f64 * share; k];
    let mut demand: Vec<Vec<f64>> = label_total.iter().map(|&t| vec![t as f64 * share; k]).collect();
    let mut remaining = label_total.clone();
    let mut folds = vec![usize::MAX; n];
    let mut unassigned = n;

    let assign = |i: usize, f: usize, folds: &mut Vec<usize>, capacity: &mut Vec<f64>, demand: &mut Vec<Vec<f64>>, remaining: &mut Vec<usize>| {
        folds[i] = f;
        capacity[f] -= 1.0;
        for &l in &label_sets[i] {
            demand[l][f] -= 1.0;
            remaining[l] -= 1;
        }
    };

    while unassigned > 0 {
        let label = (0..n_labels)
            .filter(|&l| remaining[l] > 0)
            .min_by_key(|&l| (remaining[l], l));
        let members: Vec<usize> = match label {
            Some(l) => order
                .iter()
                .copied()
                .filter(|&i| folds[i] == usize::MAX && label_sets[i].contains(&l))
                .collect(),
            None => order.iter().copied().filter(|&i| folds[i] == usize::MAX).collect(),
        };
        for i in members {
            let mut best: Vec<usize> = Vec::new();
            let mut key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for f in 0..k {
                let want = label.map_or(0.0, |l| demand[l][f]);
                let cand = (want, capacity[f]);
                if cand > key {
                    key = cand;
                    best.clear();
                    best.push(f);
                } else if cand == key {
                    best.push(f);
                }
            }
            let f = if best.len() == 1 {
                best[0]
            } else {
                best[rng.random_range(0..best.len())]
            };
            assign(i, f, &mut folds, &mut capacity, &mut demand, &mut remaining);
            unassigned -= 1;
        }
    }
    Ok(FoldAssignment { folds, k, seed })
}

/// Folds stratified jointly on the debater and the binary target.
pub fn stratified_multilabel_kfold(
    debaters: &[&str],
    targets: &[u8],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvalError> {
    if debaters.len() != targets.len() {
        return Err(EvalError::LengthMismatch(debaters.len(), targets.len()));
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for d in debaters {
        let next = ids.len();
        ids.entry(d).or_insert(next);
    }
    let n_debaters = ids.len();
    let sets: Vec<Vec<usize>> = debaters
        .iter()
        .zip(targets)
        .map(|(d, &t)| vec![ids[d], n_debaters + usize::from(t == 1)])
        .collect();
    iterative_stratification(&sets, n_debaters + 2, k, seed)
}
