//! Wilcoxon signed-rank test, Holm correction and clique extraction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{CvResult, EvalError};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest sample size handled by exact enumeration of sign patterns.
const EXACT_MAX_N: usize = 12;
const ZERO_TOL: f64 = 1e-12;

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks_of(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && (values[idx[j + 1]] - values[idx[i]]).abs() <= ZERO_TOL {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank p-value for paired samples. Zero
/// differences are dropped; if none remain the p-value is 1. Exact null
/// distribution up to 12 pairs, normal approximation with continuity and tie
/// correction beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| d.abs() > ZERO_TOL)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(1.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks_of(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        // doubled ranks are integers even with ties
        let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let observed = (w_plus * 2.0).round() as u64;
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            let w: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
            if w <= observed {
                le += 1;
            }
            if w >= observed {
                ge += 1;
            }
        }
        let total = (1u64 << n) as f64;
        return Ok((2.0 * le.min(ge) as f64 / total).min(1.0));
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && (sorted[j + 1] - sorted[i]).abs() <= ZERO_TOL {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        let adj = ((m - pos) as f64 * p[i]).min(1.0);
        running = running.max(adj);
        out[i] = running;
    }
    out
}

/// Mean rank of each pipeline over folds; rank 1 = highest score in a fold.
pub fn average_ranks(scores: &[Vec<f64>]) -> Vec<f64> {
    let p = scores.len();
    if p == 0 {
        return Vec::new();
    }
    let k = scores[0].len();
    let mut total = vec![0.0; p];
    for f in 0..k {
        let neg: Vec<f64> = scores.iter().map(|s| -s[f]).collect();
        for (t, r) in total.iter_mut().zip(average_ranks_of(&neg)) {
            *t += r;
        }
    }
    total.iter().map(|t| t / k as f64).collect()
}

/// Maximal cliques of an undirected graph (Bron–Kerbosch with pivoting).
/// Members are sorted, and so is the list of cliques.
pub fn maximal_cliques(adjacent: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn expand(adj: &[Vec<bool>], r: &mut Vec<usize>, mut p: Vec<usize>, mut x: Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
            return;
        }
        let pivot = p
            .iter()
            .chain(&x)
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
            .expect("p or x non-empty");
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            r.push(v);
            let np = p.iter().copied().filter(|&u| adj[v][u]).collect();
            let nx = x.iter().copied().filter(|&u| adj[v][u]).collect();
            expand(adj, r, np, nx, out);
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
    }
    let mut out = Vec::new();
    expand(adjacent, &mut Vec::new(), (0..adjacent.len()).collect(), Vec::new(), &mut out);
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub names: Vec<String>,
    pub mean_f1: Vec<f64>,
    pub average_ranks: Vec<f64>,
    /// Symmetric; diagonal is 1.
    pub raw_p: Vec<Vec<f64>>,
    pub adjusted_p: Vec<Vec<f64>>,
    pub alpha: f64,
    /// Maximal groups with no significant difference inside.
    pub cliques: Vec<Vec<usize>>,
}

impl PairwiseComparison {
    pub fn same_clique(&self, a: usize, b: usize) -> bool {
        self.cliques.iter().any(|c| c.contains(&a) && c.contains(&b))
    }
}

/// Pairwise Wilcoxon tests on per-fold F1, Holm-adjusted across all pairs.
pub fn compare_pipelines(results: &[CvResult], alpha: f64) -> Result<PairwiseComparison, EvalError> {
    let Some(first) = results.first() else {
        return Err(EvalError::EmptyInput);
    };
    if results.iter().any(|r| r.assignment != first.assignment) {
        return Err(EvalError::MismatchedFolds);
    }
    let p = results.len();
    let scores: Vec<Vec<f64>> = results.iter().map(CvResult::fold_f1).collect();
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            pairs.push((i, j));
            raw.push(wilcoxon_signed_rank(&scores[i], &scores[j])?);
        }
    }
    let adjusted = holm_adjust(&raw);
    let mut raw_p = vec![vec![1.0; p]; p];
    let mut adjusted_p = vec![vec![1.0; p]; p];
    let mut adjacent = vec![vec![false; p]; p];
    for (n, &(i, j)) in pairs.iter().enumerate() {
        raw_p[i][j] = raw[n];
        raw_p[j][i] = raw[n];
        adjusted_p[i][j] = adjusted[n];
        adjusted_p[j][i] = adjusted[n];
        let tied = adjusted[n] >= alpha;
        adjacent[i][j] = tied;
        adjacent[j][i] = tied;
    }
    Ok(PairwiseComparison {
        names: results.iter().map(|r| r.name.clone()).collect(),
        mean_f1: results.iter().map(|r| r.mean.f1).collect(),
        average_ranks: average_ranks(&scores),
        raw_p,
        adjusted_p,
        alpha,
        cliques: maximal_cliques(&adjacent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilcoxon_examples() {
        let a = [0.9, 0.8, 0.7, 0.95, 0.85];
        assert_eq!(wilcoxon_signed_rank(&a, &a).unwrap(), 1.0);
        let b = [0.5, 0.3, 0.6, 0.4, 0.2];
        assert!((wilcoxon_signed_rank(&a, &b).unwrap() - 0.0625).abs() < 1e-15);
        // +d / -d pairs sit at the null median
        let c = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        let zero = [0.0; 6];
        assert_eq!(wilcoxon_signed_rank(&c, &zero).unwrap(), 1.0);
        assert!(wilcoxon_signed_rank(&a, &b[..4]).is_err());
    }

    #[test]
    fn wilcoxon_normal_branch_is_symmetric() {
        let a: Vec<f64> = (0..20).map(|i| f64::from(i) * 0.1 + 0.05).collect();
        let b = vec![0.0; 20];
        let p1 = wilcoxon_signed_rank(&a, &b).unwrap();
        let p2 = wilcoxon_signed_rank(&b, &a).unwrap();
        assert!((p1 - p2).abs() < 1e-15);
        assert!(p1 < 1e-3);
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm_adjust(&[0.03]), vec![0.03]);
        let adj = holm_adjust(&[0.01, 0.04]);
        assert!((adj[0] - 0.02).abs() < 1e-15 && (adj[1] - 0.04).abs() < 1e-15);
        assert_eq!(holm_adjust(&[1.0, 1.0, 1.0]), vec![1.0; 3]);
        let p = [0.04, 0.001, 0.03, 0.2];
        let adj = holm_adjust(&p);
        assert!(adj.iter().zip(&p).all(|(a, r)| a >= r));
    }

    #[test]
    fn ranks_average_ties() {
        let r = average_ranks(&[vec![0.9, 0.5], vec![0.9, 0.7], vec![0.1, 0.1]]);
        assert_eq!(r, vec![(1.5 + 2.0) / 2.0, (1.5 + 1.0) / 2.0, 3.0]);
    }

    #[test]
    fn cliques_of_small_graphs() {
        let t = true;
        let f = false;
        let adj = vec![vec![f, t, f], vec![t, f, t], vec![f, t, f]];
        assert_eq!(maximal_cliques(&adj), vec![vec![0, 1], vec![1, 2]]);
        let full = vec![vec![f, t, t], vec![t, f, t], vec![t, t, f]];
        assert_eq!(maximal_cliques(&full), vec![vec![0, 1, 2]]);
        let none = vec![vec![f; 2]; 2];
        assert_eq!(maximal_cliques(&none), vec![vec![0], vec![1]]);
    }
}
