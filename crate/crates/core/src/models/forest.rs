//! Random forest of CART trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::validate_xy;
use super::{class_weights, ClassWeight, ModelError};
use crate::linalg::{CsrMatrix, SparseVector};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

/// Gini impurity of weighted class counts.
pub fn gini(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p = counts[1] / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Shannon entropy in bits.
pub fn entropy(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .map(|&c| c / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

impl Criterion {
    pub fn impurity(self, counts: [f64; 2]) -> f64 {
        match self {
            Criterion::Gini => gini(counts),
            Criterion::Entropy => entropy(counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub class_weight: ClassWeight,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            criterion: Criterion::Gini,
            class_weight: ClassWeight::BalancedSubsample,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Weighted class totals `[w0, w1]`.
        weights: [f64; 2],
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &SparseVector) -> &Node {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = match x.indices.binary_search(feature) {
                        Ok(p) => x.values[p],
                        Err(_) => 0.0,
                    };
                    at = if v <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    /// Positive-class weight fraction of the leaf reached by `x`.
    pub fn predict_proba(&self, x: &SparseVector) -> f64 {
        match self.leaf_for(x) {
            Node::Leaf { weights, .. } => weights[1] / (weights[0] + weights[1]),
            Node::Split { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
}

impl Forest {
    pub fn n_estimators(&self) -> usize {
        self.trees.len()
    }

    /// Mean over trees of the leaf positive-class weight fraction.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64, ModelError> {
        if x.dim != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: x.dim,
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

/// Column-major dense copy of the training matrix.
struct Columns {
    n_rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn new(x: &CsrMatrix) -> Self {
        let mut data = vec![0.0; x.n_rows * x.n_cols];
        for i in 0..x.n_rows {
            let (idx, vals) = x.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                data[j * x.n_rows + i] = v;
            }
        }
        Self { n_rows: x.n_rows, data }
    }

    fn get(&self, feature: usize, row: usize) -> f64 {
        self.data[feature * self.n_rows + row]
    }
}

struct Builder<'a> {
    cols: &'a Columns,
    y: &'a [u8],
    n_features: usize,
    max_features: usize,
    criterion: Criterion,
    rng: Rng,
    /// Feature permutation reused across nodes for partial shuffles.
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

const GAIN_EPS: f64 = 1e-12;

impl Builder<'_> {
    fn totals(&self, samples: &[(usize, f64)]) -> [f64; 2] {
        let mut t = [0.0; 2];
        for &(i, w) in samples {
            t[usize::from(self.y[i])] += w;
        }
        t
    }

    fn build(&mut self, samples: Vec<(usize, f64)>) -> usize {
        let totals = self.totals(&samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weights: totals,
            n_samples: samples.len(),
        });
        if samples.len() < 2 || totals[0] <= 0.0 || totals[1] <= 0.0 {
            return id;
        }
        let Some(best) = self.find_split(&samples, totals) else {
            return id;
        };
        let (left, right): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|&(i, _)| self.cols.get(best.feature, i) <= best.threshold);
        let l = self.build(left);
        let r = self.build(right);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Tries random features until `max_features` non-constant ones have
    /// been examined (or all features are exhausted).
    fn find_split(&mut self, samples: &[(usize, f64)], totals: [f64; 2]) -> Option<BestSplit> {
        let parent = (totals[0] + totals[1]) * self.criterion.impurity(totals);
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut values: Vec<(f64, usize, f64)> = Vec::with_capacity(samples.len());
        for k in 0..self.n_features {
            if visited >= self.max_features {
                break;
            }
            let j = self.rng.random_range(k..self.n_features);
            self.perm.swap(k, j);
            let f = self.perm[k];
            values.clear();
            values.extend(samples.iter().map(|&(i, w)| (self.cols.get(f, i), i, w)));
            let first = values[0].0;
            if values.iter().all(|v| v.0 == first) {
                continue;
            }
            visited += 1;
            values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = [0.0; 2];
            for p in 0..values.len() - 1 {
                let (v, i, w) = values[p];
                left[usize::from(self.y[i])] += w;
                let next = values[p + 1].0;
                if v == next {
                    continue;
                }
                let right = [totals[0] - left[0], totals[1] - left[1]];
                let gain = parent
                    - (left[0] + left[1]) * self.criterion.impurity(left)
                    - (right[0] + right[1]).max(0.0) * self.criterion.impurity([right[0].max(0.0), right[1].max(0.0)]);
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                let better = match &best {
                    None => true,
                    Some(b) => {
                        gain > b.gain + GAIN_EPS
                            || ((gain - b.gain).abs() <= GAIN_EPS
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

fn fit_tree(
    cols: &Columns,
    y: &[u8],
    n_features: usize,
    params: &ForestParams,
    max_features: usize,
    seed: u64,
) -> Tree {
    let n = y.len();
    let mut rng = seeded(seed);
    let mut counts = vec![0usize; n];
    if params.bootstrap {
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
    } else {
        counts.fill(1);
    }
    let cw = match params.class_weight {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => class_weights(y, ClassWeight::Balanced),
        ClassWeight::BalancedSubsample => {
            let drawn: Vec<u8> = counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(y[i], c))
                .collect();
            class_weights(&drawn, ClassWeight::Balanced)
        }
    };
    let samples: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c as f64 * cw[usize::from(y[i])]))
        .collect();
    let mut builder = Builder {
        cols,
        y,
        n_features,
        max_features,
        criterion: params.criterion,
        rng,
        perm: (0..n_features).collect(),
        nodes: Vec::new(),
    };
    builder.build(samples);
    Tree { nodes: builder.nodes }
}

/// Fits `n_estimators` trees in parallel; tree `t` uses a seed derived from
/// `(seed, t)`, so the result does not depend on scheduling.
pub fn train_random_forest(x: &CsrMatrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<Forest, ModelError> {
    validate_xy(x, y)?;
    if params.n_estimators == 0 {
        return Err(ModelError::InvalidParam("n_estimators must be at least 1".into()));
    }
    if x.n_cols == 0 {
        return Err(ModelError::InvalidParam("no features".into()));
    }
    let max_features = params
        .max_features
        .unwrap_or_else(|| (x.n_cols as f64).sqrt().ceil() as usize)
        .clamp(1, x.n_cols);
    let cols = Columns::new(x);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| fit_tree(&cols, y, x.n_cols, params, max_features, derive_seed(seed, t as u64)))
        .collect();
    Ok(Forest {
        trees,
        n_features: x.n_cols,
        params: params.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> CsrMatrix {
        CsrMatrix::from_dense_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn impurity_formulas() {
        assert_eq!(gini([2.0, 2.0]), 0.5);
        assert_eq!(entropy([2.0, 2.0]), 1.0);
        assert_eq!(gini([3.0, 0.0]), 0.0);
        assert_eq!(entropy([0.0, 5.0]), 0.0);
    }

    #[test]
    fn single_tree_fits_pure_split() {
        let x = col(&[0.1, 0.2, 0.3, 0.7, 0.8, 0.9]);
        let y = [0, 0, 0, 1, 1, 1];
        let params = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            class_weight: ClassWeight::None,
            ..Default::default()
        };
        let f = train_random_forest(&x, &y, &params, 0).unwrap();
        for (i, &label) in y.iter().enumerate() {
            let p = f.predict_proba(&x.row_vector(i)).unwrap();
            assert_eq!(u8::from(p >= 0.5), label);
        }
        match &f.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_tree_average() {
        let leaf = |w0: f64, w1: f64| Tree {
            nodes: vec![Node::Leaf { weights: [w0, w1], n_samples: 1 }],
        };
        let f = Forest {
            trees: vec![leaf(0.0, 3.0), leaf(2.0, 0.0)],
            n_features: 1,
            params: ForestParams::default(),
            seed: 0,
        };
        assert_eq!(f.predict_proba(&SparseVector::from_dense(&[1.0])).unwrap(), 0.5);
        assert!(f.predict_proba(&SparseVector::from_dense(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn ties_pick_lowest_feature() {
        // two identical columns: the split must use feature 0
        let rows: Vec<Vec<f64>> = [0.0, 0.0, 1.0, 1.0].iter().map(|&v| vec![v, v]).collect();
        let x = CsrMatrix::from_dense_rows(&rows);
        let params = ForestParams {
            n_estimators: 8,
            bootstrap: false,
            max_features: Some(2),
            class_weight: ClassWeight::None,
            ..Default::default()
        };
        let f = train_random_forest(&x, &[0, 0, 1, 1], &params, 3).unwrap();
        for t in &f.trees {
            assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
        }
    }

    #[test]
    fn deterministic_and_leaves_nonempty() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos(), f64::from(i % 3)])
            .collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from((i as f64 * 0.7).sin() + (i as f64 * 1.3).cos() > 0.3)).collect();
        let x = CsrMatrix::from_dense_rows(&rows);
        let params = ForestParams { n_estimators: 20, criterion: Criterion::Entropy, ..Default::default() };
        let a = train_random_forest(&x, &y, &params, 11).unwrap();
        let b = train_random_forest(&x, &y, &params, 11).unwrap();
        assert_eq!(a, b);
        for t in &a.trees {
            for leaf in t.leaves() {
                match leaf {
                    Node::Leaf { n_samples, weights } => {
                        assert!(*n_samples >= 1);
                        assert!(weights[0] + weights[1] > 0.0);
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
}
