//! Minimal sparse/dense linear algebra used by the feature extractors and models.

use serde::{Deserialize, Serialize};

/// Sorted `(index, value)` pairs of a vector of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from unsorted pairs, summing duplicates and dropping zeros.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            debug_assert!(i < dim);
            if indices.last() == Some(&i) {
                *values.last_mut().expect("parallel vecs") += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|(_, v)| *v != 0.0)
            .unzip();
        Self { dim, indices, values }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(n_cols: usize, rows: &[SparseVector]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            debug_assert_eq!(r.dim, n_cols);
            indices.extend_from_slice(&r.indices);
            values.extend_from_slice(&r.values);
            indptr.push(indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse: Vec<SparseVector> = rows
            .iter()
            .map(|r| SparseVector::from_dense(r))
            .collect();
        Self::from_rows(n_cols, &sparse)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_vector(&self, i: usize) -> SparseVector {
        let (idx, val) = self.row(i);
        SparseVector {
            dim: self.n_cols,
            indices: idx.to_vec(),
            values: val.to_vec(),
        }
    }

    pub fn row_dot(&self, i: usize, dense: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * dense[j]).sum()
    }

    /// `out += alpha * row_i`
    pub fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] += alpha * v;
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let picked: Vec<SparseVector> = rows.iter().map(|&r| self.row_vector(r)).collect();
        Self::from_rows(self.n_cols, &picked)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `self · b` where `b` is `n_cols × k`.
    pub fn mul_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, b.rows);
        let mut out = DenseMatrix::zeros(self.n_rows, b.cols);
        for i in 0..self.n_rows {
            let (idx, val) = self.row(i);
            let dst = out.row_mut(i);
            for (&j, &v) in idx.iter().zip(val) {
                for (d, s) in dst.iter_mut().zip(b.row(j)) {
                    *d += v * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · b` where `b` is `n_rows × k`.
    pub fn tmul_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_rows, b.rows);
        let mut out = DenseMatrix::zeros(self.n_cols, b.cols);
        for i in 0..self.n_rows {
            let (idx, val) = self.row(i);
            let src = b.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                for (d, s) in out.row_mut(j).iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let (src, dst) = (other.row(k), i * other.cols);
                for (j, s) in src.iter().enumerate() {
                    out.data[dst + j] += a * s;
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators so the loop vectorizes
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Column-major copy of `m`'s columns.
fn columns(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.cols).map(|j| m.column(j)).collect()
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Orthonormal basis for the column space of `m` (same shape), by
/// Gram-Schmidt applied twice. Numerically dependent columns are replaced by
/// coordinate vectors orthogonal to the previous ones.
pub fn orthonormalize(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows;
    let mut cols = columns(m);
    let scale = cols.iter().map(|c| norm(c)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let p = dot(q, v);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= p * qi);
            }
        }
        let mut nv = norm(v);
        if nv <= 1e-13 * scale {
            // try a few fixed pseudo-random directions before scanning
            // coordinate vectors, which costs O(n) projections per candidate
            let randoms = (0..4u64).map(|t| fill_pseudo_random(n, (j as u64) << 8 | t));
            let coords = (0..n).map(|e| {
                let mut c = vec![0.0; n];
                c[e] = 1.0;
                c
            });
            for mut cand in randoms.chain(coords) {
                for _ in 0..2 {
                    for q in done.iter() {
                        let p = dot(q, &cand);
                        cand.iter_mut().zip(q).for_each(|(x, qi)| *x -= p * qi);
                    }
                }
                let nc = norm(&cand);
                if nc > 0.5 {
                    *v = cand;
                    nv = nc;
                    break;
                }
            }
        }
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
        }
    }
    from_columns(n, &cols)
}

/// Unit-norm vector from a splitmix64 stream; only used as a deterministic
/// completion direction.
fn fill_pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Singular value decomposition of a small square or tall matrix by one-sided
/// Jacobi rotations. Returns `(u, sigma)` with `m = u · diag(sigma) · vᵀ`,
/// sigma sorted descending and `u` having orthonormal columns.
pub fn jacobi_left_svd(m: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let rows = m.rows;
    let mut cols = columns(m);
    let k = cols.len();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (a, b) = (&mut left[p], &mut right[0]);
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = cols.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let sigma: Vec<f64> = order.iter().map(|o| o.0).collect();
    let top = sigma.first().copied().unwrap_or(0.0);
    let u_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&(s, j)| {
            if s > 1e-14 * top && s > 0.0 {
                cols[j].iter().map(|x| x / s).collect()
            } else {
                vec![0.0; rows]
            }
        })
        .collect();
    // null directions get an orthonormal completion
    let u = orthonormalize(&from_columns(rows, &u_cols));
    (u, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sparse_vector_from_pairs_merges_and_sorts() {
        let v = SparseVector::from_pairs(5, vec![(3, 1.0), (0, 2.0), (3, 1.0), (1, 0.0)]);
        assert_eq!(v.indices, vec![0, 3]);
        assert_eq!(v.values, vec![2.0, 2.0]);
        assert_eq!(v.to_dense(), vec![2.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn csr_products_match_dense() {
        let rows = vec![vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]];
        let a = CsrMatrix::from_dense_rows(&rows);
        let b = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let dense = a.to_dense();
        assert_eq!(a.mul_dense(&b), dense.matmul(&b));
        let c = DenseMatrix::from_fn(2, 2, |i, j| (i * 3 + j) as f64 + 1.0);
        assert_eq!(a.tmul_dense(&c), dense.transpose().matmul(&c));
        assert_eq!(a.row_dot(0, &[1.0, 1.0, 1.0]), 3.0);
    }

    #[test]
    fn orthonormalize_handles_dependent_columns() {
        let m = DenseMatrix::from_fn(4, 3, |i, _| i as f64 + 1.0);
        let q = orthonormalize(&m);
        let qtq = q.transpose().matmul(&q);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(qtq[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = DenseMatrix::from_fn(3, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let (u, s) = jacobi_left_svd(&m);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        // uᵀ m has orthogonal rows with norms sigma
        let utm = u.transpose().matmul(&m);
        for (i, &si) in s.iter().enumerate() {
            assert_abs_diff_eq!(norm(utm.row(i)), si, epsilon = 1e-10);
        }
    }
}
