//! Compressed-row binary interaction matrices, degree normalization and the
//! sparse-times-dense kernels every model is built from.
//!
//! Internal ids are dense and 0-based; remapping external ids is the job of
//! [`crate::io`]. All arithmetic is `f64`.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Read-only view of a matrix in compressed sparse row form.
pub trait CsrMatrix {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn row_offsets(&self) -> &[usize];
    fn col_indices(&self) -> &[usize];
    /// Stored value at position `k` of the index arrays.
    fn value(&self, k: usize) -> f64;

    fn nnz(&self) -> usize {
        self.col_indices().len()
    }
}

/// Binary user-item matrix `R`. Every stored entry is an implicit `1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_users: usize,
    num_items: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl InteractionMatrix {
    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        num_users: usize,
        num_items: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
    ) -> Result<Self> {
        let m = Self { num_users, num_items, row_offsets, col_indices };
        m.check_invariants()?;
        Ok(m)
    }

    /// Builds a matrix from `(user, item)` pairs in any order. Duplicates are
    /// collapsed.
    pub fn from_pairs<I>(num_users: usize, num_items: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_users];
        for (u, i) in pairs {
            if u >= num_users {
                return Err(Error::IndexOutOfRange { index: u, len: num_users, what: "users" });
            }
            if i >= num_items {
                return Err(Error::IndexOutOfRange { index: i, len: num_items, what: "items" });
            }
            rows[u].push(i);
        }
        let mut row_offsets = Vec::with_capacity(num_users + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_indices.extend_from_slice(&row);
            row_offsets.push(col_indices.len());
        }
        Ok(Self { num_users, num_items, row_offsets, col_indices })
    }

    /// A matrix with no stored entries.
    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            row_offsets: vec![0; num_users + 1],
            col_indices: Vec::new(),
        }
    }

    /// `n x n` identity pattern.
    pub fn identity(n: usize) -> Self {
        Self {
            num_users: n,
            num_items: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Sorted item indices of user `u`.
    pub fn row(&self, u: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[u]..self.row_offsets[u + 1]]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        u < self.num_users && self.row(u).binary_search(&i).is_ok()
    }

    /// Iterates stored `(user, item)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users).flat_map(move |u| self.row(u).iter().map(move |&i| (u, i)))
    }

    /// Element-wise union of two matrices with the same shape.
    pub fn union(&self, other: &InteractionMatrix) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "union of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut row_offsets = Vec::with_capacity(self.num_users + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        row_offsets.push(0);
        for u in 0..self.num_users {
            let (a, b) = (self.row(u), other.row(u));
            let (mut x, mut y) = (0, 0);
            while x < a.len() || y < b.len() {
                let next = match (a.get(x), b.get(y)) {
                    (Some(&p), Some(&q)) if p == q => {
                        x += 1;
                        y += 1;
                        p
                    }
                    (Some(&p), Some(&q)) if p < q => {
                        x += 1;
                        p
                    }
                    (Some(_), Some(&q)) => {
                        y += 1;
                        q
                    }
                    (Some(&p), None) => {
                        x += 1;
                        p
                    }
                    (None, Some(&q)) => {
                        y += 1;
                        q
                    }
                    (None, None) => unreachable!(),
                };
                col_indices.push(next);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self { num_users: self.num_users, num_items: self.num_items, row_offsets, col_indices })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_users, self.num_items)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut out = Mat::zeros(self.num_users, self.num_items);
        for (u, i) in self.iter() {
            out[(u, i)] = 1.0;
        }
        out
    }

    /// Per-item interaction counts (the column degrees).
    pub fn item_frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0; self.num_items];
        for &i in &self.col_indices {
            freq[i] += 1;
        }
        freq
    }

    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStructure(msg));
        if self.row_offsets.len() != self.num_users + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.num_users + 1
            ));
        }
        if self.row_offsets[0] != 0 {
            return bad("row_offsets[0] != 0".into());
        }
        if self.row_offsets[self.num_users] != self.col_indices.len() {
            return bad("row_offsets[num_users] != nnz".into());
        }
        if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_offsets decreasing".into());
        }
        for u in 0..self.num_users {
            let row = self.row(u);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {u} not strictly increasing"));
            }
            if let Some(&last) = row.last() {
                if last >= self.num_items {
                    return bad(format!("row {u} has column {last} >= {}", self.num_items));
                }
            }
        }
        Ok(())
    }
}

impl CsrMatrix for InteractionMatrix {
    fn nrows(&self) -> usize {
        self.num_users
    }
    fn ncols(&self) -> usize {
        self.num_items
    }
    fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }
    fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }
    #[inline(always)]
    fn value(&self, _k: usize) -> f64 {
        1.0
    }
}

/// Row and column degrees of an interaction matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeVectors {
    pub user_degrees: Vec<usize>,
    pub item_degrees: Vec<usize>,
}

pub fn compute_degrees(r: &InteractionMatrix) -> DegreeVectors {
    let user_degrees = r.row_offsets.windows(2).map(|w| w[1] - w[0]).collect();
    DegreeVectors { user_degrees, item_degrees: r.item_frequencies() }
}

/// `D_U^{-1/2} R D_I^{-1/2}`: the pattern of `R` with each stored value
/// replaced by `1 / sqrt(d_u * d_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    structure: InteractionMatrix,
    values: Vec<f64>,
}

/// Symmetric degree normalization.
///
/// Zero-degree rows and columns hold no entries, so they stay empty.
///
/// # Panics
///
/// If `degrees` was not computed from a matrix of `r`'s shape.
pub fn normalize(r: &InteractionMatrix, degrees: &DegreeVectors) -> NormalizedMatrix {
    assert_eq!(degrees.user_degrees.len(), r.num_users, "user degree length");
    assert_eq!(degrees.item_degrees.len(), r.num_items, "item degree length");
    let item_scale: Vec<f64> = degrees
        .item_degrees
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut values = Vec::with_capacity(r.nnz());
    for u in 0..r.num_users {
        let du = degrees.user_degrees[u];
        if du == 0 {
            continue;
        }
        let user_scale = 1.0 / (du as f64).sqrt();
        values.extend(r.row(u).iter().map(|&i| user_scale * item_scale[i]));
    }
    NormalizedMatrix { structure: r.clone(), values }
}

impl NormalizedMatrix {
    pub fn from_interactions(r: &InteractionMatrix) -> Self {
        normalize(r, &compute_degrees(r))
    }

    pub fn structure(&self) -> &InteractionMatrix {
        &self.structure
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.structure.shape()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut out = Mat::zeros(self.structure.num_users, self.structure.num_items);
        for (k, (u, i)) in self.structure.iter().enumerate() {
            out[(u, i)] = self.values[k];
        }
        out
    }
}

impl CsrMatrix for NormalizedMatrix {
    fn nrows(&self) -> usize {
        self.structure.num_users
    }
    fn ncols(&self) -> usize {
        self.structure.num_items
    }
    fn row_offsets(&self) -> &[usize] {
        &self.structure.row_offsets
    }
    fn col_indices(&self) -> &[usize] {
        &self.structure.col_indices
    }
    #[inline(always)]
    fn value(&self, k: usize) -> f64 {
        self.values[k]
    }
}

fn to_row_major(x: MatRef<'_, f64>) -> Vec<f64> {
    let (rows, cols) = (x.nrows(), x.ncols());
    let mut buf = vec![0.0; rows * cols];
    for j in 0..cols {
        for (i, &v) in x.col(j).iter().enumerate() {
            buf[i * cols + j] = v;
        }
    }
    buf
}

fn from_row_major(rows: usize, cols: usize, buf: &[f64]) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| buf[i * cols + j])
}

#[inline(always)]
fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `M * X` for sparse `M` and dense `X`.
///
/// Accumulation order is fixed (row by row, stored order within a row), so
/// results are bitwise reproducible.
pub fn sparse_times_dense<M: CsrMatrix + ?Sized>(m: &M, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if m.ncols() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sparse {}x{} times dense {}x{}",
            m.nrows(),
            m.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    let c = x.ncols();
    let xb = to_row_major(x);
    let mut out = vec![0.0; m.nrows() * c];
    let (offsets, cols) = (m.row_offsets(), m.col_indices());
    for (u, out_row) in out.chunks_exact_mut(c.max(1)).enumerate().take(m.nrows()) {
        for k in offsets[u]..offsets[u + 1] {
            let j = cols[k];
            axpy(out_row, m.value(k), &xb[j * c..(j + 1) * c]);
        }
    }
    Ok(from_row_major(m.nrows(), c, &out))
}

/// `Mᵀ * X` for sparse `M` and dense `X`, without forming `Mᵀ`.
pub fn sparse_transpose_times_dense<M: CsrMatrix + ?Sized>(
    m: &M,
    x: MatRef<'_, f64>,
) -> Result<Mat<f64>> {
    if m.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "transposed sparse {}x{} times dense {}x{}",
            m.ncols(),
            m.nrows(),
            x.nrows(),
            x.ncols()
        )));
    }
    let c = x.ncols();
    let xb = to_row_major(x);
    let mut out = vec![0.0; m.ncols() * c];
    let (offsets, cols) = (m.row_offsets(), m.col_indices());
    if c > 0 {
        for u in 0..m.nrows() {
            let x_row = &xb[u * c..(u + 1) * c];
            for k in offsets[u]..offsets[u + 1] {
                let j = cols[k];
                axpy(&mut out[j * c..(j + 1) * c], m.value(k), x_row);
            }
        }
    }
    Ok(from_row_major(m.ncols(), c, &out))
}

/// Squared Frobenius error `sum_{u,i} (R[u,i] - R_hat[u,i])^2` over every
/// entry, observed or not.
pub fn frobenius_mse(r: &InteractionMatrix, r_hat: MatRef<'_, f64>) -> Result<f64> {
    if r_hat.nrows() != r.num_users || r_hat.ncols() != r.num_items {
        return Err(Error::DimensionMismatch(format!(
            "R is {:?}, reconstruction is {}x{}",
            r.shape(),
            r_hat.nrows(),
            r_hat.ncols()
        )));
    }
    frobenius_mse_rows(r, 0, r_hat)
}

/// Same as [`frobenius_mse`] restricted to the users
/// `first_user..first_user + block.nrows()`, so large reconstructions can be
/// streamed in chunks.
pub fn frobenius_mse_rows(
    r: &InteractionMatrix,
    first_user: usize,
    block: MatRef<'_, f64>,
) -> Result<f64> {
    if block.ncols() != r.num_items || first_user + block.nrows() > r.num_users {
        return Err(Error::DimensionMismatch(format!(
            "block of {}x{} at row {first_user} does not fit {:?}",
            block.nrows(),
            block.ncols(),
            r.shape()
        )));
    }
    let mut total = 0.0;
    for b in 0..block.nrows() {
        let row = r.row(first_user + b);
        let mut next = 0;
        for i in 0..r.num_items {
            let target = if row.get(next) == Some(&i) {
                next += 1;
                1.0
            } else {
                0.0
            };
            let d = target - block[(b, i)];
            total += d * d;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> InteractionMatrix {
        InteractionMatrix::from_pairs(3, 3, [(0, 0), (0, 1), (1, 0), (1, 2), (2, 1), (2, 2)])
            .unwrap()
    }

    fn all_ones(rows: usize, cols: usize) -> InteractionMatrix {
        InteractionMatrix::from_pairs(rows, cols, (0..rows).flat_map(|u| (0..cols).map(move |i| (u, i))))
            .unwrap()
    }

    #[test]
    fn degrees_of_small_cases() {
        let d = compute_degrees(&InteractionMatrix::identity(3));
        assert_eq!(d.user_degrees, vec![1, 1, 1]);
        assert_eq!(d.item_degrees, vec![1, 1, 1]);

        let d = compute_degrees(&triangle());
        assert_eq!(d.user_degrees, vec![2, 2, 2]);
        assert_eq!(d.item_degrees, vec![2, 2, 2]);

        let d = compute_degrees(&all_ones(2, 3));
        assert_eq!(d.user_degrees, vec![3, 3]);
        assert_eq!(d.item_degrees, vec![2, 2, 2]);

        let d = compute_degrees(&InteractionMatrix::empty(2, 4));
        assert_eq!(d.user_degrees, vec![0, 0]);
        assert_eq!(d.item_degrees, vec![0; 4]);
    }

    #[test]
    fn normalized_values() {
        let n = NormalizedMatrix::from_interactions(&InteractionMatrix::identity(4));
        assert!(n.values().iter().all(|&v| v == 1.0));

        let n = NormalizedMatrix::from_interactions(&all_ones(2, 3));
        let expected = 1.0 / 6f64.sqrt();
        assert!(n.values().iter().all(|&v| (v - expected).abs() < 1e-15));

        let n = NormalizedMatrix::from_interactions(&triangle());
        assert!(n.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn pairs_are_sorted_and_deduplicated() {
        let m = InteractionMatrix::from_pairs(2, 4, [(1, 3), (0, 2), (1, 0), (0, 2), (1, 3)]).unwrap();
        assert_eq!(m.row(0), &[2]);
        assert_eq!(m.row(1), &[0, 3]);
        assert_eq!(m.nnz(), 3);
        assert!(m.contains(1, 3));
        assert!(!m.contains(0, 3));
        assert!(matches!(
            InteractionMatrix::from_pairs(2, 4, [(2, 0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn csr_validation_rejects_bad_structure() {
        assert!(InteractionMatrix::from_csr(2, 3, vec![0, 2, 3], vec![0, 2, 1]).is_ok());
        assert!(InteractionMatrix::from_csr(2, 3, vec![0, 2, 3], vec![2, 0, 1]).is_err());
        assert!(InteractionMatrix::from_csr(2, 3, vec![0, 2, 3], vec![0, 0, 1]).is_err());
        assert!(InteractionMatrix::from_csr(2, 3, vec![0, 2, 3], vec![0, 3, 1]).is_err());
        assert!(InteractionMatrix::from_csr(2, 3, vec![1, 2, 3], vec![0, 1, 1]).is_err());
        assert!(InteractionMatrix::from_csr(2, 3, vec![0, 2], vec![0, 1]).is_err());
    }

    #[test]
    fn union_merges_rows() {
        let a = InteractionMatrix::from_pairs(2, 5, [(0, 1), (0, 3), (1, 4)]).unwrap();
        let b = InteractionMatrix::from_pairs(2, 5, [(0, 0), (0, 3), (1, 2)]).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.row(0), &[0, 1, 3]);
        assert_eq!(u.row(1), &[2, 4]);
        u.check_invariants().unwrap();
        assert!(a.union(&InteractionMatrix::empty(3, 5)).is_err());
    }

    #[test]
    fn identity_and_empty_products() {
        let x = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 2.5);
        let id = NormalizedMatrix::from_interactions(&InteractionMatrix::identity(4));
        assert_eq!(sparse_times_dense(&id, x.as_ref()).unwrap(), x);
        assert_eq!(sparse_transpose_times_dense(&id, x.as_ref()).unwrap(), x);

        let empty = InteractionMatrix::empty(5, 4);
        let y = sparse_times_dense(&empty, x.as_ref()).unwrap();
        assert_eq!(y, Mat::<f64>::zeros(5, 3));

        assert!(sparse_times_dense(&empty, Mat::<f64>::zeros(3, 2).as_ref()).is_err());
        assert!(sparse_transpose_times_dense(&empty, Mat::<f64>::zeros(4, 2).as_ref()).is_err());
    }

    #[test]
    fn mse_trivial_cases() {
        let r = triangle();
        assert_eq!(frobenius_mse(&r, r.to_dense().as_ref()).unwrap(), 0.0);
        assert_eq!(frobenius_mse(&r, Mat::<f64>::zeros(3, 3).as_ref()).unwrap(), 6.0);
        assert!(frobenius_mse(&r, Mat::<f64>::zeros(3, 2).as_ref()).is_err());
    }
}
