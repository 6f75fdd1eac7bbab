//! Truncated SVD of the normalized interaction matrix.
//!
//! [`randomized_truncated_svd`] is a Gaussian range finder with subspace
//! (power) iterations followed by an exact SVD of the small projected
//! matrix. [`exact_svd`] is a dense oracle for small matrices, used by the
//! property tests and by the exact-factor mode of the model fits.

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{sparse_times_dense, sparse_transpose_times_dense, CsrMatrix};

/// Identifies how the random test matrix is drawn, so a seed reproduces the
/// same factors across builds: ChaCha8 seeded with `seed_from_u64`, standard
/// normal samples filled column by column.
pub const TEST_MATRIX_ALGORITHM: &str = "chacha8/standard-normal/column-major";

/// Singular values below `INVERSION_FLOOR * sigma_1` get a zero reciprocal.
pub const INVERSION_FLOOR: f64 = 1e-12;

/// Largest minimum dimension [`exact_svd`] accepts.
pub const EXACT_SVD_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvdParams {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdParams {
    fn default() -> Self {
        Self { oversample: 10, power_iters: 4, seed: 0 }
    }
}

/// Anything that carries a descending singular spectrum.
pub trait Spectrum {
    fn singular_values(&self) -> &[f64];
}

/// Top-`m` factors `Q`, `sigma`, `V` with `M ≈ Q diag(sigma) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFactorization {
    q: Mat<f64>,
    sigma: Vec<f64>,
    v: Mat<f64>,
}

impl TruncatedFactorization {
    pub fn new(q: Mat<f64>, sigma: Vec<f64>, v: Mat<f64>) -> Result<Self> {
        if q.ncols() != sigma.len() || v.ncols() != sigma.len() {
            return Err(Error::DimensionMismatch(format!(
                "Q has {} columns, V has {}, sigma has {}",
                q.ncols(),
                v.ncols(),
                sigma.len()
            )));
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) || sigma.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidParameter("singular values must be non-negative and descending".into()));
        }
        Ok(Self { q, sigma, v })
    }

    /// Left singular vectors, `|U| x m`.
    pub fn q(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Right singular vectors, `|I| x m`.
    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `m` triplets.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.rank() {
            return Err(Error::RankOutOfRange { rank: m, max: self.rank() });
        }
        Ok(Self {
            q: self.q.subcols(0, m).to_owned(),
            sigma: self.sigma[..m].to_vec(),
            v: self.v.subcols(0, m).to_owned(),
        })
    }

    /// Reciprocal singular values with the [`INVERSION_FLOOR`] applied.
    pub fn inverted_sigma(&self) -> Vec<f64> {
        invert_with_floor(&self.sigma)
    }

    /// Dense `Q diag(sigma) Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let scaled = scale_columns(self.q.as_ref(), &self.sigma);
        scaled * self.v.transpose()
    }
}

impl Spectrum for TruncatedFactorization {
    fn singular_values(&self) -> &[f64] {
        &self.sigma
    }
}

pub(crate) fn invert_with_floor(sigma: &[f64]) -> Vec<f64> {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma
        .iter()
        .map(|&s| if top > 0.0 && s >= INVERSION_FLOOR * top { 1.0 / s } else { 0.0 })
        .collect()
}

pub(crate) fn scale_columns(x: MatRef<'_, f64>, scale: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * scale[j])
}

fn orthonormal_basis(y: MatRef<'_, f64>) -> Mat<f64> {
    y.qr().compute_thin_Q()
}

/// Flips each singular pair so the largest-magnitude entry of the left
/// vector is positive (first occurrence wins on ties).
fn fix_signs(left: &mut Mat<f64>, right: &mut Mat<f64>) {
    for j in 0..left.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in left.col(j).iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            left.col_mut(j).iter_mut().for_each(|x| *x = -*x);
            right.col_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn gaussian_test_matrix(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0f64; rows * cols];
    for x in buf.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    Mat::from_fn(rows, cols, |i, j| buf[j * rows + i])
}

/// Randomized truncated SVD of a sparse matrix.
///
/// Samples `m + oversample` Gaussian directions, runs `power_iters` rounds of
/// re-orthonormalized subspace iteration, and solves the projected problem
/// exactly. Deterministic for a fixed seed.
pub fn randomized_truncated_svd<M: CsrMatrix + ?Sized>(
    matrix: &M,
    m: usize,
    params: &RsvdParams,
) -> Result<TruncatedFactorization> {
    let (rows, cols) = (matrix.nrows(), matrix.ncols());
    let max_rank = rows.min(cols);
    if m == 0 || m > max_rank {
        return Err(Error::RankOutOfRange { rank: m, max: max_rank });
    }
    let samples = (m + params.oversample).min(max_rank);

    let omega = gaussian_test_matrix(cols, samples, params.seed);
    let mut basis = orthonormal_basis(sparse_times_dense(matrix, omega.as_ref())?.as_ref());
    for _ in 0..params.power_iters {
        let z = orthonormal_basis(sparse_transpose_times_dense(matrix, basis.as_ref())?.as_ref());
        basis = orthonormal_basis(sparse_times_dense(matrix, z.as_ref())?.as_ref());
    }

    // Bᵀ = Mᵀ Q is |I| x l; its SVD U S Wᵀ gives B = W S Uᵀ.
    let bt = sparse_transpose_times_dense(matrix, basis.as_ref())?;
    let svd = bt
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("projected SVD failed: {e:?}")))?;
    let mut left = basis * svd.V().subcols(0, m);
    let mut right = svd.U().subcols(0, m).to_owned();
    let sigma: Vec<f64> = svd.S().column_vector().iter().take(m).copied().collect();
    fix_signs(&mut left, &mut right);
    TruncatedFactorization::new(left, sigma, right)
}

/// Full (thin) dense SVD `M = U diag(sigma) Vᵀ`, `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct ExactSvd {
    pub u: Mat<f64>,
    pub sigma: Vec<f64>,
    pub v: Mat<f64>,
}

/// Dense SVD oracle, capped at [`EXACT_SVD_CAP`] on the smaller dimension.
pub fn exact_svd(m: MatRef<'_, f64>) -> Result<ExactSvd> {
    let k = m.nrows().min(m.ncols());
    if k > EXACT_SVD_CAP {
        return Err(Error::OracleCapExceeded { cap: EXACT_SVD_CAP, got: k });
    }
    if k == 0 {
        return Err(Error::Empty("matrix has a zero dimension".into()));
    }
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("dense SVD failed: {e:?}")))?;
    let mut u = svd.U().to_owned();
    let mut v = svd.V().to_owned();
    let sigma = svd.S().column_vector().iter().copied().collect();
    fix_signs(&mut u, &mut v);
    Ok(ExactSvd { u, sigma, v })
}

impl ExactSvd {
    pub fn truncate(&self, m: usize) -> Result<TruncatedFactorization> {
        if m == 0 || m > self.sigma.len() {
            return Err(Error::RankOutOfRange { rank: m, max: self.sigma.len() });
        }
        TruncatedFactorization::new(
            self.u.subcols(0, m).to_owned(),
            self.sigma[..m].to_vec(),
            self.v.subcols(0, m).to_owned(),
        )
    }

    pub fn reconstruct(&self) -> Mat<f64> {
        scale_columns(self.u.as_ref(), &self.sigma) * self.v.transpose()
    }

    /// Dense Moore-Penrose pseudo-inverse `V diag(sigma⁺) Uᵀ`.
    pub fn pseudo_inverse(&self) -> Mat<f64> {
        let inv = invert_with_floor(&self.sigma);
        scale_columns(self.v.as_ref(), &inv) * self.u.transpose()
    }

    /// Number of singular values above the inversion floor.
    pub fn numerical_rank(&self) -> usize {
        invert_with_floor(&self.sigma).iter().filter(|&&x| x > 0.0).count()
    }
}

impl Spectrum for ExactSvd {
    fn singular_values(&self) -> &[f64] {
        &self.sigma
    }
}

/// `V diag(sigma⁺) Qᵀ X`: the truncated pseudo-inverse applied to `X`.
pub fn pseudo_inverse_apply(f: &TruncatedFactorization, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if x.nrows() != f.q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "pseudo-inverse expects {} rows, got {}",
            f.q.nrows(),
            x.nrows()
        )));
    }
    let projected = f.q.transpose() * x;
    let inv = f.inverted_sigma();
    let scaled = Mat::from_fn(projected.nrows(), projected.ncols(), |i, j| projected[(i, j)] * inv[i]);
    Ok(&f.v * scaled)
}
