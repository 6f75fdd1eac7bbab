//! Closed-form scorers.
//!
//! SVD-AE reconstructs `R̂ = R̃ V Σ⁺ Qᵀ R` from the top-`m` singular triplets
//! of the normalized matrix `R̃`. It is stored as the two thin factors
//! `R̃ V Σ⁺` (`|U| x m`) and `Qᵀ R` (`m x |I|`); the item-item matrix
//! `B = V Σ⁺ Qᵀ R` is never formed.
//!
//! EASE solves the zero-diagonal ridge regression on the item Gram matrix:
//! with `P = (RᵀR + λI)⁻¹`, `B = I - P diagMat(1 / diag(P))`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rsvd::{
    exact_svd, randomized_truncated_svd, scale_columns, RsvdParams,
    TruncatedFactorization,
};
use crate::sparse::{sparse_times_dense, sparse_transpose_times_dense, InteractionMatrix, NormalizedMatrix};

/// Rank grid searched by the gamma sweep.
pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

/// Regularization grid searched by the EASE sweep.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10000.0];

/// Largest item count EASE will densify and invert.
pub const DEFAULT_EASE_ITEM_CAP: usize = 50_000;

/// Anything that produces dense score rows for a batch of users.
pub trait Scorer {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    /// One row of `num_items` scores per requested user, in request order.
    fn score_users(&self, users: &[usize]) -> Result<Mat<f64>>;
}

impl<T: Scorer + ?Sized> Scorer for &T {
    fn num_users(&self) -> usize {
        (**self).num_users()
    }

    fn num_items(&self) -> usize {
        (**self).num_items()
    }

    fn score_users(&self, users: &[usize]) -> Result<Mat<f64>> {
        (**self).score_users(users)
    }
}

fn check_users(users: &[usize], num_users: usize) -> Result<()> {
    match users.iter().find(|&&u| u >= num_users) {
        Some(&u) => Err(Error::IndexOutOfRange { index: u, len: num_users, what: "users" }),
        None => Ok(()),
    }
}

/// `m = floor(gamma * min(|U|, |I|))`, clamped to at least 1.
pub fn select_rank(num_users: usize, num_items: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let base = num_users.min(num_items);
    // Nudge by a few ulps so that e.g. 0.57 * 100 lands on 57, not 56.
    let raw = (gamma * base as f64 * (1.0 + 4.0 * f64::EPSILON)).floor() as usize;
    Ok(raw.clamp(1, base.max(1)))
}

/// How the truncated factors of `R̃` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvdBackend {
    Randomized(RsvdParams),
    /// Dense SVD oracle; only for matrices within [`crate::rsvd::EXACT_SVD_CAP`].
    Exact,
}

impl Default for SvdBackend {
    fn default() -> Self {
        SvdBackend::Randomized(RsvdParams::default())
    }
}

impl SvdBackend {
    pub fn seed(&self) -> Option<u64> {
        match self {
            SvdBackend::Randomized(p) => Some(p.seed),
            SvdBackend::Exact => None,
        }
    }
}

/// Top-`rank` factors of `normalized` using `backend`.
pub fn factorize(
    normalized: &NormalizedMatrix,
    rank: usize,
    backend: &SvdBackend,
) -> Result<TruncatedFactorization> {
    match backend {
        SvdBackend::Randomized(params) => randomized_truncated_svd(normalized, rank, params),
        SvdBackend::Exact => {
            let (rows, cols) = normalized.shape();
            let max = rows.min(cols);
            if rank == 0 || rank > max {
                return Err(Error::RankOutOfRange { rank, max });
            }
            exact_svd(normalized.to_dense().as_ref())?.truncate(rank)
        }
    }
}

/// Fitted SVD-AE scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdAeModel {
    user_factors: Mat<f64>,
    item_projection: Mat<f64>,
    sigma: Vec<f64>,
    gamma: Option<f64>,
    seed: Option<u64>,
}

impl SvdAeModel {
    /// Assembles the two score factors from a factorization of
    /// `normalized`, the normalized form of `r`.
    pub fn from_factors(
        r: &InteractionMatrix,
        normalized: &NormalizedMatrix,
        factors: &TruncatedFactorization,
    ) -> Result<Self> {
        if normalized.shape() != r.shape() {
            return Err(Error::DimensionMismatch("normalized matrix shape differs from R".into()));
        }
        if factors.q().nrows() != r.num_users() || factors.v().nrows() != r.num_items() {
            return Err(Error::DimensionMismatch(format!(
                "factors are {}x{} / {}x{}, matrix is {:?}",
                factors.q().nrows(),
                factors.rank(),
                factors.v().nrows(),
                factors.rank(),
                r.shape()
            )));
        }
        let rv = sparse_times_dense(normalized, factors.v())?;
        let user_factors = scale_columns(rv.as_ref(), &factors.inverted_sigma());
        let item_projection = sparse_transpose_times_dense(r, factors.q())?.transpose().to_owned();
        Ok(Self {
            user_factors,
            item_projection,
            sigma: factors.sigma().to_vec(),
            gamma: None,
            seed: None,
        })
    }

    /// Rebuilds a model from persisted factors.
    pub fn from_parts(user_factors: Mat<f64>, item_projection: Mat<f64>, sigma: Vec<f64>) -> Result<Self> {
        if user_factors.ncols() != sigma.len() || item_projection.nrows() != sigma.len() {
            return Err(Error::DimensionMismatch(format!(
                "user factors {}x{}, item projection {}x{}, rank {}",
                user_factors.nrows(),
                user_factors.ncols(),
                item_projection.nrows(),
                item_projection.ncols(),
                sigma.len()
            )));
        }
        Ok(Self { user_factors, item_projection, sigma, gamma: None, seed: None })
    }

    pub fn with_gamma(mut self, gamma: Option<f64>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// `R̃ V Σ⁺`, `|U| x m`.
    pub fn user_factors(&self) -> MatRef<'_, f64> {
        self.user_factors.as_ref()
    }

    /// `Qᵀ R`, `m x |I|`.
    pub fn item_projection(&self) -> MatRef<'_, f64> {
        self.item_projection.as_ref()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The full `|U| x |I|` reconstruction. Only sensible for small data.
    pub fn reconstruct(&self) -> Mat<f64> {
        &self.user_factors * &self.item_projection
    }
}

impl Scorer for SvdAeModel {
    fn num_users(&self) -> usize {
        self.user_factors.nrows()
    }

    fn num_items(&self) -> usize {
        self.item_projection.ncols()
    }

    fn score_users(&self, users: &[usize]) -> Result<Mat<f64>> {
        predict_svd_ae(self, users)
    }
}

/// Fits SVD-AE at rank `rank` on the training matrix.
pub fn fit_svd_ae(r: &InteractionMatrix, rank: usize, backend: &SvdBackend) -> Result<SvdAeModel> {
    if r.nnz() == 0 {
        return Err(Error::Empty("training matrix has no interactions".into()));
    }
    let normalized = NormalizedMatrix::from_interactions(r);
    let factors = factorize(&normalized, rank, backend)?;
    Ok(SvdAeModel::from_factors(r, &normalized, &factors)?.with_seed(backend.seed()))
}

/// Score rows `user_factors[u] · item_projection` for each requested user.
pub fn predict_svd_ae(model: &SvdAeModel, users: &[usize]) -> Result<Mat<f64>> {
    check_users(users, model.user_factors.nrows())?;
    let gathered = Mat::from_fn(users.len(), model.rank(), |b, j| model.user_factors[(users[b], j)]);
    Ok(gathered * &model.item_projection)
}

/// Fitted EASE item-item weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EaseModel {
    item_weights: Mat<f64>,
    lambda: f64,
}

impl EaseModel {
    pub fn from_parts(item_weights: Mat<f64>, lambda: f64) -> Result<Self> {
        if item_weights.nrows() != item_weights.ncols() {
            return Err(Error::DimensionMismatch("EASE weights must be square".into()));
        }
        Ok(Self { item_weights, lambda })
    }

    /// `B`, `|I| x |I|`, zero diagonal.
    pub fn item_weights(&self) -> MatRef<'_, f64> {
        self.item_weights.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_items(&self) -> usize {
        self.item_weights.nrows()
    }

    /// Binds the model to the training matrix it scores from.
    pub fn scorer<'a>(&'a self, train: &'a InteractionMatrix) -> Result<EaseScorer<'a>> {
        if train.num_items() != self.num_items() {
            return Err(Error::DimensionMismatch(format!(
                "EASE model has {} items, matrix has {}",
                self.num_items(),
                train.num_items()
            )));
        }
        Ok(EaseScorer { model: self, train })
    }
}

/// Dense item Gram matrix `RᵀR`, accumulated one user row at a time.
pub fn item_gram(r: &InteractionMatrix) -> Mat<f64> {
    let n = r.num_items();
    let mut gram = Mat::<f64>::zeros(n, n);
    for u in 0..r.num_users() {
        let row = r.row(u);
        for (pos, &b) in row.iter().enumerate() {
            let col = gram.col_as_slice_mut(b);
            for &a in &row[pos..] {
                col[a] += 1.0;
            }
        }
    }
    // Only the lower triangle was filled.
    for j in 0..n {
        for i in (j + 1)..n {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    gram
}

/// Fits EASE with the default item cap.
pub fn fit_ease(r: &InteractionMatrix, lambda: f64) -> Result<EaseModel> {
    fit_ease_with_cap(r, lambda, DEFAULT_EASE_ITEM_CAP)
}

pub fn fit_ease_with_cap(r: &InteractionMatrix, lambda: f64, item_cap: usize) -> Result<EaseModel> {
    check_lambda(lambda)?;
    if r.num_items() > item_cap {
        return Err(Error::InversionCapExceeded { items: r.num_items(), cap: item_cap });
    }
    fit_ease_from_gram(item_gram(r), lambda)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")))
    }
}

/// EASE from a precomputed Gram matrix (consumed and overwritten).
pub fn fit_ease_from_gram(mut gram: Mat<f64>, lambda: f64) -> Result<EaseModel> {
    check_lambda(lambda)?;
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::DimensionMismatch("Gram matrix must be square".into()));
    }
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    let mut p = match gram.llt(Side::Lower) {
        Ok(llt) => llt.inverse(),
        Err(_) => gram.partial_piv_lu().inverse(),
    };
    if p.col_iter().any(|c| c.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numerical("regularized Gram matrix is singular".into()));
    }
    for j in 0..n {
        let pivot = p[(j, j)];
        if pivot == 0.0 {
            return Err(Error::Numerical(format!("zero diagonal in inverse at item {j}")));
        }
        let col = p.col_as_slice_mut(j);
        for x in col.iter_mut() {
            *x = -*x / pivot;
        }
        col[j] = 0.0;
    }
    Ok(EaseModel { item_weights: p, lambda })
}

/// Rows `R[u] · B` for each requested user.
pub fn predict_ease(model: &EaseModel, r: &InteractionMatrix, users: &[usize]) -> Result<Mat<f64>> {
    if r.num_items() != model.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "EASE model has {} items, matrix has {}",
            model.num_items(),
            r.num_items()
        )));
    }
    check_users(users, r.num_users())?;
    let n = model.num_items();
    let mut out = Mat::<f64>::zeros(users.len(), n);
    for j in 0..n {
        let col = model.item_weights.col_as_slice(j);
        for (b, &u) in users.iter().enumerate() {
            out[(b, j)] = r.row(u).iter().map(|&i| col[i]).sum();
        }
    }
    Ok(out)
}

/// An [`EaseModel`] paired with its training matrix.
#[derive(Debug, Clone, Copy)]
pub struct EaseScorer<'a> {
    model: &'a EaseModel,
    train: &'a InteractionMatrix,
}

impl Scorer for EaseScorer<'_> {
    fn num_users(&self) -> usize {
        self.train.num_users()
    }

    fn num_items(&self) -> usize {
        self.model.num_items()
    }

    fn score_users(&self, users: &[usize]) -> Result<Mat<f64>> {
        predict_ease(self.model, self.train, users)
    }
}

/// Scores every item by its training frequency, identically for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    num_users: usize,
    frequencies: Vec<f64>,
}

impl PopularityModel {
    pub fn fit(r: &InteractionMatrix) -> Self {
        Self {
            num_users: r.num_users(),
            frequencies: r.item_frequencies().into_iter().map(|f| f as f64).collect(),
        }
    }
}

impl Scorer for PopularityModel {
    fn num_users(&self) -> usize {
        self.num_users
    }

    fn num_items(&self) -> usize {
        self.frequencies.len()
    }

    fn score_users(&self, users: &[usize]) -> Result<Mat<f64>> {
        check_users(users, self.num_users)?;
        Ok(Mat::from_fn(users.len(), self.frequencies.len(), |_, j| self.frequencies[j]))
    }
}
