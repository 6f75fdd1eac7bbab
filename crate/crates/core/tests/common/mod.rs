#![allow(dead_code)]

use faer::{Mat, MatRef};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use svdae::models::Scorer;
use svdae::sparse::InteractionMatrix;

/// Bernoulli(`density`) matrix. With `cover`, every empty row and column gets
/// one random entry so all degrees are positive.
pub fn random_binary(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64, cover: bool) -> InteractionMatrix {
    let mut pairs = Vec::new();
    for u in 0..rows {
        for i in 0..cols {
            if rng.random_bool(density) {
                pairs.push((u, i));
            }
        }
    }
    if cover {
        let mut row_hit = vec![false; rows];
        let mut col_hit = vec![false; cols];
        for &(u, i) in &pairs {
            row_hit[u] = true;
            col_hit[i] = true;
        }
        for u in 0..rows {
            if !row_hit[u] {
                pairs.push((u, rng.random_range(0..cols)));
            }
        }
        for i in 0..cols {
            if !col_hit[i] {
                pairs.push((rng.random_range(0..rows), i));
            }
        }
    }
    InteractionMatrix::from_pairs(rows, cols, pairs).unwrap()
}

/// `D_U^{-1/2} R D_I^{-1/2}` computed directly from the dense matrix.
pub fn dense_normalized(r: &InteractionMatrix) -> Mat<f64> {
    let d = r.to_dense();
    let row_deg: Vec<f64> = (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).sum()).collect();
    let col_deg: Vec<f64> = (0..d.ncols()).map(|j| (0..d.nrows()).map(|i| d[(i, j)]).sum()).collect();
    Mat::from_fn(d.nrows(), d.ncols(), |i, j| {
        if d[(i, j)] == 0.0 {
            0.0
        } else {
            1.0 / (row_deg[i].sqrt() * col_deg[j].sqrt())
        }
    })
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Textbook triple loop, independent of any library kernel.
pub fn naive_matmul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.ncols(), b.nrows());
    Mat::from_fn(a.nrows(), b.ncols(), |i, j| (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn fro(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

pub fn fro_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            s += d * d;
        }
    }
    s.sqrt()
}

pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        assert!(a[p][c].abs() > 1e-300, "singular system");
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = ((c + 1)..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

/// Fixed dense score matrix, one row per user.
pub struct DenseScorer(pub Mat<f64>);

impl Scorer for DenseScorer {
    fn num_users(&self) -> usize {
        self.0.nrows()
    }

    fn num_items(&self) -> usize {
        self.0.ncols()
    }

    fn score_users(&self, users: &[usize]) -> svdae::Result<Mat<f64>> {
        Ok(Mat::from_fn(users.len(), self.0.ncols(), |b, j| self.0[(users[b], j)]))
    }
}
