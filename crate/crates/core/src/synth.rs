//! Synthetic implicit-feedback data from a low-rank latent model.
//!
//! Each user and item gets a Gaussian factor of dimension `rank` plus a
//! Gaussian popularity bias. An entry is present with probability
//! `sigmoid(sharpness * <u, v> / sqrt(rank) + bias_u + bias_i + b)`. Drawing
//! that Bernoulli is the same as thresholding the logit plus standard logistic
//! noise at `-b`, so choosing the threshold as an order statistic picks the
//! offset `b` that yields exactly the requested number of interactions.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DatasetBundle;
use crate::sparse::InteractionMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    /// Total interactions across all splits.
    pub interactions: usize,
    /// Scale of the latent affinity term.
    pub sharpness: f64,
    /// Standard deviation of the item popularity bias.
    pub item_skew: f64,
    /// Standard deviation of the user activity bias.
    pub user_skew: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(num_users: usize, num_items: usize, rank: usize, interactions: usize, seed: u64) -> Self {
        Self {
            num_users,
            num_items,
            rank,
            interactions,
            sharpness: 3.0,
            item_skew: 1.0,
            user_skew: 0.5,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.rank == 0 {
            return Err(Error::InvalidParameter("synthetic dimensions and rank must be positive".into()));
        }
        let cells = self.num_users * self.num_items;
        if self.interactions == 0 || self.interactions > cells {
            return Err(Error::InvalidParameter(format!(
                "cannot place {} interactions in {cells} cells",
                self.interactions
            )));
        }
        let held = self.validation_fraction + self.test_fraction;
        if !(self.validation_fraction >= 0.0 && self.test_fraction >= 0.0 && held < 1.0) {
            return Err(Error::InvalidParameter("held-out fractions must be >= 0 and sum below 1".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for x in m.col_mut(j).iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }
    m
}

/// The full interaction matrix, before splitting.
pub fn synth_matrix(config: &SynthConfig) -> Result<InteractionMatrix> {
    config.validate()?;
    let (nu, ni) = (config.num_users, config.num_items);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let users = gaussian(&mut rng, nu, config.rank);
    let items = gaussian(&mut rng, ni, config.rank);
    let user_bias: Vec<f64> = (0..nu).map(|_| config.user_skew * rng.sample::<f64, _>(StandardNormal)).collect();
    let item_bias: Vec<f64> = (0..ni).map(|_| config.item_skew * rng.sample::<f64, _>(StandardNormal)).collect();
    let scale = config.sharpness / (config.rank as f64).sqrt();

    let affinity = &users * items.transpose();
    let mut keys: Vec<f32> = Vec::with_capacity(nu * ni);
    for u in 0..nu {
        for i in 0..ni {
            let p: f64 = rng.random_range(f64::EPSILON..1.0);
            let noise = (p / (1.0 - p)).ln();
            keys.push((scale * affinity[(u, i)] + user_bias[u] + item_bias[i] + noise) as f32);
        }
    }
    drop(affinity);

    let k = config.interactions;
    let mut sorted = keys.clone();
    let (_, &mut threshold, _) = sorted.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    drop(sorted);
    // Entries strictly above the threshold, then ties in index order.
    let above = keys.iter().filter(|&&x| x > threshold).count();
    let mut ties_left = k - above;
    let mut pairs = Vec::with_capacity(k);
    for (idx, &x) in keys.iter().enumerate() {
        let take = if x > threshold {
            true
        } else if x == threshold && ties_left > 0 {
            ties_left -= 1;
            true
        } else {
            false
        };
        if take {
            pairs.push((idx / ni, idx % ni));
        }
    }
    InteractionMatrix::from_pairs(nu, ni, pairs)
}

/// Splits each user's items at random into train, validation and test.
///
/// Every user with at least one interaction keeps at least one training
/// item; users with three or more also get at least one validation and one
/// test item.
pub fn split_per_user(
    r: &InteractionMatrix,
    validation_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<(InteractionMatrix, InteractionMatrix, InteractionMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut items = Vec::new();
    for u in 0..r.num_users() {
        items.clear();
        items.extend_from_slice(r.row(u));
        items.shuffle(&mut rng);
        let n = items.len();
        let min_held = usize::from(n >= 3);
        let n_test = ((test_fraction * n as f64).round() as usize).max(min_held);
        let n_val = ((validation_fraction * n as f64).round() as usize).max(min_held);
        let (n_test, n_val) = if n_test + n_val >= n { (0, 0) } else { (n_test, n_val) };
        for (pos, &i) in items.iter().enumerate() {
            let dest = if pos < n_test {
                &mut test
            } else if pos < n_test + n_val {
                &mut val
            } else {
                &mut train
            };
            dest.push((u, i));
        }
    }
    let (nu, ni) = r.shape();
    Ok((
        InteractionMatrix::from_pairs(nu, ni, train)?,
        InteractionMatrix::from_pairs(nu, ni, val)?,
        InteractionMatrix::from_pairs(nu, ni, test)?,
    ))
}

/// Generates and splits a synthetic dataset.
pub fn synth_bundle(config: &SynthConfig) -> Result<DatasetBundle> {
    let full = synth_matrix(config)?;
    let (train, val, test) =
        split_per_user(&full, config.validation_fraction, config.test_fraction, config.seed ^ 0x5eed_5eed)?;
    let name = format!(
        "synthetic-{}x{}-rank{}-seed{}",
        config.num_users, config.num_items, config.rank, config.seed
    );
    DatasetBundle::from_matrices(name, train, val, test)
}
