//! All-ranking evaluation: top-k selection with training items masked out,
//! HR@k, NDCG@k and PSP@k, and random-interaction noise for robustness runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use faer::MatRef;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Scorer;
use crate::sparse::InteractionMatrix;

/// Top-k list of one user: `(item, score)` pairs, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedUser {
    pub user: usize,
    pub items: Vec<(usize, f64)>,
    /// Fewer than `k` unmasked items were available.
    pub short: bool,
}

impl RankedUser {
    pub fn item_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|&(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKRanking {
    pub k: usize,
    pub users: Vec<RankedUser>,
}

/// Orders by descending score, then ascending item id. NaN ranks last.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    let key = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    key(b.1).total_cmp(&key(a.1)).then(a.0.cmp(&b.0))
}

/// Ranks each row of `scores` (row `b` belongs to `users[b]`), skipping the
/// items `mask` holds for that user.
pub fn rank_top_k(
    scores: MatRef<'_, f64>,
    users: &[usize],
    mask: &InteractionMatrix,
    k: usize,
) -> Result<TopKRanking> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if scores.nrows() != users.len() || scores.ncols() != mask.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "scores are {}x{} for {} users over {} items",
            scores.nrows(),
            scores.ncols(),
            users.len(),
            mask.num_items()
        )));
    }
    let mut out = Vec::with_capacity(users.len());
    let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(mask.num_items());
    for (b, &u) in users.iter().enumerate() {
        if u >= mask.num_users() {
            return Err(Error::IndexOutOfRange { index: u, len: mask.num_users(), what: "users" });
        }
        let masked = mask.row(u);
        candidates.clear();
        let mut next = 0;
        for i in 0..mask.num_items() {
            if masked.get(next) == Some(&i) {
                next += 1;
                continue;
            }
            candidates.push((i, scores[(b, i)]));
        }
        let take = k.min(candidates.len());
        if take > 0 && take < candidates.len() {
            candidates.select_nth_unstable_by(take - 1, rank_order);
        }
        let mut items = candidates[..take].to_vec();
        items.sort_unstable_by(rank_order);
        out.push(RankedUser { user: u, items, short: take < k });
    }
    Ok(TopKRanking { k, users: out })
}

/// Denominator used by HR@k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HrMode {
    /// `|hits| / min(k, |test|)`.
    #[default]
    Truncated,
    /// `|hits| / |test|`.
    Recall,
}

fn hits_at<'a>(ranked: &'a [usize], test: &'a [usize], k: usize) -> impl Iterator<Item = (usize, usize)> + 'a {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(p, &i)| (p, i))
}

/// Per-user hit ratio; `None` when `test` (sorted) is empty.
pub fn hr_user(ranked: &[usize], test: &[usize], k: usize, mode: HrMode) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let hits = hits_at(ranked, test, k).count() as f64;
    let denom = match mode {
        HrMode::Truncated => k.min(test.len()),
        HrMode::Recall => test.len(),
    };
    Some(hits / denom as f64)
}

/// Per-user binary-relevance NDCG with `1 / log2(position + 1)` discounts.
pub fn ndcg_user(ranked: &[usize], test: &[usize], k: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let dcg: f64 = hits_at(ranked, test, k).map(|(p, _)| 1.0 / ((p + 2) as f64).log2()).sum();
    let idcg: f64 = (0..k.min(test.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Some(dcg / idcg)
}

/// Per-user propensity-scored precision, normalized by the best achievable
/// value for this test set: the `min(k, |test|)` largest inverse propensities.
pub fn psp_user(ranked: &[usize], test: &[usize], inverse_propensity: &[f64], k: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let gained: f64 = hits_at(ranked, test, k).map(|(_, i)| inverse_propensity[i]).sum();
    let mut weights: Vec<f64> = test.iter().map(|&i| inverse_propensity[i]).collect();
    weights.sort_unstable_by(|a, b| b.total_cmp(a));
    let best: f64 = weights.iter().take(k).sum();
    Some(if best > 0.0 { gained / best } else { 0.0 })
}

/// Constants of the inverse-propensity model
/// `1 / p_i = 1 + C (f_i + B)^(-A)` with `C = (ln N - 1)(B + 1)^A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityParams {
    pub a: f64,
    pub b: f64,
    /// Overrides the derived `C` when set.
    pub c: Option<f64>,
}

impl Default for PropensityParams {
    fn default() -> Self {
        Self { a: 0.55, b: 1.5, c: None }
    }
}

impl PropensityParams {
    /// `C` for a dataset with `num_users` users. `ln N - 1` is floored at 0
    /// so tiny datasets get uniform propensities instead of negative ones.
    pub fn c_for(&self, num_users: usize) -> f64 {
        self.c.unwrap_or_else(|| {
            let ln_n = (num_users.max(1) as f64).ln();
            (ln_n - 1.0).max(0.0) * (self.b + 1.0).powf(self.a)
        })
    }
}

/// `1 / p_i` for every item, from training frequencies.
pub fn inverse_propensities(train_item_frequencies: &[usize], num_users: usize, params: &PropensityParams) -> Vec<f64> {
    let c = params.c_for(num_users);
    train_item_frequencies
        .iter()
        .map(|&f| 1.0 + c * (-params.a * (f as f64 + params.b).ln()).exp())
        .collect()
}

fn mean_over_users<F>(rankings: &TopKRanking, test: &InteractionMatrix, per_user: F) -> f64
where
    F: Fn(&[usize], &[usize]) -> Option<f64>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in &rankings.users {
        let ids: Vec<usize> = r.item_ids().collect();
        if let Some(v) = per_user(&ids, test.row(r.user)) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean HR@k over ranked users with a non-empty test row.
pub fn hr_at_k(rankings: &TopKRanking, test: &InteractionMatrix, k: usize, mode: HrMode) -> f64 {
    mean_over_users(rankings, test, |ids, t| hr_user(ids, t, k, mode))
}

pub fn ndcg_at_k(rankings: &TopKRanking, test: &InteractionMatrix, k: usize) -> f64 {
    mean_over_users(rankings, test, |ids, t| ndcg_user(ids, t, k))
}

/// Mean PSP@k; propensities come from the training item frequencies.
pub fn psp_at_k(
    rankings: &TopKRanking,
    test: &InteractionMatrix,
    train_item_frequencies: &[usize],
    num_users: usize,
    params: &PropensityParams,
    k: usize,
) -> f64 {
    let inv = inverse_propensities(train_item_frequencies, num_users, params);
    mean_over_users(rankings, test, |ids, t| psp_user(ids, t, &inv, k))
}

/// Descriptive fields attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: String,
    pub rank: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub noise_ratio: Option<f64>,
    pub split: Option<String>,
}

/// Metric values keyed `HR@k`, `NDCG@k`, `PSP@k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub users_evaluated: usize,
    pub users_skipped_empty_test: usize,
    pub users_short_ranking: usize,
    pub hr_mode: HrMode,
    /// How per-user values were reduced.
    pub summation: String,
    pub metadata: ReportMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user: Option<BTreeMap<String, Vec<f64>>>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.get(&format!("HR@{k}"))
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.get(&format!("NDCG@{k}"))
    }

    pub fn psp(&self, k: usize) -> Option<f64> {
        self.get(&format!("PSP@{k}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_list: Vec<usize>,
    pub hr_mode: HrMode,
    pub propensity: PropensityParams,
    pub keep_per_user: bool,
    /// Users scored per batch.
    pub chunk_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_list: vec![10, 100],
            hr_mode: HrMode::Truncated,
            propensity: PropensityParams::default(),
            keep_per_user: false,
            chunk_size: 512,
        }
    }
}

/// Scores every user with a non-empty `test` row, masks `mask` items, and
/// averages all three metrics at every `k` in the config.
///
/// Per-user values are summed sequentially in ascending user order, so the
/// result is independent of `chunk_size`.
pub fn evaluate(
    scorer: &dyn Scorer,
    train: &InteractionMatrix,
    mask: &InteractionMatrix,
    test: &InteractionMatrix,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if config.k_list.is_empty() || config.k_list.contains(&0) {
        return Err(Error::InvalidParameter("k list must be non-empty and positive".into()));
    }
    let shapes = [train.shape(), mask.shape(), test.shape(), (scorer.num_users(), scorer.num_items())];
    if shapes.iter().any(|s| *s != shapes[0]) {
        return Err(Error::DimensionMismatch(format!("evaluation inputs disagree: {shapes:?}")));
    }
    let k_max = *config.k_list.iter().max().unwrap();
    let inv_prop = inverse_propensities(&train.item_frequencies(), train.num_users(), &config.propensity);

    let users: Vec<usize> = (0..test.num_users()).filter(|&u| !test.row(u).is_empty()).collect();
    let skipped = test.num_users() - users.len();

    let names: Vec<(usize, [String; 3])> = config
        .k_list
        .iter()
        .map(|&k| (k, [format!("HR@{k}"), format!("NDCG@{k}"), format!("PSP@{k}")]))
        .collect();
    let mut sums: Vec<[f64; 3]> = vec![[0.0; 3]; names.len()];
    let mut per_user: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut short = 0usize;

    for chunk in users.chunks(config.chunk_size.max(1)) {
        let scores = scorer.score_users(chunk)?;
        let ranking = rank_top_k(scores.as_ref(), chunk, mask, k_max)?;
        for ranked in &ranking.users {
            short += usize::from(ranked.short);
            let ids: Vec<usize> = ranked.item_ids().collect();
            let t = test.row(ranked.user);
            for (slot, (k, keys)) in sums.iter_mut().zip(&names) {
                let vals = [
                    hr_user(&ids, t, *k, config.hr_mode).unwrap_or(0.0),
                    ndcg_user(&ids, t, *k).unwrap_or(0.0),
                    psp_user(&ids, t, &inv_prop, *k).unwrap_or(0.0),
                ];
                for m in 0..3 {
                    slot[m] += vals[m];
                    if config.keep_per_user {
                        per_user.entry(keys[m].clone()).or_default().push(vals[m]);
                    }
                }
            }
        }
    }

    let denom = users.len().max(1) as f64;
    let mut metrics = BTreeMap::new();
    for (slot, (_, keys)) in sums.iter().zip(&names) {
        for m in 0..3 {
            metrics.insert(keys[m].clone(), slot[m] / denom);
        }
    }
    Ok(EvalReport {
        metrics,
        users_evaluated: users.len(),
        users_skipped_empty_test: skipped,
        users_short_ranking: short,
        hr_mode: config.hr_mode,
        summation: "sequential, ascending user id".into(),
        metadata: ReportMetadata::default(),
        per_user: config.keep_per_user.then_some(per_user),
    })
}

/// Amount and seed of random interactions added to a training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// `round(ratio * nnz)`.
pub fn noise_count(nnz: usize, ratio: f64) -> usize {
    (ratio * nnz as f64).round() as usize
}

/// Returns `r` plus exactly `round(ratio * nnz)` new pairs drawn uniformly
/// without replacement from the absent pairs.
pub fn inject_noise(r: &InteractionMatrix, spec: &NoiseSpec) -> Result<InteractionMatrix> {
    inject_noise_excluding(r, None, spec)
}

/// [`inject_noise`], additionally never drawing a pair held in `exclude`
/// (typically the held-out splits). The count is still based on `r.nnz()`.
pub fn inject_noise_excluding(
    r: &InteractionMatrix,
    exclude: Option<&InteractionMatrix>,
    spec: &NoiseSpec,
) -> Result<InteractionMatrix> {
    if let Some(x) = exclude {
        if x.shape() != r.shape() {
            return Err(Error::DimensionMismatch("noise exclusion mask has a different shape".into()));
        }
    }
    if !(spec.ratio >= 0.0 && spec.ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise ratio must be >= 0, got {}", spec.ratio)));
    }
    let requested = noise_count(r.nnz(), spec.ratio);
    if requested == 0 {
        return Ok(r.clone());
    }
    let (users, items) = r.shape();
    let blocked = match exclude {
        Some(x) => r.union(x)?,
        None => r.clone(),
    };
    let available = users * items - blocked.nnz();
    if requested > available {
        return Err(Error::NoiseInfeasible { requested, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let added: Vec<(usize, usize)> = if requested * 2 <= available {
        // Rejection sampling: at least half of all draws are accepted.
        let mut seen = HashSet::with_capacity(requested);
        let mut added = Vec::with_capacity(requested);
        while added.len() < requested {
            let pair = (rng.random_range(0..users), rng.random_range(0..items));
            if !blocked.contains(pair.0, pair.1) && seen.insert(pair) {
                added.push(pair);
            }
        }
        added
    } else {
        let mut absent: Vec<(usize, usize)> = (0..users)
            .flat_map(|u| (0..items).map(move |i| (u, i)))
            .filter(|&(u, i)| !blocked.contains(u, i))
            .collect();
        let (chosen, _) = absent.partial_shuffle(&mut rng, requested);
        chosen.to_vec()
    };
    InteractionMatrix::from_pairs(users, items, r.iter().chain(added))
}
