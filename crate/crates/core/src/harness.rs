//! Experiment drivers: rank and regularization sweeps, noise robustness,
//! spectrum export, reconstruction histograms and split timings.
//!
//! Test-split evaluation masks train and validation items; validation-split
//! evaluation masks train items. Model selection only ever reads validation
//! HR@10.

use std::time::Instant;

use faer::{Mat, MatRef};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, inject_noise_excluding, EvalConfig, EvalReport, NoiseSpec, ReportMetadata};
use crate::io::DatasetBundle;
use crate::models::{
    factorize, fit_ease_from_gram, item_gram, select_rank, EaseModel, PopularityModel, Scorer, SvdAeModel,
    SvdBackend, DEFAULT_EASE_ITEM_CAP,
};
use crate::rsvd::Spectrum;
use crate::sparse::{compute_degrees, frobenius_mse_rows, normalize, InteractionMatrix};

/// Noise ratios swept by default. Only the endpoints are fixed by the method;
/// the interior points are a local choice.
pub const DEFAULT_NOISE_RATIOS: [f64; 6] = [0.005, 0.01, 0.02, 0.03, 0.04, 0.05];

/// Users and items sampled for reconstruction histograms.
pub const DEFAULT_SAMPLE_SIZE: usize = 300;

/// Metric used to pick the winning grid point.
pub const SELECTION_METRIC: &str = "HR@10";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    Lambda,
    NoiseRatio,
    Rank,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Lambda => "lambda",
            SweepAxis::NoiseRatio => "noise_ratio",
            SweepAxis::Rank => "rank",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub pre_processing_secs: f64,
    pub fit_secs: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.pre_processing_secs + self.fit_secs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Rank actually fitted, for SVD-AE points.
    pub rank: Option<usize>,
    pub test: EvalReport,
    pub validation: EvalReport,
    /// Squared Frobenius error against the (possibly noisy) training matrix.
    pub mse: Option<f64>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub model: String,
    pub points: Vec<SweepPoint>,
    /// Axis value with the best validation HR@10, ties to the smaller value.
    pub selected: Option<f64>,
    pub selection_metric: String,
    pub notes: Vec<String>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn selected_point(&self) -> Option<&SweepPoint> {
        let v = self.selected?;
        self.points.iter().find(|p| p.value == v)
    }

    fn select(&mut self) {
        let mut best: Option<(f64, f64)> = None;
        for p in &self.points {
            let score = p.validation.get(SELECTION_METRIC).unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, p.value));
            }
        }
        self.selected = best.map(|(_, v)| v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankChoice {
    Gamma(f64),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    SvdAe { rank: RankChoice, backend: SvdBackend },
    Ease { lambda: f64 },
    Popularity,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::SvdAe { .. } => "svd-ae",
            ModelSpec::Ease { .. } => "ease",
            ModelSpec::Popularity => "popularity",
        }
    }

    fn metadata(&self, rank: Option<usize>) -> ReportMetadata {
        let mut meta = ReportMetadata { model: self.name().into(), rank, ..Default::default() };
        match self {
            ModelSpec::SvdAe { rank: choice, backend } => {
                if let RankChoice::Gamma(g) = choice {
                    meta.gamma = Some(*g);
                }
                meta.seed = backend.seed();
            }
            ModelSpec::Ease { lambda } => meta.lambda = Some(*lambda),
            ModelSpec::Popularity => {}
        }
        meta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    SvdAe(SvdAeModel),
    Ease(EaseModel),
    Popularity(PopularityModel),
}

impl FittedModel {
    pub fn rank(&self) -> Option<usize> {
        match self {
            FittedModel::SvdAe(m) => Some(m.rank()),
            _ => None,
        }
    }

    /// A scorer over `train`, the matrix the model was fitted on.
    pub fn scorer<'a>(&'a self, train: &'a InteractionMatrix) -> Result<Box<dyn Scorer + 'a>> {
        Ok(match self {
            FittedModel::SvdAe(m) => Box::new(m),
            FittedModel::Ease(m) => Box::new(m.scorer(train)?),
            FittedModel::Popularity(m) => Box::new(m),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedFit {
    pub model: FittedModel,
    pub timing: Timing,
}

/// Fits `spec` on `train`, timing pre-processing (degrees and
/// normalization, or the Gram matrix) separately from the fit proper (SVD
/// and factor assembly, or the inversion).
pub fn timed_fit(spec: &ModelSpec, train: &InteractionMatrix) -> Result<TimedFit> {
    if train.nnz() == 0 {
        return Err(Error::Empty("training matrix has no interactions".into()));
    }
    let start = Instant::now();
    let (model, split) = match spec {
        ModelSpec::SvdAe { rank, backend } => {
            let m = match *rank {
                RankChoice::Gamma(g) => select_rank(train.num_users(), train.num_items(), g)?,
                RankChoice::Fixed(m) => m,
            };
            let normalized = normalize(train, &compute_degrees(train));
            let split = start.elapsed();
            let factors = factorize(&normalized, m, backend)?;
            let gamma = match *rank {
                RankChoice::Gamma(g) => Some(g),
                RankChoice::Fixed(_) => None,
            };
            let model =
                SvdAeModel::from_factors(train, &normalized, &factors)?.with_gamma(gamma).with_seed(backend.seed());
            (FittedModel::SvdAe(model), split)
        }
        ModelSpec::Ease { lambda } => {
            if train.num_items() > DEFAULT_EASE_ITEM_CAP {
                return Err(Error::InversionCapExceeded { items: train.num_items(), cap: DEFAULT_EASE_ITEM_CAP });
            }
            let gram = item_gram(train);
            let split = start.elapsed();
            (FittedModel::Ease(fit_ease_from_gram(gram, *lambda)?), split)
        }
        ModelSpec::Popularity => {
            let split = start.elapsed();
            (FittedModel::Popularity(PopularityModel::fit(train)), split)
        }
    };
    let total = start.elapsed();
    Ok(TimedFit {
        model,
        timing: Timing { pre_processing_secs: split.as_secs_f64(), fit_secs: (total - split).as_secs_f64() },
    })
}

/// Squared Frobenius error of a scorer's full reconstruction against `r`,
/// streamed in row blocks.
pub fn reconstruction_mse(scorer: &dyn Scorer, r: &InteractionMatrix, block: usize) -> Result<f64> {
    let users: Vec<usize> = (0..r.num_users()).collect();
    let mut total = 0.0;
    for (c, chunk) in users.chunks(block.max(1)).enumerate() {
        let rows = scorer.score_users(chunk)?;
        total += frobenius_mse_rows(r, c * block.max(1), rows.as_ref())?;
    }
    Ok(total)
}

/// Fits `spec` on `train` and evaluates on both held-out splits of `data`.
/// `train` may differ from `data.train` (noise runs).
pub fn run_point(
    spec: &ModelSpec,
    data: &DatasetBundle,
    train: &InteractionMatrix,
    eval: &EvalConfig,
    compute_mse: bool,
) -> Result<(SweepPoint, FittedModel)> {
    let fitted = timed_fit(spec, train)?;
    let scorer = fitted.model.scorer(train)?;
    let mut val_config = eval.clone();
    if !val_config.k_list.contains(&10) {
        val_config.k_list.push(10);
    }
    let validation = evaluate(scorer.as_ref(), train, train, &data.validation, &val_config)?;
    let test_mask = train.union(&data.validation)?;
    let mut test = evaluate(scorer.as_ref(), train, &test_mask, &data.test, eval)?;
    let rank = fitted.model.rank();
    test.metadata = spec.metadata(rank);
    test.metadata.split = Some("test".into());
    let mut validation = validation;
    validation.metadata = spec.metadata(rank);
    validation.metadata.split = Some("validation".into());
    let mse = if compute_mse { Some(reconstruction_mse(scorer.as_ref(), train, 512)?) } else { None };
    drop(scorer);
    Ok((SweepPoint { value: 0.0, rank, test, validation, mse, timing: fitted.timing }, fitted.model))
}

fn check_axis(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} grid is empty")));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

fn sweep(
    axis: SweepAxis,
    model: &str,
    data: &DatasetBundle,
    values: &[f64],
    eval: &EvalConfig,
    spec_at: impl Fn(f64) -> ModelSpec,
) -> Result<SweepResult> {
    let mut result = SweepResult {
        axis,
        model: model.into(),
        points: Vec::with_capacity(values.len()),
        selected: None,
        selection_metric: SELECTION_METRIC.into(),
        notes: Vec::new(),
    };
    for &v in values {
        let (mut point, _) = run_point(&spec_at(v), data, &data.train, eval, true)?;
        point.value = v;
        result.points.push(point);
    }
    result.select();
    Ok(result)
}

/// SVD-AE over a grid of `gamma` values.
pub fn sweep_gamma(
    data: &DatasetBundle,
    gammas: &[f64],
    eval: &EvalConfig,
    backend: &SvdBackend,
) -> Result<SweepResult> {
    check_axis(gammas, "gamma")?;
    if let Some(&g) = gammas.iter().find(|&&g| !(g > 0.0 && g <= 1.0)) {
        return Err(Error::GammaOutOfRange(g));
    }
    sweep(SweepAxis::Gamma, "svd-ae", data, gammas, eval, |g| ModelSpec::SvdAe {
        rank: RankChoice::Gamma(g),
        backend: *backend,
    })
}

/// SVD-AE over explicit ranks.
pub fn sweep_rank(data: &DatasetBundle, ranks: &[usize], eval: &EvalConfig, backend: &SvdBackend) -> Result<SweepResult> {
    let values: Vec<f64> = ranks.iter().map(|&m| m as f64).collect();
    check_axis(&values, "rank")?;
    sweep(SweepAxis::Rank, "svd-ae", data, &values, eval, |m| ModelSpec::SvdAe {
        rank: RankChoice::Fixed(m as usize),
        backend: *backend,
    })
}

/// EASE over a grid of `lambda` values.
pub fn sweep_lambda_ease(data: &DatasetBundle, lambdas: &[f64], eval: &EvalConfig) -> Result<SweepResult> {
    check_axis(lambdas, "lambda")?;
    if let Some(&l) = lambdas.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {l}")));
    }
    sweep(SweepAxis::Lambda, "ease", data, lambdas, eval, |lambda| ModelSpec::Ease { lambda })
}

/// Injects noise into the training split at each ratio and refits every
/// model. Returns one result per model, in `specs` order.
///
/// Noise pairs never coincide with validation or test pairs, and the test
/// split stays clean.
pub fn sweep_noise(
    data: &DatasetBundle,
    ratios: &[f64],
    specs: &[ModelSpec],
    eval: &EvalConfig,
    seed: u64,
) -> Result<Vec<SweepResult>> {
    check_axis(ratios, "noise ratio")?;
    if specs.is_empty() {
        return Err(Error::InvalidParameter("no models to sweep".into()));
    }
    let held_out = data.validation.union(&data.test)?;
    let mut results: Vec<SweepResult> = specs
        .iter()
        .map(|s| SweepResult {
            axis: SweepAxis::NoiseRatio,
            model: s.name().into(),
            points: Vec::with_capacity(ratios.len()),
            selected: None,
            selection_metric: SELECTION_METRIC.into(),
            notes: vec![format!("noise grid {ratios:?}; interior points are not taken from the method description")],
        })
        .collect();
    for &ratio in ratios {
        let noisy = inject_noise_excluding(&data.train, Some(&held_out), &NoiseSpec { ratio, seed })?;
        for (spec, result) in specs.iter().zip(results.iter_mut()) {
            let (mut point, _) = run_point(spec, data, &noisy, eval, false)?;
            point.value = ratio;
            point.test.metadata.noise_ratio = Some(ratio);
            point.validation.metadata.noise_ratio = Some(ratio);
            result.points.push(point);
        }
    }
    Ok(results)
}

/// Descending singular values for inspection.
pub fn export_spectrum(f: &dyn Spectrum) -> Vec<f64> {
    f.singular_values().to_vec()
}

/// Counts of min/max-normalized values in `bins` equal-width bins on
/// `[0, 1]`. A constant input puts everything in bin 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = f64> + Clone, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        let (mut min, mut max, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for x in values.clone() {
            min = min.min(x);
            max = max.max(x);
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("histogram sample is empty".into()));
        }
        let mut counts = vec![0; bins];
        let width = max - min;
        for x in values {
            let t = if width > 0.0 { (x - min) / width } else { 0.0 };
            counts[((t * bins as f64) as usize).min(bins - 1)] += 1;
        }
        Ok(Self { min, max, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionStats {
    pub reconstructed: Histogram,
    pub input: Histogram,
}

fn entries(m: MatRef<'_, f64>) -> impl Iterator<Item = f64> + Clone + '_ {
    let rows = m.nrows().max(1);
    (0..m.nrows() * m.ncols()).map(move |k| m[(k % rows, k / rows)])
}

/// Histograms of a reconstructed block and of the matching input block.
pub fn reconstruction_stats(block: MatRef<'_, f64>, input_block: MatRef<'_, f64>, bins: usize) -> Result<ReconstructionStats> {
    if block.nrows() != input_block.nrows() || block.ncols() != input_block.ncols() {
        return Err(Error::DimensionMismatch("reconstruction and input blocks differ in shape".into()));
    }
    Ok(ReconstructionStats {
        reconstructed: Histogram::from_values(entries(block), bins)?,
        input: Histogram::from_values(entries(input_block), bins)?,
    })
}

/// A sampled block of the reconstruction and the matching input entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBlock {
    pub scores: Mat<f64>,
    pub input: Mat<f64>,
    pub users: Vec<usize>,
    pub items: Vec<usize>,
}

/// A random `size x size` block (fewer if the matrix is smaller) of the
/// reconstruction and of `r`.
pub fn sample_block(scorer: &dyn Scorer, r: &InteractionMatrix, size: usize, seed: u64) -> Result<SampledBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = sample(&mut rng, r.num_users(), size.min(r.num_users())).into_vec();
    let mut items = sample(&mut rng, r.num_items(), size.min(r.num_items())).into_vec();
    users.sort_unstable();
    items.sort_unstable();
    let full = scorer.score_users(&users)?;
    let scores = Mat::from_fn(users.len(), items.len(), |b, c| full[(b, items[c])]);
    let input = Mat::from_fn(users.len(), items.len(), |b, c| f64::from(u8::from(r.contains(users[b], items[c]))));
    Ok(SampledBlock { scores, input, users, items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsvd::{exact_svd, RsvdParams};

    fn tiny_bundle() -> DatasetBundle {
        let train = InteractionMatrix::from_pairs(4, 4, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0)])
            .unwrap();
        let val = InteractionMatrix::from_pairs(4, 4, [(0, 2), (1, 3)]).unwrap();
        let test = InteractionMatrix::from_pairs(4, 4, [(2, 0), (3, 1)]).unwrap();
        DatasetBundle::from_matrices("tiny", train, val, test).unwrap()
    }

    #[test]
    fn constant_block_one_bin() {
        let block = Mat::from_fn(3, 3, |_, _| 0.7);
        let h = Histogram::from_values(entries(block.as_ref()), 10).unwrap();
        assert_eq!(h.counts[0], 9);
        assert_eq!(h.total(), 9);
        assert!(Histogram::from_values(std::iter::empty(), 4).is_err());
    }

    #[test]
    fn binary_block_at_ends() {
        let r = InteractionMatrix::from_pairs(3, 3, [(0, 0), (1, 2)]).unwrap();
        let dense = r.to_dense();
        let s = reconstruction_stats(dense.as_ref(), dense.as_ref(), 5).unwrap();
        assert_eq!(s.reconstructed.counts, vec![7, 0, 0, 0, 2]);
    }

    #[test]
    fn identity_spectrum_is_flat() {
        let s = exact_svd(Mat::<f64>::identity(4, 4).as_ref()).unwrap();
        assert_eq!(export_spectrum(&s), vec![1.0; 4]);
    }

    #[test]
    fn trivial_timings_are_finite() {
        let b = tiny_bundle();
        for spec in [
            ModelSpec::SvdAe { rank: RankChoice::Fixed(2), backend: SvdBackend::Exact },
            ModelSpec::Ease { lambda: 1.0 },
        ] {
            let t = timed_fit(&spec, &b.train).unwrap().timing;
            assert!(t.pre_processing_secs >= 0.0 && t.fit_secs >= 0.0 && t.total().is_finite());
        }
    }

    #[test]
    fn selection_prefers_smaller_on_ties() {
        let b = tiny_bundle();
        let eval = EvalConfig { k_list: vec![1], ..Default::default() };
        let r = sweep_lambda_ease(&b, &[1.0, 2.0], &eval).unwrap();
        assert_eq!(r.values(), vec![1.0, 2.0]);
        assert!(r.selected.is_some());
        let h: Vec<f64> = r.points.iter().map(|p| p.validation.hr(10).unwrap()).collect();
        if h[0] == h[1] {
            assert_eq!(r.selected, Some(1.0));
        }
        assert!(sweep_lambda_ease(&b, &[2.0, 1.0], &eval).is_err());
        assert!(sweep_gamma(&b, &[], &eval, &SvdBackend::Randomized(RsvdParams::default())).is_err());
    }
}
