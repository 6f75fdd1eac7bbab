use svdae::eval::{evaluate, EvalConfig};
use svdae::harness::{
    export_spectrum, reconstruction_stats, run_point, sample_block, sweep_gamma, sweep_noise, ModelSpec, RankChoice,
};
use svdae::models::{fit_svd_ae, select_rank, SvdBackend};
use svdae::rsvd::{exact_svd, RsvdParams};
use svdae::sparse::{InteractionMatrix, NormalizedMatrix};
use svdae::synth::{synth_bundle, SynthConfig};

fn backend() -> SvdBackend {
    SvdBackend::Randomized(RsvdParams { seed: 17, ..Default::default() })
}

#[test]
fn single_gamma_sweep_equals_direct_fit() {
    let bundle = synth_bundle(&SynthConfig::new(150, 100, 4, 3000, 21)).unwrap();
    let eval = EvalConfig { k_list: vec![10, 20], ..Default::default() };
    let sweep = sweep_gamma(&bundle, &[0.04], &eval, &backend()).unwrap();
    assert_eq!(sweep.points.len(), 1);
    let rank = select_rank(150, 100, 0.04).unwrap();
    let model = fit_svd_ae(&bundle.train, rank, &backend()).unwrap();
    let mask = bundle.train_and_validation().unwrap();
    let direct = evaluate(&model, &bundle.train, &mask, &bundle.test, &eval).unwrap();
    assert_eq!(sweep.points[0].test.metrics, direct.metrics);
    assert_eq!(sweep.selected, Some(0.04));
}

#[test]
fn exact_gamma_sweep_mse_non_increasing() {
    let bundle = synth_bundle(&SynthConfig::new(200, 160, 5, 4000, 22)).unwrap();
    let eval = EvalConfig { k_list: vec![10], ..Default::default() };
    let sweep = sweep_gamma(&bundle, &[0.01, 0.02, 0.03, 0.04, 0.05], &eval, &SvdBackend::Exact).unwrap();
    let mse: Vec<f64> = sweep.points.iter().map(|p| p.mse.unwrap()).collect();
    assert!(mse.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{mse:?}");
}

#[test]
fn noise_sweep_is_reproducible_and_zero_ratio_matches_baseline() {
    let bundle = synth_bundle(&SynthConfig::new(150, 100, 4, 3000, 23)).unwrap();
    let eval = EvalConfig { k_list: vec![10], ..Default::default() };
    let specs = [
        ModelSpec::SvdAe { rank: RankChoice::Gamma(0.05), backend: backend() },
        ModelSpec::Ease { lambda: 100.0 },
    ];
    let ratios = [0.0, 0.01, 0.05];
    let a = sweep_noise(&bundle, &ratios, &specs, &eval, 5).unwrap();
    let b = sweep_noise(&bundle, &ratios, &specs, &eval, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let mx: Vec<_> = x.points.iter().map(|p| &p.test.metrics).collect();
        let my: Vec<_> = y.points.iter().map(|p| &p.test.metrics).collect();
        assert_eq!(mx, my);
    }
    for (spec, result) in specs.iter().zip(&a) {
        let (baseline, _) = run_point(spec, &bundle, &bundle.train, &eval, false).unwrap();
        assert_eq!(result.points[0].test.metrics, baseline.test.metrics);
    }
}

#[test]
fn spectrum_of_special_matrices() {
    let eye = NormalizedMatrix::from_interactions(&InteractionMatrix::identity(5));
    assert_eq!(export_spectrum(&exact_svd(eye.to_dense().as_ref()).unwrap()), vec![1.0; 5]);
    let ones = InteractionMatrix::from_pairs(4, 3, (0..4).flat_map(|u| (0..3).map(move |i| (u, i)))).unwrap();
    let s = export_spectrum(&exact_svd(NormalizedMatrix::from_interactions(&ones).to_dense().as_ref()).unwrap());
    assert!((s[0] - 1.0).abs() < 1e-12 && s[1..].iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn histogram_counts_cover_the_block() {
    let bundle = synth_bundle(&SynthConfig::new(120, 90, 4, 2000, 24)).unwrap();
    let model = fit_svd_ae(&bundle.train, 8, &backend()).unwrap();
    let block = sample_block(&model, &bundle.train, 50, 3).unwrap();
    assert_eq!((block.users.len(), block.items.len()), (50, 50));
    let stats = reconstruction_stats(block.scores.as_ref(), block.input.as_ref(), 20).unwrap();
    assert_eq!(stats.reconstructed.total(), 2500);
    assert_eq!(stats.input.total(), 2500);
    let inner: usize = stats.input.counts[1..19].iter().sum();
    assert_eq!(inner, 0);
}
