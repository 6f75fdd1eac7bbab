//! Property tests for structural and numerical invariants.

mod common;

use common::*;
use faer::Mat;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svdae::eval::{hr_user, inject_noise, ndcg_user, psp_user, rank_top_k, HrMode, NoiseSpec};
use svdae::models::{fit_ease, fit_svd_ae, predict_ease, select_rank, SvdBackend};
use svdae::rsvd::{exact_svd, randomized_truncated_svd, RsvdParams};
use svdae::sparse::{
    compute_degrees, frobenius_mse, sparse_times_dense, sparse_transpose_times_dense, InteractionMatrix,
    NormalizedMatrix,
};

fn matrix(seed: u64, rows: usize, cols: usize, density: f64, cover: bool) -> InteractionMatrix {
    random_binary(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols, density, cover)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairs_build_valid_csr(pairs in prop::collection::vec((0usize..12, 0usize..9), 0..80)) {
        let r = InteractionMatrix::from_pairs(12, 9, pairs.iter().copied()).unwrap();
        r.check_invariants().unwrap();
        let mut want: Vec<_> = pairs.clone();
        want.sort_unstable();
        want.dedup();
        prop_assert_eq!(r.iter().collect::<Vec<_>>(), want);
    }

    #[test]
    fn degrees_sum_to_nnz(seed in any::<u64>(), rows in 1usize..30, cols in 1usize..30, density in 0.0f64..0.6) {
        let r = matrix(seed, rows, cols, density, false);
        let d = compute_degrees(&r);
        prop_assert_eq!(d.user_degrees.iter().sum::<usize>(), r.nnz());
        prop_assert_eq!(d.item_degrees.iter().sum::<usize>(), r.nnz());
    }

    #[test]
    fn normalized_entries_in_unit_interval(seed in any::<u64>(), rows in 1usize..25, cols in 1usize..25, density in 0.0f64..0.7) {
        let n = NormalizedMatrix::from_interactions(&matrix(seed, rows, cols, density, false));
        prop_assert!(n.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn products_are_linear(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = NormalizedMatrix::from_interactions(&random_binary(&mut rng, rows, cols, 0.3, false));
        let x = gaussian(&mut rng, cols, 3);
        let y = gaussian(&mut rng, cols, 3);
        let combo = Mat::from_fn(cols, 3, |i, j| a * x[(i, j)] + b * y[(i, j)]);
        let lhs = sparse_times_dense(&n, combo.as_ref()).unwrap();
        let px = sparse_times_dense(&n, x.as_ref()).unwrap();
        let py = sparse_times_dense(&n, y.as_ref()).unwrap();
        let rhs = Mat::from_fn(rows, 3, |i, j| a * px[(i, j)] + b * py[(i, j)]);
        prop_assert!(max_abs_diff(lhs.as_ref(), rhs.as_ref()) <= 1e-10);
    }

    #[test]
    fn transpose_product_is_adjoint(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20) {
        // <M x, y> = <x, Mᵀ y>
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = NormalizedMatrix::from_interactions(&random_binary(&mut rng, rows, cols, 0.3, false));
        let x = gaussian(&mut rng, cols, 1);
        let y = gaussian(&mut rng, rows, 1);
        let mx = sparse_times_dense(&n, x.as_ref()).unwrap();
        let mty = sparse_transpose_times_dense(&n, y.as_ref()).unwrap();
        let l: f64 = (0..rows).map(|i| mx[(i, 0)] * y[(i, 0)]).sum();
        let r: f64 = (0..cols).map(|i| x[(i, 0)] * mty[(i, 0)]).sum();
        prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
    }

    #[test]
    fn rank_selection_bounds(users in 1usize..100_000, items in 1usize..100_000, gamma in 0.0001f64..=1.0) {
        let m = select_rank(users, items, gamma).unwrap();
        let base = users.min(items);
        prop_assert!(m >= 1 && m <= base);
        prop_assert!(m as f64 <= gamma * base as f64 + 1e-6 || m == 1);
    }

    #[test]
    fn randomized_factors_are_orthonormal(seed in any::<u64>(), rows in 10usize..60, cols in 8usize..50, m in 1usize..8) {
        let n = NormalizedMatrix::from_interactions(&matrix(seed, rows, cols, 0.2, true));
        let f = randomized_truncated_svd(&n, m, &RsvdParams { seed, ..Default::default() }).unwrap();
        let qtq = naive_matmul(f.q().transpose(), f.q());
        let vtv = naive_matmul(f.v().transpose(), f.v());
        let eye = Mat::<f64>::identity(f.rank(), f.rank());
        prop_assert!(max_abs_diff(qtq.as_ref(), eye.as_ref()) <= 1e-10);
        prop_assert!(max_abs_diff(vtv.as_ref(), eye.as_ref()) <= 1e-10);
        prop_assert!(f.sigma().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.sigma()[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn same_seed_same_factors(seed in any::<u64>()) {
        let n = NormalizedMatrix::from_interactions(&matrix(seed, 30, 25, 0.2, true));
        let p = RsvdParams { seed, ..Default::default() };
        prop_assert_eq!(randomized_truncated_svd(&n, 4, &p).unwrap(), randomized_truncated_svd(&n, 4, &p).unwrap());
    }

    #[test]
    fn ease_diagonal_is_zero(seed in any::<u64>(), users in 1usize..30, items in 1usize..20, lambda in 0.01f64..1000.0) {
        let model = fit_ease(&matrix(seed, users, items, 0.3, false), lambda).unwrap();
        for j in 0..items {
            prop_assert!(model.item_weights()[(j, j)].abs() <= 1e-10);
        }
    }

    #[test]
    fn scores_identical_in_batches_and_whole(seed in any::<u64>(), split in 1usize..19) {
        let r = matrix(seed, 20, 15, 0.25, true);
        let model = fit_svd_ae(&r, 4, &SvdBackend::Exact).unwrap();
        let all: Vec<usize> = (0..20).collect();
        let whole = svdae::models::predict_svd_ae(&model, &all).unwrap();
        let a = svdae::models::predict_svd_ae(&model, &all[..split]).unwrap();
        let b = svdae::models::predict_svd_ae(&model, &all[split..]).unwrap();
        for u in 0..20 {
            for i in 0..15 {
                let part = if u < split { a[(u, i)] } else { b[(u - split, i)] };
                prop_assert!((part - whole[(u, i)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ranking_matches_full_sort(seed in any::<u64>(), k in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = random_binary(&mut rng, 50, 25, 0.2, false);
        let scores = gaussian(&mut rng, 50, 25);
        let users: Vec<usize> = (0..50).collect();
        let ranking = rank_top_k(scores.as_ref(), &users, &mask, k).unwrap();
        for (u, ranked) in ranking.users.iter().enumerate() {
            let mut all: Vec<usize> = (0..25).filter(|&i| !mask.contains(u, i)).collect();
            all.sort_by(|&a, &b| scores[(u, b)].total_cmp(&scores[(u, a)]).then(a.cmp(&b)));
            all.truncate(k);
            prop_assert_eq!(ranked.item_ids().collect::<Vec<_>>(), all);
            prop_assert!(ranked.item_ids().all(|i| !mask.contains(u, i)));
        }
    }

    #[test]
    fn metrics_in_unit_interval(ranked in prop::collection::vec(0usize..30, 0..30), test in prop::collection::btree_set(0usize..30, 1..10), k in 1usize..30) {
        let mut seen = std::collections::HashSet::new();
        let ranked: Vec<usize> = ranked.into_iter().filter(|i| seen.insert(*i)).collect();
        let test: Vec<usize> = test.into_iter().collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + i as f64 / 7.0).collect();
        for v in [
            hr_user(&ranked, &test, k, HrMode::Truncated).unwrap(),
            hr_user(&ranked, &test, k, HrMode::Recall).unwrap(),
            ndcg_user(&ranked, &test, k).unwrap(),
            psp_user(&ranked, &test, &w, k).unwrap(),
        ] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn ndcg_is_one_iff_leading_slots_hit(test in prop::collection::btree_set(0usize..20, 1..8), rest in prop::collection::vec(0usize..20, 0..20), k in 1usize..10) {
        let test: Vec<usize> = test.into_iter().collect();
        let mut ranked = Vec::new();
        for i in rest.into_iter().chain(test.iter().copied()) {
            if !ranked.contains(&i) {
                ranked.push(i);
            }
        }
        let need = k.min(test.len());
        let leading_hits = ranked.iter().take(need).all(|i| test.contains(i)) && ranked.len() >= need;
        let v = ndcg_user(&ranked, &test, k).unwrap();
        prop_assert_eq!((v - 1.0).abs() < 1e-12, leading_hits);
    }

    #[test]
    fn noise_preserves_original(seed in any::<u64>(), ratio in 0.0f64..0.5) {
        let r = matrix(seed, 20, 20, 0.2, false);
        let noisy = inject_noise(&r, &NoiseSpec { ratio, seed }).unwrap();
        prop_assert!(r.iter().all(|(u, i)| noisy.contains(u, i)));
        prop_assert_eq!(noisy.nnz() - r.nnz(), (ratio * r.nnz() as f64).round() as usize);
    }
}

// Frozen comparisons against naive dense routes.

#[test]
fn sparse_product_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = random_binary(&mut rng, 20, 15, 0.3, false);
    let n = NormalizedMatrix::from_interactions(&r);
    let x = gaussian(&mut rng, 15, 4);
    let got = sparse_times_dense(&n, x.as_ref()).unwrap();
    let want = naive_matmul(n.to_dense().as_ref(), x.as_ref());
    assert!(max_abs_diff(got.as_ref(), want.as_ref()) <= 1e-12);
}

#[test]
fn mse_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = random_binary(&mut rng, 17, 13, 0.3, false);
    let r_hat = gaussian(&mut rng, 17, 13);
    let dense = r.to_dense();
    let want: f64 = (0..17).flat_map(|u| (0..13).map(move |i| (u, i))).map(|(u, i)| (dense[(u, i)] - r_hat[(u, i)]).powi(2)).sum();
    assert!((frobenius_mse(&r, r_hat.as_ref()).unwrap() - want).abs() <= 1e-12 * want.max(1.0));
}

#[test]
fn exact_svd_reconstructs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = gaussian(&mut rng, 30, 20);
    let svd = exact_svd(a.as_ref()).unwrap();
    assert!(max_abs_diff(svd.reconstruct().as_ref(), a.as_ref()) < 1e-10);
}

#[test]
fn pseudo_inverse_recovers_consistent_solution() {
    // For B0 in the row space of M, M⁺ (M B0) = B0.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = NormalizedMatrix::from_interactions(&random_binary(&mut rng, 25, 18, 0.3, true));
    let m = n.to_dense();
    let w = gaussian(&mut rng, 25, 5);
    let b0 = naive_matmul(m.transpose(), w.as_ref());
    let f = exact_svd(m.as_ref()).unwrap();
    let full = f.truncate(f.numerical_rank()).unwrap();
    let recovered = svdae::rsvd::pseudo_inverse_apply(&full, naive_matmul(m.as_ref(), b0.as_ref()).as_ref()).unwrap();
    assert!(max_abs_diff(recovered.as_ref(), b0.as_ref()) <= 1e-8);
}

#[test]
fn ease_scores_match_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = random_binary(&mut rng, 30, 12, 0.3, false);
    let model = fit_ease(&r, 10.0).unwrap();
    let users: Vec<usize> = (0..30).collect();
    let got = predict_ease(&model, &r, &users).unwrap();
    let want = naive_matmul(r.to_dense().as_ref(), model.item_weights());
    assert!(max_abs_diff(got.as_ref(), want.as_ref()) <= 1e-10);
}

#[test]
fn ease_mse_grows_with_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let r = random_binary(&mut rng, 40, 15, 0.25, false);
        let dense = r.to_dense();
        let mut previous = -1.0;
        for lambda in [1.0, 10.0, 100.0, 1000.0, 10000.0] {
            let b = fit_ease(&r, lambda).unwrap();
            let mse = frobenius_mse(&r, naive_matmul(dense.as_ref(), b.item_weights()).as_ref()).unwrap();
            assert!(mse >= previous - 1e-9, "mse {mse} after {previous} at lambda {lambda}");
            previous = mse;
        }
    }
}
