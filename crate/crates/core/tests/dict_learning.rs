use nalgebra::DMatrix;
use proptest::prelude::*;
use relcomp::binding::make_random_orthogonal;
use relcomp::dict_learning::*;
use relcomp::echo_analysis::{echo_truth, generate_pair_samples};
use relcomp::feature_space::*;
use relcomp::linalg::gaussian_matrix;
use relcomp::rng::{gaussian_vector, stream, substream};
use relcomp::Vector;

fn sorted_support(code: &relcomp::feature_space::SparseCode) -> Vec<usize> {
    let mut s: Vec<usize> = code.active().collect();
    s.sort_unstable();
    s
}

#[test]
fn omp_examples() {
    let basis = DMatrix::identity(4, 4);
    let x = Vector::from_column_slice(&[3.0, 0.5, 0.0, 0.0]);
    let r = omp_sparse_code(&basis, &x, &OmpStop::support(2)).unwrap();
    assert_eq!(r.code.to_dense(), vec![3.0, 0.5, 0.0, 0.0]);
    let empty = omp_sparse_code(&basis, &Vector::zeros(4), &OmpStop::support(2)).unwrap();
    assert_eq!(empty.code.support_len(), 0);
}

#[test]
fn omp_recovers_three_sparse_supports() {
    let dict = make_dictionary(128, 256, DictionaryKind::GaussianNormalized, 31).unwrap();
    let trials = 1000;
    let exact = (0..trials)
        .filter(|&t| {
            let mut rng = substream(32, "omp-trials", t);
            let mut support = rand::seq::index::sample(&mut rng, 256, 3).into_vec();
            support.sort_unstable();
            let entries = support.iter().map(|&i| (i, rand::Rng::random_range(&mut rng, 0.5..1.5)));
            let code = SparseCode::from_entries(256, entries).unwrap();
            let x = encode(&dict, &code).unwrap();
            let got = omp_sparse_code(dict.atoms(), &x, &OmpStop::support(3)).unwrap();
            sorted_support(&got.code) == support
        })
        .count();
    assert!(exact as f64 >= 0.99 * trials as f64, "{exact}/{trials}");
}

#[test]
fn ksvd_recovers_orthonormal_one_sparse() {
    let n = 16;
    let truth = make_dictionary(n, n, DictionaryKind::OrthogonalSubset, 3).unwrap();
    let mut rng = stream(4, "one-sparse");
    let samples = DMatrix::from_fn(n, 800, |_, _| 0.0);
    let mut samples = samples;
    for k in 0..800 {
        let i = rand::Rng::random_range(&mut rng, 0..n);
        let amp = rand::Rng::random_range(&mut rng, 0.5..2.0) * if rand::Rng::random_bool(&mut rng, 0.5) { 1.0 } else { -1.0 };
        samples.set_column(k, &(truth.atom(i) * amp));
    }
    let cfg = KsvdConfig {
        atoms: n,
        sparsity: 1,
        iterations: 10,
        seed: 5,
        ..Default::default()
    };
    let learned = fit_dictionary_ksvd(&samples, &cfg).unwrap();
    assert_eq!(match_atoms(&learned, &truth, 0.99).unwrap().recovery_rate, 1.0);
    for w in learned.meta.loss_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
}

#[test]
fn ksvd_with_zero_iterations_returns_its_initialization() {
    let mut rng = stream(6, "init");
    let samples = gaussian_matrix(&mut rng, 8, 40);
    let cfg = |iterations| KsvdConfig {
        atoms: 6,
        sparsity: 2,
        iterations,
        seed: 7,
        ..Default::default()
    };
    let init = fit_dictionary_ksvd(&samples, &cfg(0)).unwrap();
    assert_eq!(init.meta.iterations, 0);
    let again = fit_dictionary_ksvd(&samples, &cfg(0)).unwrap();
    assert_eq!(init.atoms(), again.atoms());
    let trained = fit_dictionary_ksvd(&samples, &cfg(3)).unwrap();
    assert_ne!(init.atoms(), trained.atoms());
    assert!(fit_dictionary_ksvd(&DMatrix::zeros(8, 40), &cfg(2)).is_err());
}

#[test]
fn learned_atoms_are_unit_with_sign_convention() {
    let mut rng = stream(8, "sign");
    let samples = gaussian_matrix(&mut rng, 6, 50);
    let learned = fit_dictionary_ksvd(
        &samples,
        &KsvdConfig {
            atoms: 5,
            sparsity: 2,
            iterations: 4,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    for c in learned.atoms().column_iter() {
        assert!((c.norm() - 1.0).abs() <= 1e-6);
        let first = c.iter().find(|v| **v != 0.0).unwrap();
        assert!(*first > 0.0);
    }
}

/// Scaled standard-basis samples, full width, no sparsity penalty.
#[test]
fn sae_learns_identity_like_data() {
    let (dim, count) = (8, 4096);
    let mut rng = stream(9, "sae-identity");
    let mut samples = DMatrix::zeros(dim, count);
    for k in 0..count {
        let i = rand::Rng::random_range(&mut rng, 0..dim);
        samples[(i, k)] = rand::Rng::random_range(&mut rng, 0.5..1.5);
    }
    let cfg = SaeConfig {
        width: dim,
        l1_weight: 0.0,
        seed: 2,
        ..Default::default()
    };
    let fit = train_sae(&samples, &cfg).unwrap();
    let mse = (fit.model.reconstruct(&samples) - &samples).norm_squared() / samples.len() as f64;
    assert!(mse <= 1e-4, "mse {mse}");
}

#[test]
fn sae_on_zero_data_has_zero_loss() {
    let x = DMatrix::zeros(5, 20);
    let cfg = SaeConfig {
        width: 3,
        epochs: 3,
        batch: 8,
        ..Default::default()
    };
    let learned = fit_dictionary_sae(&x, &cfg).unwrap();
    assert_eq!(learned.meta.final_loss, 0.0);
    assert!(fit_dictionary_sae(&x, &SaeConfig { width: 0, ..cfg }).is_err());
}

#[test]
fn sae_gradients_match_finite_differences() {
    for seed in 0..10 {
        for width in [1, 4, 16] {
            assert!(sae_gradient_check(width, 1e-3, seed) <= 1e-5);
            assert!(sae_gradient_check(width, 0.0, seed) <= 1e-5);
        }
    }
    let bad = sae_gradient_check_with(8, 1e-3, 3, |g| g.b_enc[0] += 0.05);
    assert!(bad > 1e-2, "negative control {bad}");
}

/// Largest number of pairs at or above `threshold`, by trying every injection.
fn brute_force_matches(cos: &DMatrix<f64>, threshold: f64) -> usize {
    fn go(cos: &DMatrix<f64>, threshold: f64, row: usize, used: &mut Vec<bool>) -> usize {
        if row == cos.nrows() {
            return 0;
        }
        let mut best = go(cos, threshold, row + 1, used);
        for t in 0..cos.ncols() {
            if !used[t] && cos[(row, t)].abs() >= threshold {
                used[t] = true;
                best = best.max(1 + go(cos, threshold, row + 1, used));
                used[t] = false;
            }
        }
        best
    }
    go(cos, threshold, 0, &mut vec![false; cos.ncols()])
}

#[test]
fn greedy_matching_tracks_exhaustive_optimum() {
    let seeds = 400;
    let (mut agree, mut partial) = (0, 0);
    for seed in 0..seeds {
        let mut rng = substream(11, "match-oracle", seed);
        let n = 8;
        let k = rand::Rng::random_range(&mut rng, 2..=8);
        let unit = |m: DMatrix<f64>| {
            let mut m = m;
            for mut c in m.column_iter_mut() {
                c.normalize_mut();
            }
            m
        };
        let truth = unit(gaussian_matrix(&mut rng, n, k));
        // per-atom noise levels, so some atoms fall below the threshold
        let mut noise = gaussian_matrix(&mut rng, n, k);
        for mut c in noise.column_iter_mut() {
            c *= rand::Rng::random_range(&mut rng, 0.0..0.35);
        }
        let learned = unit(&truth + noise);
        let threshold = 0.8;
        let report = match_columns(&learned, &truth, threshold).unwrap();
        let optimum = brute_force_matches(&(learned.transpose() * &truth), threshold);
        assert!(report.assignment.len() <= optimum);
        agree += (report.assignment.len() == optimum) as usize;
        partial += (optimum < k) as usize;
    }
    println!("greedy optimal on {agree}/{seeds}, contested {partial}");
    // the instances must include contested ones, or agreement is vacuous
    assert!(partial >= seeds as usize / 10, "only {partial} contested instances");
    assert!(agree as f64 >= 0.95 * seeds as f64, "{agree}/{seeds}");
}

#[test]
fn matching_examples() {
    let truth = make_dictionary(6, 4, DictionaryKind::GaussianNormalized, 12).unwrap();
    let mut flipped = truth.atoms().clone();
    flipped.swap_columns(0, 3);
    flipped.column_mut(1).neg_mut();
    let r = match_columns(&flipped, truth.atoms(), 0.9).unwrap();
    assert_eq!(r.recovery_rate, 1.0);
    assert!(r.assignment.values().all(|m| (m.cosine - 1.0).abs() <= 1e-12));

    let basis = DMatrix::identity(4, 4);
    let r = match_columns(&basis.columns(2, 2).into_owned(), &basis.columns(0, 2).into_owned(), 0.1).unwrap();
    assert_eq!(r.recovery_rate, 0.0);
    assert_eq!(r.unmatched_truth, vec![0, 1]);
    assert!(match_columns(&DMatrix::identity(3, 3), &basis, 0.9).is_err());
}

/// K-SVD and the autoencoder, both at default settings, on the echo setup.
#[test]
fn sae_agrees_with_ksvd_on_echo_samples() {
    let base = make_dictionary(256, 32, DictionaryKind::GaussianNormalized, 1).unwrap();
    let a = make_random_orthogonal(256, 2).unwrap();
    let samples = generate_pair_samples(&base, &a, 20_000, 1.0 / 32.0, Amplitude::ConstantOne, 3).unwrap();
    let truth = echo_truth(&base, &a).unwrap();
    let ksvd = fit_dictionary_ksvd(
        &samples.z,
        &KsvdConfig {
            atoms: 64,
            sparsity: 16,
            iterations: 10,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let sae = fit_dictionary_sae(&samples.z, &SaeConfig { width: 128, seed: 4, ..Default::default() }).unwrap();
    let rk = match_atoms(&ksvd, &truth, DEFAULT_MATCH_THRESHOLD).unwrap().recovery_rate;
    let rs = match_atoms(&sae, &truth, DEFAULT_MATCH_THRESHOLD).unwrap().recovery_rate;
    println!("echo recovery: ksvd {rk}, sae {rs}");
    assert!(rk >= 0.9);
    assert!((rk - rs).abs() <= 0.1);
    for w in sae.meta.loss_history.windows(2).skip(20) {
        assert!(w[1] <= w[0] * 1.05, "epoch losses {w:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omp_residuals_never_increase(seed in 0u64..100_000, n in 2usize..24, m in 1usize..48, k in 1usize..8) {
        let dict = make_dictionary(n, m, DictionaryKind::GaussianNormalized, seed).unwrap();
        let mut rng = substream(seed, "omp-prop", 0);
        let x = gaussian_vector(&mut rng, n);
        let r = omp_sparse_code(dict.atoms(), &x, &OmpStop::support(k)).unwrap();
        prop_assert!(r.code.support_len() <= k.min(m));
        for w in r.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn recovery_rate_ignores_order_and_sign(seed in 0u64..100_000, k in 1usize..12) {
        let mut rng = substream(seed, "match-prop", 0);
        let truth = gaussian_matrix(&mut rng, 5, k);
        let learned = &truth + gaussian_matrix(&mut rng, 5, k) * 0.3;
        let base = match_columns(&learned, &truth, 0.9).unwrap().recovery_rate;
        let mut shuffled = learned.clone();
        let perm = rand::seq::index::sample(&mut rng, k, k).into_vec();
        for (dst, &src) in perm.iter().enumerate() {
            let mut col = learned.column(src).into_owned();
            if rand::Rng::random_bool(&mut rng, 0.5) {
                col.neg_mut();
            }
            shuffled.set_column(dst, &col);
        }
        prop_assert_eq!(match_columns(&shuffled, &truth, 0.9).unwrap().recovery_rate, base);
    }

    #[test]
    fn ksvd_is_deterministic_with_monotone_loss(seed in 0u64..1_000) {
        let mut rng = substream(seed, "ksvd-prop", 0);
        let samples = gaussian_matrix(&mut rng, 6, 30);
        let cfg = KsvdConfig { atoms: 4, sparsity: 2, iterations: 5, seed, ..Default::default() };
        let a = fit_dictionary_ksvd(&samples, &cfg).unwrap();
        let b = fit_dictionary_ksvd(&samples, &cfg).unwrap();
        prop_assert_eq!(a.atoms(), b.atoms());
        for w in a.meta.loss_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
