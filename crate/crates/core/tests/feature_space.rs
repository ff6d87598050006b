use nalgebra::DMatrix;
use proptest::prelude::*;
use relcomp::feature_space::*;
use relcomp::rng::{stream, substream};

fn brute_coherence(atoms: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..atoms.ncols() {
        for j in 0..atoms.ncols() {
            if i != j {
                let mut dot = 0.0;
                for r in 0..atoms.nrows() {
                    dot += atoms[(r, i)] * atoms[(r, j)];
                }
                worst = worst.max(dot.abs());
            }
        }
    }
    worst
}

#[test]
fn orthogonal_subset_is_orthonormal() {
    let d = make_dictionary(3, 3, DictionaryKind::OrthogonalSubset, 11).unwrap();
    let gram = d.atoms().transpose() * d.atoms();
    assert!((gram - DMatrix::identity(3, 3)).amax() <= 1e-12);
    assert!(d.coherence() <= 1e-9);
}

#[test]
fn single_atom_dictionary() {
    let d = make_dictionary(1, 1, DictionaryKind::GaussianNormalized, 5).unwrap();
    assert_eq!(d.atom(0)[0].abs(), 1.0);
    assert_eq!(d.coherence(), 0.0);
}

#[test]
fn coherence_fixture_matches_pairwise_scan() {
    let d = make_dictionary(256, 512, DictionaryKind::GaussianNormalized, 7).unwrap();
    let brute = brute_coherence(d.atoms());
    assert!((d.coherence() - brute).abs() <= 1e-12);
    assert_eq!(d.coherence(), mutual_coherence(&d));
    // frozen from the pairwise scan above
    assert!((brute - 0.277_890_999_483_099).abs() < 1e-12, "coherence {brute}");
    for i in 0..d.count() {
        assert!((d.atom(i).norm() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn duplicate_atoms_have_unit_coherence() {
    let d = FeatureDictionary::from_columns(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 3.0, 0.0])).unwrap();
    assert_eq!(d.coherence(), 1.0);
    let basis = FeatureDictionary::from_columns(DMatrix::identity(3, 3)).unwrap();
    assert_eq!(mutual_coherence(&basis), 0.0);
}

#[test]
fn presence_extremes() {
    let d = make_dictionary(4, 6, DictionaryKind::GaussianNormalized, 1).unwrap();
    assert_eq!(sample_code(&d, 0.0, Amplitude::ConstantOne, 3).unwrap().support_len(), 0);
    let full = sample_code(&d, 1.0, Amplitude::ConstantOne, 3).unwrap();
    assert_eq!(full.to_dense(), vec![1.0; 6]);
    assert!(sample_code(&d, 1.5, Amplitude::ConstantOne, 3).is_err());
}

#[test]
fn mean_support_matches_binomial() {
    let m = 512;
    let p = 1.0 / 512.0;
    let draws = 100_000;
    let mut rng = stream(42, "support-mean");
    let total: usize = (0..draws)
        .map(|_| sample_code_with(m, p, Amplitude::ConstantOne, &mut rng).unwrap().support_len())
        .sum();
    let mean = total as f64 / draws as f64;
    let se = (m as f64 * p * (1.0 - p) / draws as f64).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

/// Pearson chi-squared against Binomial(m, p), pooling sparse tails.
#[test]
fn support_distribution_passes_chi_squared() {
    let (m, p, draws) = (64usize, 0.05, 20_000usize);
    let mut rng = stream(9, "support-chi2");
    let mut counts = vec![0usize; m + 1];
    for _ in 0..draws {
        counts[sample_code_with(m, p, Amplitude::ConstantOne, &mut rng).unwrap().support_len()] += 1;
    }
    let pmf: Vec<f64> = (0..=m)
        .map(|k| {
            let ln_choose = (1..=k).map(|i| ((m - k + i) as f64 / i as f64).ln()).sum::<f64>();
            (ln_choose + k as f64 * p.ln() + (m - k) as f64 * (1.0 - p).ln()).exp()
        })
        .collect();
    // bins 0..=7, then one tail bin
    let cut = 8;
    let mut observed: Vec<f64> = counts[..cut].iter().map(|&c| c as f64).collect();
    observed.push(counts[cut..].iter().sum::<usize>() as f64);
    let mut expected: Vec<f64> = pmf[..cut].iter().map(|q| q * draws as f64).collect();
    expected.push(pmf[cut..].iter().sum::<f64>() * draws as f64);
    assert!(expected.iter().all(|&e| e >= 5.0));
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    // 8 degrees of freedom, critical value at significance 0.001
    assert!(chi2 < 26.124, "chi2 {chi2}");
}

#[test]
fn encode_examples() {
    let basis = FeatureDictionary::from_columns(DMatrix::identity(2, 2)).unwrap();
    let code = SparseCode::from_entries(2, [(0, 2.0), (1, -1.0)]).unwrap();
    assert_eq!(encode(&basis, &code).unwrap().as_slice(), &[2.0, -1.0]);
    assert_eq!(encode(&basis, &SparseCode::new(2)).unwrap().as_slice(), &[0.0, 0.0]);
    let zero = readback(&basis, &relcomp::Vector::zeros(2)).unwrap();
    assert_eq!(zero.to_dense(), vec![0.0, 0.0]);
    assert_eq!(zero.active().count(), 0);
}

#[test]
fn readback_error_examples() {
    let truth = SparseCode::from_entries(2, [(0, 1.0)]).unwrap();
    let same = readback_error(&truth, &truth, 0.5).unwrap();
    assert_eq!((same.max_abs_error, same.mse, same.precision, same.recall), (0.0, 0.0, 1.0, 1.0));
    let wrong = SparseCode::from_entries(2, [(1, 1.0)]).unwrap();
    let m = readback_error(&truth, &wrong, 0.5).unwrap();
    assert_eq!((m.precision, m.recall), (0.0, 0.0));
}

fn naive_metrics(truth: &[f64], est: &[f64], thr: f64) -> (f64, f64, f64, f64) {
    let n = truth.len();
    let mut max = 0.0f64;
    let mut sq = 0.0;
    let (mut tp, mut pred, mut act) = (0, 0, 0);
    for i in 0..n {
        let e = (truth[i] - est[i]).abs();
        max = max.max(e);
        sq += e * e;
        let t = truth[i] != 0.0;
        let p = est[i].abs() >= thr;
        act += t as usize;
        pred += p as usize;
        tp += (t && p) as usize;
    }
    let precision = if pred == 0 { 1.0 } else { tp as f64 / pred as f64 };
    let recall = if act == 0 { 1.0 } else { tp as f64 / act as f64 };
    (max, sq / n as f64, precision, recall)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn readback_obeys_coherence_bound(seed in 0u64..100_000, n in 4usize..40, m in 1usize..80, p in 0.0f64..0.3) {
        let d = make_dictionary(n, m, DictionaryKind::GaussianNormalized, seed).unwrap();
        let code = sample_code(&d, p, Amplitude::Uniform { lo: -2.0, hi: 2.0 }, seed + 1).unwrap();
        let est = readback(&d, &encode(&d, &code).unwrap()).unwrap();
        let bound = d.coherence() * code.l1_norm();
        for i in 0..m {
            prop_assert!((est.get(i) - code.get(i)).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn orthonormal_round_trip_is_exact(seed in 0u64..100_000, n in 1usize..48) {
        let d = make_dictionary(n, n, DictionaryKind::OrthogonalSubset, seed).unwrap();
        let code = sample_code(&d, 0.5, Amplitude::Uniform { lo: -3.0, hi: 3.0 }, seed).unwrap();
        let est = readback(&d, &encode(&d, &code).unwrap()).unwrap();
        for i in 0..n {
            prop_assert!((est.get(i) - code.get(i)).abs() <= 1e-12);
        }
    }

    #[test]
    fn encode_matches_reversed_summation(seed in 0u64..100_000, n in 1usize..32, m in 1usize..64) {
        let d = make_dictionary(n, m, DictionaryKind::GaussianNormalized, seed).unwrap();
        let code = sample_code(&d, 0.3, Amplitude::Uniform { lo: -1.0, hi: 1.0 }, seed).unwrap();
        let x = encode(&d, &code).unwrap();
        let mut oracle = vec![0.0; n];
        for i in (0..m).rev() {
            for (r, o) in oracle.iter_mut().enumerate() {
                *o += code.get(i) * d.atom(i)[r];
            }
        }
        for r in 0..n {
            prop_assert!((x[r] - oracle[r]).abs() <= 1e-12);
        }
    }

    #[test]
    fn metrics_match_naive_reference(seed in 0u64..100_000, m in 1usize..40, thr in 0.05f64..1.0) {
        let mut rng = substream(seed, "metrics", 0);
        let truth = sample_code_with(m, 0.3, Amplitude::Uniform { lo: 0.5, hi: 1.5 }, &mut rng).unwrap();
        let est = sample_code_with(m, 0.5, Amplitude::Uniform { lo: -1.5, hi: 1.5 }, &mut rng).unwrap();
        let got = readback_error(&truth, &est, thr).unwrap();
        let (max, mse, precision, recall) = naive_metrics(&truth.to_dense(), &est.to_dense(), thr);
        prop_assert!((got.max_abs_error - max).abs() <= 1e-12);
        prop_assert!((got.mse - mse).abs() <= 1e-12);
        prop_assert_eq!(got.precision, precision);
        prop_assert_eq!(got.recall, recall);
    }

    #[test]
    fn generation_is_deterministic(seed in 0u64..100_000) {
        let a = make_dictionary(8, 12, DictionaryKind::GaussianNormalized, seed).unwrap();
        let b = make_dictionary(8, 12, DictionaryKind::GaussianNormalized, seed).unwrap();
        prop_assert_eq!(a.atoms(), b.atoms());
        let ca = sample_code(&a, 0.4, Amplitude::ConstantOne, seed).unwrap();
        let cb = sample_code(&b, 0.4, Amplitude::ConstantOne, seed).unwrap();
        prop_assert_eq!(ca, cb);
    }
}
