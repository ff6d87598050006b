use nalgebra::DMatrix;
use proptest::prelude::*;
use relcomp::binding::*;
use relcomp::feature_space::{encode, make_dictionary, readback, sample_code, Amplitude, DictionaryKind};
use relcomp::linalg::{gaussian_matrix, orthogonality_defect};
use relcomp::rng::{gaussian_vector, stream, substream};
use relcomp::{Error, Vector};

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn naive_convolution(x: &Vector, y: &Vector) -> Vector {
    let n = x.len();
    Vector::from_fn(n, |k, _| (0..n).map(|j| x[j] * y[(k + n - j) % n]).sum())
}

fn rotation90() -> SquareMatrix {
    SquareMatrix::general(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap()
}

#[test]
fn orthogonal_generator_properties() {
    let one = make_random_orthogonal(1, 4).unwrap();
    assert_eq!(one.values()[(0, 0)].abs(), 1.0);
    let q = make_random_orthogonal(64, 3).unwrap();
    assert!(orthogonality_defect(q.values()) <= 1e-9);
    assert_eq!(q.kind(), MatrixKind::Orthogonal);
    assert!((q.values().clone().lu().determinant().abs() - 1.0).abs() <= 1e-6);
    assert!(make_random_orthogonal(0, 1).is_err());
}

#[test]
fn low_rank_generator_properties() {
    let a = make_low_rank(32, 4, 9).unwrap();
    let mut s: Vec<f64> = a.values().clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    assert!((s[0] - 1.0).abs() <= 1e-12);
    assert!(s[4..].iter().all(|&x| x <= 1e-9), "tail {:?}", &s[4..8]);
    assert_eq!(a.kind(), MatrixKind::LowRank(4));

    let full = make_low_rank(16, 16, 2).unwrap();
    let sf = full.values().clone().singular_values();
    assert!(sf.min() > 1e-9);

    let r1 = make_low_rank(8, 1, 5).unwrap();
    let mut rng = stream(1, "rank1");
    let a0 = r1.apply(&gaussian_vector(&mut rng, 8)).unwrap().normalize();
    for _ in 0..10 {
        let img = r1.apply(&gaussian_vector(&mut rng, 8)).unwrap().normalize();
        assert!((img.dot(&a0).abs() - 1.0).abs() <= 1e-9);
    }
    assert!(matches!(make_low_rank(4, 0, 1), Err(Error::InvalidRank { .. })));
    assert!(matches!(make_low_rank(4, 5, 1), Err(Error::InvalidRank { .. })));
}

#[test]
fn additive_pair_examples() {
    let id = AdditivePair::new(SquareMatrix::identity(2), SquareMatrix::identity(2)).unwrap();
    assert_eq!(bind_pair_additive(&id, &v(&[1.0, 2.0]), &v(&[3.0, 5.0])).unwrap().as_slice(), &[4.0, 7.0]);

    let pair = AdditivePair::new(SquareMatrix::identity(2), rotation90()).unwrap();
    let (x, y) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
    assert_eq!(bind_pair_additive(&pair, &x, &y).unwrap().as_slice(), &[0.0, 0.0]);
    assert_eq!(bind_pair_additive(&pair, &y, &x).unwrap().as_slice(), &[0.0, 2.0]);
    assert!(bind_pair_additive(&pair, &v(&[1.0]), &y).is_err());
}

#[test]
fn additive_readback_stays_within_cross_coherence() {
    let n = 256;
    let dict = make_dictionary(n, n, DictionaryKind::GaussianNormalized, 21).unwrap();
    let a = make_random_orthogonal(n, 22).unwrap();
    let b = make_random_orthogonal(n, 23).unwrap();
    let cx = sample_code(&dict, 4.0 / n as f64, Amplitude::ConstantOne, 24).unwrap();
    let cy = sample_code(&dict, 4.0 / n as f64, Amplitude::ConstantOne, 25).unwrap();
    let (x, y) = (encode(&dict, &cx).unwrap(), encode(&dict, &cy).unwrap());
    let r = bind_pair_additive(&AdditivePair::new(a.clone(), b.clone()).unwrap(), &x, &y).unwrap();
    let est = unbind_readback(&r, &a, &dict).unwrap();

    // coherence of {A vᵢ} ∪ {B vⱼ}, scanned directly
    let av = a.values() * dict.atoms();
    let bv = b.values() * dict.atoms();
    let all = DMatrix::from_fn(n, 2 * n, |r, c| if c < n { av[(r, c)] } else { bv[(r, c - n)] });
    let gram = all.transpose() * &all;
    let mu = (0..2 * n)
        .flat_map(|i| (0..2 * n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| gram[(i, j)].abs())
        .fold(0.0f64, f64::max);
    let bound = mu * (cx.l1_norm() + cy.l1_norm());
    for i in 0..n {
        assert!((est.get(i) - cx.get(i)).abs() <= bound + 1e-12);
    }
}

#[test]
fn readback_special_cases() {
    let dict = make_dictionary(32, 32, DictionaryKind::OrthogonalSubset, 2).unwrap();
    let a = make_random_orthogonal(32, 6).unwrap();
    let code = sample_code(&dict, 0.3, Amplitude::Uniform { lo: -1.0, hi: 1.0 }, 7).unwrap();
    let x = encode(&dict, &code).unwrap();
    let est = unbind_readback(&a.apply(&x).unwrap(), &a, &dict).unwrap();
    for i in 0..32 {
        assert!((est.get(i) - code.get(i)).abs() <= 1e-10);
    }
    let plain = unbind_readback(&x, &SquareMatrix::identity(32), &dict).unwrap();
    assert_eq!(plain, readback(&dict, &x).unwrap());
}

#[test]
fn slot_examples() {
    let x = v(&[1.0, -1.0, 2.0]);
    assert_eq!(bind_slots(&x, &[]).unwrap(), x);
    let y = v(&[0.5, 0.5, 0.5]);
    assert_eq!(bind_slots(&x, &[(SquareMatrix::identity(3), y.clone())]).unwrap().as_slice(), &[1.5, -0.5, 2.5]);
    assert!(bind_slots(&x, &[(SquareMatrix::identity(2), v(&[1.0, 1.0]))]).is_err());
}

#[test]
fn tree_examples() {
    let mut t = TreeSpec::new(
        vec![None, Some(0), Some(0)],
        vec![None, Some(ChildRole::Left), Some(ChildRole::Right)],
    )
    .unwrap();
    t.payload.insert(1, vec![1.0, 0.0]);
    t.payload.insert(2, vec![0.0, 1.0]);
    let m2 = SquareMatrix::general(DMatrix::identity(2, 2) * 2.0).unwrap();
    let binding = TreeBinding::new(SquareMatrix::identity(2), m2).unwrap();
    assert_eq!(bind_tree(&binding, &t).unwrap()[0].as_slice(), &[1.0, 2.0]);

    // one child contributes only its own term
    let mut single = TreeSpec::new(vec![None, Some(0)], vec![None, Some(ChildRole::Right)]).unwrap();
    single.payload.insert(1, vec![3.0, 1.0]);
    assert_eq!(bind_tree(&binding, &single).unwrap()[0].as_slice(), &[6.0, 2.0]);

    // a cycle and a missing payload are both rejected
    assert!(TreeSpec::new(vec![Some(1), Some(0)], vec![Some(ChildRole::Left), Some(ChildRole::Left)]).is_err());
    let bare = TreeSpec::new(vec![None], vec![None]).unwrap();
    assert!(bind_tree(&binding, &bare).is_err());
}

fn complete_tree_min_distance(depth: u32, seed: u64) -> f64 {
    let mut tree = TreeSpec::complete(depth);
    let dim = tree.leaves().len().max(2);
    for (k, leaf) in tree.leaves().into_iter().enumerate() {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        tree.payload.insert(leaf, e);
    }
    let binding = TreeBinding::new(
        make_random_orthogonal(dim, seed).unwrap(),
        make_random_orthogonal(dim, seed + 1).unwrap(),
    )
    .unwrap();
    let reps = bind_tree(&binding, &tree).unwrap();
    let mut min = f64::INFINITY;
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            min = min.min((&reps[i] - &reps[j]).norm());
        }
    }
    min
}

#[test]
fn depth_three_tree_nodes_are_distinct() {
    assert_eq!(TreeSpec::complete(3).node_count(), 15);
    assert!(complete_tree_min_distance(3, 40) > 1e-6);
}

#[test]
fn outer_examples() {
    let r = bind_outer(&v(&[1.0, 0.0]), &v(&[0.0, 2.0])).unwrap();
    assert_eq!(r.values(), &DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]));
    assert_eq!(r.kind(), MatrixKind::General);
    let (x, y) = (v(&[1.0, 2.0, 0.5]), v(&[-1.0, 0.0, 3.0]));
    let diff = bind_outer(&x, &y).unwrap().values() - bind_outer(&y, &x).unwrap().values();
    assert!(diff.amax() > 0.0);
    assert!(matches!(unbind_outer(&r, &v(&[0.0, 0.0])), Err(Error::DegenerateCue(_))));

    let (x1, x2) = (v(&[1.0, 2.0, 3.0]), v(&[-4.0, 0.5, 1.0]));
    let (y1, y2) = (v(&[1.0, 0.0, 0.0]), v(&[0.0, 0.6, 0.8]));
    let sum = bind_outer(&x1, &y1).unwrap().values() + bind_outer(&x2, &y2).unwrap().values();
    let got = unbind_outer(&SquareMatrix::general(sum).unwrap(), &y1).unwrap();
    assert!((got - x1).amax() <= 1e-15);
}

#[test]
fn hrr_identities() {
    let y = v(&[0.3, -1.2, 2.0, 0.7, 5.0]);
    let mut d0 = Vector::zeros(5);
    d0[0] = 1.0;
    let mut d1 = Vector::zeros(5);
    d1[1] = 1.0;
    assert!((bind_hrr(&d0, &y).unwrap() - &y).amax() <= 1e-12);
    let shifted = bind_hrr(&d1, &y).unwrap();
    for k in 0..5 {
        assert!((shifted[k] - y[(k + 4) % 5]).abs() <= 1e-12);
    }
    for mode in [HrrUnbind::Correlation, HrrUnbind::ExactSpectral] {
        assert!((unbind_hrr(&y, &d0, mode).unwrap() - &y).amax() <= 1e-12);
    }
    let zero = Vector::zeros(5);
    assert!(matches!(
        unbind_hrr(&y, &zero, HrrUnbind::ExactSpectral),
        Err(Error::SingularSpectrum { .. })
    ));
}

/// Correlation unbinding leaves noise of the same norm as the signal at any
/// dimension, so the relative error stays near 1; what improves with `n` is
/// the margin of the decoded vector over unrelated candidates.
#[test]
fn hrr_correlation_margin_grows_with_dimension() {
    let trials = 20;
    let distractors = 50;
    let stats: Vec<(f64, f64)> = [64usize, 256, 1024]
        .iter()
        .map(|&n| {
            let (mut err, mut margin) = (0.0, 0.0);
            for t in 0..trials {
                let mut rng = substream(77, "hrr-sweep", (n * 100 + t) as u64);
                let x = gaussian_vector(&mut rng, n).normalize();
                let y = gaussian_vector(&mut rng, n).normalize();
                let back = unbind_hrr(&bind_hrr(&x, &y).unwrap(), &y, HrrUnbind::Correlation).unwrap();
                err += (&back - &x).norm() / x.norm();
                let unit = back.normalize();
                let best_other = (0..distractors)
                    .map(|_| unit.dot(&gaussian_vector(&mut rng, n).normalize()).abs())
                    .fold(0.0f64, f64::max);
                margin += unit.dot(&x) - best_other;
            }
            (err / trials as f64, margin / trials as f64)
        })
        .collect();
    println!("hrr correlation (relative error, margin) at n = 64, 256, 1024: {stats:?}");
    assert!(stats.iter().all(|(e, _)| (0.4..1.2).contains(e)));
    assert!(stats[0].1 < stats[1].1 && stats[1].1 < stats[2].1, "{stats:?}");
}

#[test]
fn binary_examples() {
    let x = BinaryVector::parse("1010").unwrap();
    let y = BinaryVector::parse("0011").unwrap();
    let p = Permutation::cyclic_shift(4, 1);
    assert_eq!(p.apply(&y).unwrap().to_string(), "1001");
    let r = bind_binary(&x, &y, &p).unwrap();
    assert_eq!(r.to_string(), "0011");
    assert_eq!(unbind_binary(&r, &y, KnownSide::Second, &p).unwrap(), x);
    assert_eq!(unbind_binary(&r, &x, KnownSide::First, &p).unwrap(), y);

    let zero = BinaryVector::zeros(4);
    assert_eq!(bind_binary(&x, &zero, &p).unwrap(), x);
    assert_eq!(unbind_binary(&x, &zero, KnownSide::Second, &p).unwrap(), x);
    assert!(bind_binary(&x, &BinaryVector::zeros(5), &p).is_err());
    assert!(Permutation::new(vec![0, 0, 1]).is_err());
    assert!(BinaryVector::parse("10a1").is_err());
}

#[test]
fn binary_self_binding_is_nonzero() {
    let mut rng = stream(8, "self-bind");
    let p = Permutation::cyclic_shift(64, 1);
    let nonzero = (0..200)
        .filter(|_| {
            let x = BinaryVector::random(64, &mut rng);
            bind_binary(&x, &x, &p).unwrap().count_ones() > 0
        })
        .count();
    assert!(nonzero >= 199);
}

#[test]
fn binary_round_trips_are_exact() {
    let mut rng = stream(10, "binary-trials");
    for _ in 0..10_000 {
        let x = BinaryVector::random(256, &mut rng);
        let y = BinaryVector::random(256, &mut rng);
        let p = Permutation::random(256, &mut rng);
        let r = bind_binary(&x, &y, &p).unwrap();
        assert_eq!(unbind_binary(&r, &y, KnownSide::Second, &p).unwrap(), x);
        assert_eq!(unbind_binary(&r, &x, KnownSide::First, &p).unwrap(), y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hrr_matches_direct_definition(seed in 0u64..100_000, n in 1usize..80) {
        let mut rng = substream(seed, "hrr-def", n as u64);
        let x = gaussian_vector(&mut rng, n);
        let y = gaussian_vector(&mut rng, n);
        let fast = bind_hrr(&x, &y).unwrap();
        prop_assert!((&fast - naive_convolution(&x, &y)).amax() <= 1e-9);
        prop_assert!((&fast - bind_hrr(&y, &x).unwrap()).amax() <= 1e-12);
        let back = unbind_hrr(&fast, &y, HrrUnbind::ExactSpectral).unwrap();
        prop_assert!((back - &x).amax() <= 1e-9);
        let corr = unbind_hrr(&fast, &y, HrrUnbind::Correlation).unwrap();
        let y_inv = Vector::from_fn(n, |j, _| y[(n - j) % n]);
        prop_assert!((corr - naive_convolution(&fast, &y_inv)).amax() <= 1e-9);
    }

    #[test]
    fn outer_round_trip_and_bilinearity(seed in 0u64..100_000, n in 1usize..24) {
        let mut rng = substream(seed, "outer", n as u64);
        let x1 = gaussian_vector(&mut rng, n);
        let x2 = gaussian_vector(&mut rng, n);
        let y = gaussian_vector(&mut rng, n);
        let r = bind_outer(&x1, &y).unwrap();
        let back = unbind_outer(&r, &y).unwrap();
        prop_assert!((&back - &x1).norm() <= 1e-10 * x1.norm().max(1e-300));
        let lhs = bind_outer(&(&x1 + &x2), &y).unwrap();
        let rhs = r.values() + bind_outer(&x2, &y).unwrap().values();
        prop_assert!((lhs.values() - rhs).amax() <= 1e-12);
    }

    #[test]
    fn additive_binding_is_ordered_and_linear(seed in 0u64..100_000, n in 2usize..24) {
        let mut rng = substream(seed, "additive", n as u64);
        let pair = AdditivePair::new(
            make_random_orthogonal(n, seed).unwrap(),
            make_random_orthogonal(n, seed + 1).unwrap(),
        ).unwrap();
        let x = gaussian_vector(&mut rng, n);
        let x2 = gaussian_vector(&mut rng, n);
        let y = gaussian_vector(&mut rng, n);
        let xy = bind_pair_additive(&pair, &x, &y).unwrap();
        prop_assert!((&xy - bind_pair_additive(&pair, &y, &x).unwrap()).norm() > 1e-9);
        let sum = bind_pair_additive(&pair, &(&x + &x2), &y).unwrap();
        let parts = &xy + bind_pair_additive(&pair, &x2, &Vector::zeros(n)).unwrap();
        prop_assert!((sum - parts).amax() <= 1e-10);
        let slots = vec![(pair.a.clone(), y.clone()), (pair.b.clone(), x2.clone())];
        let s1 = bind_slots(&x, &slots).unwrap();
        let s2 = bind_slots(&(&x * 2.0), &[(pair.a.clone(), &y * 2.0), (pair.b.clone(), &x2 * 2.0)]).unwrap();
        prop_assert!((s1 * 2.0 - s2).amax() <= 1e-10);
    }

    #[test]
    fn orthogonal_matrices_are_isometries(seed in 0u64..100_000, n in 1usize..40) {
        let q = make_random_orthogonal(n, seed).unwrap();
        let mut rng = substream(seed, "iso", 0);
        let x = gaussian_vector(&mut rng, n);
        prop_assert!((q.apply(&x).unwrap().norm() - x.norm()).abs() <= 1e-10);
        prop_assert!(orthogonality_defect(q.values()) <= 1e-9);
    }

    #[test]
    fn tree_representations_are_distinct(seed in 0u64..10_000, depth in 1u32..=4) {
        prop_assert!(complete_tree_min_distance(depth, seed) > 1e-6);
    }

    #[test]
    fn tree_binding_is_linear_in_payloads(seed in 0u64..10_000) {
        let mut rng = substream(seed, "tree-linear", 0);
        let dim = 6;
        let binding = TreeBinding::new(
            SquareMatrix::general(gaussian_matrix(&mut rng, dim, dim)).unwrap(),
            SquareMatrix::general(gaussian_matrix(&mut rng, dim, dim)).unwrap(),
        ).unwrap();
        let mut a = TreeSpec::complete(2);
        let mut b = a.clone();
        let mut sum = a.clone();
        for leaf in a.leaves() {
            let pa = gaussian_vector(&mut rng, dim);
            let pb = gaussian_vector(&mut rng, dim);
            sum.payload.insert(leaf, (&pa + &pb).as_slice().to_vec());
            a.payload.insert(leaf, pa.as_slice().to_vec());
            b.payload.insert(leaf, pb.as_slice().to_vec());
        }
        let (ra, rb, rs) = (bind_tree(&binding, &a).unwrap(), bind_tree(&binding, &b).unwrap(), bind_tree(&binding, &sum).unwrap());
        for i in 0..rs.len() {
            prop_assert!((&rs[i] - &ra[i] - &rb[i]).amax() <= 1e-10 * (1.0 + rs[i].amax()));
        }
    }
}
