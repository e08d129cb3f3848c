use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use voidfield::pca::{Normalization, PcaCodec, Truncation};
use voidfield::rng::rng_from_seed;

fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

#[test]
fn eigenvalues_match_covariance_eigendecomposition() {
    let x = random_matrix(50, 400, 11);
    let codec = PcaCodec::fit(&x, Normalization::None, Truncation::Components(49)).unwrap();
    let c = centered(&x);
    let cov = c.transpose() * &c / 50.0;
    let mut brute: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    brute.sort_by(|a, b| b.total_cmp(a));
    for i in 0..49 {
        let rel = (codec.eigenvalues()[i] - brute[i]).abs() / brute[i];
        assert!(rel < 1e-8, "eigenvalue {i}: {} vs {} ({rel:e})", codec.eigenvalues()[i], brute[i]);
    }
}

#[test]
fn components_are_covariance_eigenvectors() {
    let x = random_matrix(30, 60, 5);
    let codec = PcaCodec::fit(&x, Normalization::None, Truncation::Components(10)).unwrap();
    let c = centered(&x);
    let cov = c.transpose() * &c / 30.0;
    for j in 0..10 {
        let v = codec.components().column(j);
        let residual = &cov * v - v * codec.eigenvalues()[j];
        assert!(residual.norm() < 1e-10 * codec.eigenvalues()[0]);
    }
    let gram = codec.components().transpose() * codec.components();
    assert!((gram - DMatrix::identity(10, 10)).amax() < 1e-12);
}

#[test]
fn full_rank_round_trip() {
    let x = random_matrix(50, 400, 3);
    for norm in [Normalization::None, Normalization::CenterScale] {
        let codec = PcaCodec::fit(&x, norm, Truncation::Components(49)).unwrap();
        let back = codec.decode_rows(&codec.encode_rows(&x).unwrap()).unwrap();
        assert!((back - &x).amax() < 1e-9);
    }
}

#[test]
fn full_variance_fraction_keeps_every_nonzero_direction() {
    let x = random_matrix(20, 100, 8);
    let codec = PcaCodec::fit(&x, Normalization::None, Truncation::VarianceFraction(1.0)).unwrap();
    assert_eq!(codec.k(), 19);
}

fn tail_identity(x: &DMatrix<f64>, norm: Normalization, k: usize) -> (f64, f64) {
    let codec = PcaCodec::fit(x, norm, Truncation::Components(k)).unwrap();
    let back = codec.decode_rows(&codec.encode_rows(x).unwrap()).unwrap();
    let mse = (back - x).norm_squared() / x.len() as f64 / (codec.scale() * codec.scale());
    (mse, codec.tail_variance() / x.ncols() as f64)
}

#[test]
fn reconstruction_error_equals_eigenvalue_tail() {
    let x = random_matrix(50, 400, 21);
    for k in [1, 5, 20, 48] {
        for norm in [Normalization::None, Normalization::CenterScale] {
            let (mse, tail) = tail_identity(&x, norm, k);
            assert!((mse - tail).abs() <= 1e-8 * tail.max(1e-300), "k={k}: {mse} vs {tail}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tail_identity_holds(seed in any::<u64>(), n in 4usize..20, p in 5usize..40, kf in 0.0f64..1.0) {
        let x = random_matrix(n, p, seed);
        let k = 1 + ((n.min(p) - 2) as f64 * kf) as usize;
        let (mse, tail) = tail_identity(&x, Normalization::CenterScale, k);
        prop_assert!((mse - tail).abs() <= 1e-8 * tail.max(1e-12), "k={k}: {mse} vs {tail}");
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), k in 1usize..8) {
        let x = random_matrix(12, 30, seed);
        let codec = PcaCodec::fit(&x, Normalization::CenterScale, Truncation::Components(k)).unwrap();
        let once = codec.decode_rows(&codec.encode_rows(&x).unwrap()).unwrap();
        let twice = codec.decode_rows(&codec.encode_rows(&once).unwrap()).unwrap();
        prop_assert!((twice - &once).amax() < 1e-10);
    }

    #[test]
    fn explained_fraction_meets_target(seed in any::<u64>(), f in 0.05f64..1.0) {
        let x = random_matrix(15, 25, seed);
        let codec = PcaCodec::fit(&x, Normalization::None, Truncation::VarianceFraction(f)).unwrap();
        prop_assert!(codec.explained_fraction() >= f - 1e-12);
        if codec.k() > 1 {
            let total: f64 = codec.eigenvalues().iter().sum();
            let prev: f64 = codec.eigenvalues()[..codec.k() - 1].iter().sum::<f64>() / total;
            prop_assert!(prev < f);
        }
    }
}
