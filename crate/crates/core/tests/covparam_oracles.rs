mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vhvm_core::covparam::{
    covariance, gaussian_loglik, log_det_sigma, precision, vector_to_cholesky, LatentVector,
};

use common::{dense, normal, oracle_log_det_sigma, oracle_loglik, oracle_sigma, random_cholesky};

fn naive_product(l: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                p[i * n + j] += l[i * n + k] * l[j * n + k];
            }
        }
    }
    p
}

#[test]
fn precision_matches_triple_loop_and_is_pd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let l = random_cholesky(&mut rng, n);
        let p = precision(&l);
        let want = naive_product(l.data(), n);
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let eig = dense(n, &p).symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e > 0.0), "{eig}");
    }
}

#[test]
fn log_det_matches_lu_of_inverted_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let l = random_cholesky(&mut rng, n);
        let got = log_det_sigma(&l);
        let want = oracle_log_det_sigma(&l);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn loglik_matches_inversion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let n = rng.gen_range(1..=6);
        let l = random_cholesky(&mut rng, n);
        let r: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let got = gaussian_loglik(&r, &l, false).unwrap();
        let want = oracle_loglik(&r, &l);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        let full = gaussian_loglik(&r, &l, true).unwrap();
        let c = 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        assert!((got - c - full).abs() < 1e-12);
    }
}

#[test]
fn covariance_inverts_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let l = random_cholesky(&mut rng, n);
        let sigma = dense(n, covariance(&l).unwrap().data());
        let p = dense(n, &precision(&l));
        let resid = (&sigma * &p - DMatrix::identity(n, n)).abs().max();
        assert!(resid < 1e-8, "{resid}");
        let back = sigma.clone().lu().try_inverse().unwrap();
        assert!((&back - &p).norm() <= 1e-8 * p.norm());
        let ld = oracle_sigma(&l).lu().determinant().ln();
        let diag_sum: f64 = l.diagonal().map(f64::ln).sum();
        assert!((ld + 2.0 * diag_sum).abs() < 1e-8);
    }
}

#[test]
fn extreme_latents_stay_valid() {
    let l = vector_to_cholesky(&LatentVector::new(vec![-50.0, 5.0, -50.0]).unwrap());
    for d in l.diagonal() {
        assert!(d > 0.0 && d.is_finite() && (d - 1.9287e-22).abs() < 1e-25);
    }
    assert!(covariance(&l).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn precision_is_symmetric_and_factorizes(seed in any::<u64>(), n in 1usize..=10) {
        let l = random_cholesky(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let p = precision(&l);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(p[i * n + j], p[j * n + i]);
            }
        }
        prop_assert!(dense(n, &p).cholesky().is_some());
    }

    #[test]
    fn latent_length_roundtrip(n in 1usize..40) {
        let z = LatentVector::new(vec![0.0; n * (n + 1) / 2]).unwrap();
        prop_assert_eq!(z.assets(), n);
        if n > 1 {
            prop_assert!(LatentVector::new(vec![0.0; n * (n + 1) / 2 + 1]).is_err());
        }
    }

    #[test]
    fn loglik_precision_form_matches_oracle(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_cholesky(&mut rng, n);
        let r: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut rng)).collect();
        let got = gaussian_loglik(&r, &l, false).unwrap();
        let want = oracle_loglik(&r, &l);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}
