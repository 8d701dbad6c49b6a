use nalgebra::DMatrix;

use vhvm_core::baselines::GarchParams;
use vhvm_core::simlab::{simulate_factor_sv, simulate_garch, ArLogVariance, FactorSvConfig};

fn frozen(level: f64) -> ArLogVariance {
    ArLogVariance {
        mu: level,
        phi: 0.0,
        sigma: 0.0,
    }
}

#[test]
fn white_noise_garch_has_variance_omega() {
    let p = GarchParams::new(0.3, 0.0, 0.0).unwrap();
    let r = simulate_garch(&p, 100_000, 5).unwrap().returns;
    let v = r.values().iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
    assert!((v / 0.3 - 1.0).abs() < 0.03, "{v}");
}

#[test]
fn garch_squared_returns_cluster() {
    let p = GarchParams::new(0.05, 0.10, 0.85).unwrap();
    let r = simulate_garch(&p, 50_000, 6).unwrap().returns;
    let sq: Vec<f64> = r.values().iter().map(|x| x * x).collect();
    let mean = sq.iter().sum::<f64>() / sq.len() as f64;
    let var: f64 = sq.iter().map(|s| (s - mean).powi(2)).sum();
    let cov: f64 = sq.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    assert!(cov / var > 0.0, "{}", cov / var);
}

#[test]
fn frozen_state_sample_covariance_matches_truth() {
    let cfg = FactorSvConfig {
        n: 3,
        m: 1,
        loadings: vec![1.0, 0.6, 1.4],
        idiosyncratic: vec![frozen(-1.0), frozen(-0.5), frozen(-1.5)],
        factors: vec![frozen(0.2)],
        len: 200_000,
        seed: 13,
    };
    let out = simulate_factor_sv(&cfg).unwrap();
    let truth = &out.true_cov[0];
    assert!(out.true_cov.iter().all(|c| c == truth));
    let s = out.returns.sample_covariance();
    for i in 0..3 {
        for j in 0..3 {
            let want = truth.get(i, j);
            assert!((s[i * 3 + j] / want - 1.0).abs() < 0.02, "({i},{j}) {} vs {want}", s[i * 3 + j]);
        }
    }
}

#[test]
fn log_variance_mean_is_stationary_mean() {
    let ar = ArLogVariance {
        mu: -0.4,
        phi: 0.9,
        sigma: 0.3,
    };
    let cfg = FactorSvConfig {
        n: 2,
        m: 1,
        loadings: vec![0.0, 0.0],
        idiosyncratic: vec![ar, ar],
        factors: vec![ar],
        len: 100_000,
        seed: 21,
    };
    let out = simulate_factor_sv(&cfg).unwrap();
    let mean = out.true_cov.iter().map(|c| c.get(0, 0).ln()).sum::<f64>() / out.true_cov.len() as f64;
    let want = ar.stationary_mean();
    assert!((mean / want - 1.0).abs() < 0.02, "{mean} vs {want}");
}

#[test]
fn simulators_are_seeded_and_spd() {
    let cfg = FactorSvConfig::standard(4, 2, 500, 9);
    let a = simulate_factor_sv(&cfg).unwrap();
    let b = simulate_factor_sv(&cfg).unwrap();
    assert_eq!(a.returns, b.returns);
    assert_eq!(a.true_cov, b.true_cov);
    for c in &a.true_cov {
        assert!(DMatrix::from_row_slice(4, 4, c.data()).cholesky().is_some());
    }
    let other = simulate_factor_sv(&FactorSvConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.returns, other.returns);
}

#[test]
fn sim_output_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_factor_sv(&FactorSvConfig::standard(3, 1, 50, 1)).unwrap();
    out.write(dir.path()).unwrap();
    let panel = vhvm_core::panel::ReturnsPanel::load_csv(&dir.path().join("returns.csv")).unwrap();
    assert_eq!(panel, out.returns);
    let cov = vhvm_core::simlab::SimOutput::read_true_cov(&dir.path().join("true_cov.jsonl")).unwrap();
    assert_eq!(cov, out.true_cov);
}
