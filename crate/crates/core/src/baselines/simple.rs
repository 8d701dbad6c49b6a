use super::BaselineError;
use crate::covparam::CovarianceMatrix;
use crate::linalg;
use crate::panel::ReturnsPanel;

pub const DEFAULT_EWMA_LAMBDA: f64 = 0.94;
pub const CONSTANT_JITTER: f64 = 1e-8;

/// Sample covariance of `train`, symmetrized, with `1e-8 I` added when it is
/// not positive definite.
pub fn constant_forecast(train: &ReturnsPanel) -> Result<CovarianceMatrix, BaselineError> {
    let n = train.n();
    if train.len() < n + 1 {
        return Err(BaselineError::TooShort {
            need: n + 1,
            got: train.len(),
        });
    }
    let mut s = train.sample_covariance();
    linalg::symmetrize(&mut s, n);
    if !linalg::is_positive_definite(&s, n) {
        log::debug!("constant_forecast: sample covariance singular, adding jitter");
        (0..n).for_each(|i| s[i * n + i] += CONSTANT_JITTER);
    }
    CovarianceMatrix::new(n, s).map_err(|_| BaselineError::NotPositiveDefinite("jittered sample covariance".into()))
}

/// `S_1 = seed`, `S_{t+1} = lambda S_t + (1 - lambda) r_t r_t^T`; entry `t`
/// uses rows before `t`. Matrices are row-major.
pub fn ewma_path(seed: &[f64], rows: &[&[f64]], lambda: f64) -> Vec<Vec<f64>> {
    let mut s = seed.to_vec();
    let n = rows.first().map_or(0, |r| r.len());
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        out.push(s.clone());
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                s[k] = lambda * s[k] + (1.0 - lambda) * r[i] * r[j];
            }
        }
    }
    out
}

/// EWMA covariance forecasts for each row of `test`, seeded with the
/// constant forecast of `train` at the start of `warmup`.
pub fn ewma_forecast(
    train: &ReturnsPanel,
    warmup: &ReturnsPanel,
    test: &ReturnsPanel,
    lambda: f64,
) -> Result<Vec<CovarianceMatrix>, BaselineError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BaselineError::InvalidParams(format!("lambda must be in (0, 1), got {lambda}")));
    }
    let n = train.n();
    let seed = constant_forecast(train)?;
    let all = warmup.concat(test)?;
    let rows: Vec<&[f64]> = all.rows().collect();
    let path = ewma_path(seed.data(), &rows, lambda);
    path[warmup.len()..]
        .iter()
        .map(|s| {
            let mut s = s.clone();
            linalg::symmetrize(&mut s, n);
            CovarianceMatrix::new(n, s).map_err(|_| BaselineError::NotPositiveDefinite("EWMA covariance".into()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_correlated_takes_jitter_path() {
        let rows: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64 * 0.1 - 1.0, t as f64 * 0.1 - 1.0]).collect();
        let p = ReturnsPanel::from_rows(&rows).unwrap();
        assert!(!linalg::is_positive_definite(&p.sample_covariance(), 2));
        let c = constant_forecast(&p).unwrap();
        assert!((c.get(0, 0) - c.get(0, 1) - CONSTANT_JITTER).abs() < 1e-15);
        assert!(constant_forecast(&p.slice(0..2)).is_err());
    }

    #[test]
    fn ewma_geometric_limit() {
        let c = [0.5, -2.0];
        let rows: Vec<&[f64]> = vec![&c; 30];
        let seed = [1.0, 0.2, 0.2, 3.0];
        let lambda: f64 = 0.9;
        let path = ewma_path(&seed, &rows, lambda);
        for (t, s) in path.iter().enumerate() {
            let w = lambda.powi(t as i32);
            for i in 0..2 {
                for j in 0..2 {
                    let want = w * seed[i * 2 + j] + (1.0 - w) * c[i] * c[j];
                    assert!((s[i * 2 + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ewma_near_one_keeps_seed() {
        let rows: Vec<Vec<f64>> = (0..40).map(|t| vec![(t as f64).sin(), (t as f64 * 0.7).cos()]).collect();
        let p = ReturnsPanel::from_rows(&rows).unwrap();
        let seed = constant_forecast(&p.slice(0..20)).unwrap();
        let f = ewma_forecast(&p.slice(0..20), &p.slice(0..30), &p.slice(30..40), 1.0 - 1e-13).unwrap();
        assert_eq!(f.len(), 10);
        for s in f {
            for (a, b) in s.data().iter().zip(seed.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(ewma_forecast(&p.slice(0..20), &p.slice(0..30), &p.slice(30..40), 1.0).is_err());
    }
}
