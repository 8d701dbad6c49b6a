use serde::{Deserialize, Serialize};

use super::optim::NelderMead;
use super::BaselineError;

/// GARCH(1,1): `sigma2_t = omega + alpha r_{t-1}^2 + beta sigma2_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Result<Self, BaselineError> {
        let p = Self { omega, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let ok = self.omega.is_finite()
            && self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(BaselineError::InvalidParams(format!("{self:?}")))
        }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `omega / (1 - alpha - beta)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    pub fn next_variance(&self, r_prev: f64, sigma2_prev: f64) -> f64 {
        self.omega + self.alpha * r_prev * r_prev + self.beta * sigma2_prev
    }

    /// Maps `u = (log omega, logit(s / MAX_PERSISTENCE), logit w)` to
    /// `alpha = s w`, `beta = s (1 - w)`; every `u` gives a stationary model.
    pub fn from_unconstrained(u: &[f64]) -> Self {
        let s = MAX_PERSISTENCE * logistic(u[1]);
        let w = logistic(u[2]);
        Self {
            omega: u[0].exp(),
            alpha: s * w,
            beta: s * (1.0 - w),
        }
    }

    pub fn to_unconstrained(&self) -> [f64; 3] {
        let s = self.persistence();
        let w = if s > 0.0 { self.alpha / s } else { 0.5 };
        [self.omega.ln(), logit(s / MAX_PERSISTENCE), logit(w)]
    }
}

/// Upper bound on `alpha + beta` reachable through the unconstrained map.
pub const MAX_PERSISTENCE: f64 = 1.0 - 1e-6;

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Conditional variances `sigma2_1..sigma2_T` with `sigma2_1 = sigma0_sq`.
/// `sigma2_t` depends only on returns before `t`.
pub fn garch_filter(params: &GarchParams, returns: &[f64], sigma0_sq: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut s2 = sigma0_sq;
    for t in 0..returns.len() {
        if t > 0 {
            s2 = params.next_variance(returns[t - 1], s2);
        }
        out.push(s2);
    }
    out
}

/// Gaussian quasi log likelihood `sum -1/2 (log sigma2_t + r_t^2 / sigma2_t)`.
pub fn garch_loglik(params: &GarchParams, returns: &[f64], sigma0_sq: f64) -> f64 {
    let mut s2 = sigma0_sq;
    let mut ll = 0.0;
    for (t, &r) in returns.iter().enumerate() {
        if t > 0 {
            s2 = params.next_variance(returns[t - 1], s2);
        }
        ll -= 0.5 * (s2.ln() + r * r / s2);
    }
    ll
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Variance the recursion starts from (sample variance of the fit data).
    pub sigma0_sq: f64,
    pub loglik: f64,
    pub converged: bool,
}

pub const GARCH_MIN_LEN: usize = 100;

/// Maximum likelihood GARCH(1,1) by multi-start Nelder–Mead over the
/// unconstrained parameterization.
pub fn garch_fit(returns: &[f64]) -> Result<GarchFit, BaselineError> {
    if returns.len() < GARCH_MIN_LEN {
        return Err(BaselineError::TooShort {
            need: GARCH_MIN_LEN,
            got: returns.len(),
        });
    }
    if let Some(t) = returns.iter().position(|r| !r.is_finite()) {
        return Err(BaselineError::InvalidData(format!("non-finite return at {t}")));
    }
    let var = sample_variance(returns);
    if !(var > 0.0) {
        return Err(BaselineError::InvalidData("series has zero variance".into()));
    }
    let sigma0_sq = var;
    let objective = |u: &[f64]| -garch_loglik(&GarchParams::from_unconstrained(u), returns, sigma0_sq);
    let mut starts = Vec::new();
    for s in [0.5, 0.9, 0.98] {
        for w in [0.05, 0.2] {
            let p = GarchParams {
                omega: var * (1.0 - s),
                alpha: s * w,
                beta: s * (1.0 - w),
            };
            starts.push(p.to_unconstrained().to_vec());
        }
    }
    let best = NelderMead::default().minimize_multi(objective, &starts);
    let params = GarchParams::from_unconstrained(&best.x);
    if !best.converged {
        log::warn!("garch_fit: optimizer stopped before converging ({} evaluations)", best.evals);
    }
    Ok(GarchFit {
        params,
        sigma0_sq,
        loglik: -best.fx,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_hand_example() {
        let p = GarchParams::new(0.1, 0.1, 0.8).unwrap();
        assert!((p.next_variance(1.0, 1.0) - 1.0).abs() < 1e-15);
        let s = garch_filter(&p, &[1.0, 2.0, 0.0], 1.0);
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 1.0).abs() < 1e-15);
        assert!((s[2] - (0.1 + 0.4 + 0.8)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_recursion_is_constant() {
        let p = GarchParams::new(0.3, 0.0, 0.0).unwrap();
        let s = garch_filter(&p, &[5.0, -1.0, 2.0, 0.1], 9.0);
        assert!(s[1..].iter().all(|&v| v == 0.3));
    }

    #[test]
    fn param_validation_and_transform() {
        assert!(GarchParams::new(0.0, 0.1, 0.1).is_err());
        assert!(GarchParams::new(0.1, 0.5, 0.5).is_err());
        assert!(GarchParams::new(0.1, -0.1, 0.5).is_err());
        let p = GarchParams::new(0.05, 0.1, 0.85).unwrap();
        let q = GarchParams::from_unconstrained(&p.to_unconstrained());
        assert!((q.omega - 0.05).abs() < 1e-14 && (q.alpha - 0.1).abs() < 1e-12 && (q.beta - 0.85).abs() < 1e-12);
        for u in [[-30.0, 40.0, -40.0], [5.0, -40.0, 3.0], [0.0, 0.0, 0.0]] {
            let p = GarchParams::from_unconstrained(&u);
            assert!(p.alpha >= 0.0 && p.beta >= 0.0 && p.persistence() < 1.0 && p.validate().is_ok() && p.omega > 0.0);
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(garch_fit(&[0.1; 50]), Err(BaselineError::TooShort { .. })));
    }
}
