use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::garch::{garch_filter, garch_fit, logistic, logit, GarchFit, MAX_PERSISTENCE};
use super::optim::NelderMead;
use super::BaselineError;
use crate::covparam::CovarianceMatrix;
use crate::linalg;
use crate::panel::ReturnsPanel;

/// DCC correlation dynamics:
/// `Q_t = (1 - a - b) qbar + a e_{t-1} e_{t-1}^T + b Q_{t-1}`,
/// `R_t = diag(Q_t)^-1/2 Q_t diag(Q_t)^-1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccParams {
    pub a: f64,
    pub b: f64,
    pub qbar: Vec<Vec<f64>>,
}

impl DccParams {
    pub fn new(a: f64, b: f64, qbar: Vec<Vec<f64>>) -> Result<Self, BaselineError> {
        let p = Self { a, b, qbar };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.qbar.len()
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: String| Err(BaselineError::InvalidParams(m));
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a + self.b < 1.0) {
            return bad(format!("need a, b >= 0 and a + b < 1, got a={} b={}", self.a, self.b));
        }
        let n = self.n();
        if n == 0 || self.qbar.iter().any(|r| r.len() != n) {
            return bad("qbar must be square and non-empty".into());
        }
        for i in 0..n {
            if (self.qbar[i][i] - 1.0).abs() > 1e-12 {
                return bad(format!("qbar[{i}][{i}] = {}, expected 1", self.qbar[i][i]));
            }
            for j in 0..i {
                if self.qbar[i][j] != self.qbar[j][i] || self.qbar[i][j].abs() > 1.0 {
                    return bad(format!("qbar entry ({i}, {j}) is not a correlation"));
                }
            }
        }
        let mut flat = self.qbar_flat();
        (0..n).for_each(|i| flat[i * n + i] += 1e-12);
        if linalg::cholesky(&flat, n).is_none() {
            return bad("qbar is not positive semidefinite".into());
        }
        Ok(())
    }

    pub(crate) fn qbar_flat(&self) -> Vec<f64> {
        self.qbar.iter().flatten().copied().collect()
    }
}

/// Running `Q_t` state.
#[derive(Debug, Clone)]
pub struct DccFilter {
    n: usize,
    a: f64,
    b: f64,
    qbar: Vec<f64>,
    q: Vec<f64>,
}

impl DccFilter {
    /// Starts at `Q_1 = qbar`.
    pub fn new(params: &DccParams) -> Self {
        let qbar = params.qbar_flat();
        Self {
            n: params.n(),
            a: params.a,
            b: params.b,
            q: qbar.clone(),
            qbar,
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Current `R_t`, row-major.
    pub fn correlation(&self) -> Vec<f64> {
        let n = self.n;
        let d: Vec<f64> = (0..n).map(|i| self.q[i * n + i].sqrt()).collect();
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                r[i * n + j] = if i == j { 1.0 } else { (self.q[i * n + j] / (d[i] * d[j])).clamp(-1.0, 1.0) };
            }
        }
        r
    }

    /// Advances to `Q_{t+1}` given the standardized residual `e_t`.
    pub fn update(&mut self, e: &[f64]) {
        let (n, a, b) = (self.n, self.a, self.b);
        let c = 1.0 - a - b;
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                self.q[k] = c * self.qbar[k] + a * e[i] * e[j] + b * self.q[k];
            }
        }
    }
}

/// `sum_t -1/2 (log|R_t| + e_t^T R_t^-1 e_t)`; `-inf` if some `R_t` is not
/// positive definite.
pub fn dcc_correlation_loglik(params: &DccParams, residuals: &[Vec<f64>]) -> f64 {
    let n = params.n();
    let mut filter = DccFilter::new(params);
    let mut ll = 0.0;
    for e in residuals {
        let r = filter.correlation();
        let Some(l) = linalg::cholesky(&r, n) else {
            return f64::NEG_INFINITY;
        };
        // Solve L y = e; e^T R^-1 e = |y|^2.
        let mut y = vec![0.0; n];
        let mut logdet = 0.0;
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (e[i] - s) / l[i * n + i];
            logdet += 2.0 * l[i * n + i].ln();
        }
        ll -= 0.5 * (logdet + y.iter().map(|v| v * v).sum::<f64>());
        filter.update(e);
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccFit {
    pub symbols: Vec<String>,
    pub garch: Vec<GarchFit>,
    pub params: DccParams,
    pub correlation_loglik: f64,
    pub converged: bool,
}

/// Conditional moments along a panel; entry `t` uses only rows before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DccPath {
    pub n: usize,
    pub variances: Vec<Vec<f64>>,
    pub correlations: Vec<Vec<f64>>,
}

impl DccPath {
    pub fn covariances(&self) -> Result<Vec<CovarianceMatrix>, BaselineError> {
        let n = self.n;
        self.variances
            .iter()
            .zip(&self.correlations)
            .map(|(v, r)| {
                let d: Vec<f64> = v.iter().map(|s| s.sqrt()).collect();
                let mut cov = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        cov[i * n + j] = d[i] * r[i * n + j] * d[j];
                    }
                }
                Ok(CovarianceMatrix::new(n, cov)?)
            })
            .collect()
    }
}

fn standardized_residuals(returns: &ReturnsPanel, fits: &[GarchFit]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, t) = (returns.n(), returns.len());
    let variances: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let col: Vec<f64> = returns.rows().map(|r| r[i]).collect();
            garch_filter(&fits[i].params, &col, fits[i].sigma0_sq)
        })
        .collect();
    let by_time_var: Vec<Vec<f64>> = (0..t).map(|s| (0..n).map(|i| variances[i][s]).collect()).collect();
    let eps = returns
        .rows()
        .zip(&by_time_var)
        .map(|(r, v)| r.iter().zip(v).map(|(x, s2)| x / s2.sqrt()).collect())
        .collect();
    (by_time_var, eps)
}

/// Second-moment matrix of the residuals rescaled to unit diagonal.
fn correlation_target(eps: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; n]; n];
    for e in eps {
        for i in 0..n {
            for j in 0..n {
                s[i][j] += e[i] * e[j];
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| s[i][i].sqrt()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { s[i][j] / (d[i] * d[j]) }).collect())
        .collect()
}

fn dcc_from_unconstrained(u: &[f64], qbar: &[Vec<f64>]) -> DccParams {
    let s = MAX_PERSISTENCE * logistic(u[0]);
    let w = logistic(u[1]);
    DccParams {
        a: s * w,
        b: s * (1.0 - w),
        qbar: qbar.to_vec(),
    }
}

/// Two-stage fit: per-asset GARCH(1,1), then `(a, b)` by maximizing the
/// correlation likelihood with `qbar` targeted to the residual correlation.
pub fn dcc_fit(train: &ReturnsPanel) -> Result<DccFit, BaselineError> {
    let n = train.n();
    if n < 2 {
        return Err(BaselineError::InvalidData(format!("DCC needs >= 2 assets, got {n}")));
    }
    let garch = (0..n)
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = train.rows().map(|r| r[i]).collect();
            garch_fit(&col).map_err(|e| BaselineError::Asset {
                asset: train.symbols()[i].clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (_, eps) = standardized_residuals(train, &garch);
    let qbar = correlation_target(&eps, n);
    let objective = |u: &[f64]| -dcc_correlation_loglik(&dcc_from_unconstrained(u, &qbar), &eps);
    let mut starts = Vec::new();
    for s in [0.5, 0.9, 0.97] {
        for w in [0.03, 0.2] {
            starts.push(vec![logit(s / MAX_PERSISTENCE), logit(w)]);
        }
    }
    let best = NelderMead::default().minimize_multi(objective, &starts);
    if !best.converged {
        log::warn!("dcc_fit: optimizer stopped before converging ({} evaluations)", best.evals);
    }
    let params = dcc_from_unconstrained(&best.x, &qbar);
    params.validate()?;
    Ok(DccFit {
        symbols: train.symbols().to_vec(),
        garch,
        params,
        correlation_loglik: -best.fx,
        converged: best.converged,
    })
}

impl DccFit {
    /// Runs both recursions from their starting values over `panel`.
    pub fn filter(&self, panel: &ReturnsPanel) -> DccPath {
        let n = panel.n();
        let (variances, eps) = standardized_residuals(panel, &self.garch);
        let mut f = DccFilter::new(&self.params);
        let mut correlations = Vec::with_capacity(eps.len());
        for e in &eps {
            correlations.push(f.correlation());
            f.update(e);
        }
        DccPath {
            n,
            variances,
            correlations,
        }
    }
}

/// Fits on `train`, filters through `warmup` (everything before the test
/// window) and returns one-step-ahead covariances for each test row.
pub fn dcc_fit_forecast(
    train: &ReturnsPanel,
    warmup: &ReturnsPanel,
    test: &ReturnsPanel,
) -> Result<(DccFit, Vec<CovarianceMatrix>), BaselineError> {
    let fit = dcc_fit(train)?;
    let all = warmup.concat(test)?;
    let path = fit.filter(&all);
    let covs = path.covariances()?;
    Ok((fit, covs[warmup.len()..].to_vec()))
}
