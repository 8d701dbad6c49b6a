use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, ModelKind};
use super::ingest::{drop_zero_rows, ingest};
use super::rank::{rank_report, PortfolioScores, RankTable};
use super::split::{split, Split, SplitRatios};
use super::HarnessError;
use crate::baselines::{constant_forecast, dcc_fit_forecast, ewma_forecast};
use crate::covparam::{covariance, gaussian_loglik, CovarianceMatrix, LowerCholesky};
use crate::panel::ReturnsPanel;
use crate::vhvm::{forecast_factors, train, VhvmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    /// Sum of `per_step_ll`; absent when the model failed.
    pub cumulative_ll: Option<f64>,
    pub per_step_ll: Vec<f64>,
    pub error: Option<String>,
    /// Fitted parameters or training log.
    pub details: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    /// Symbols joined by `", "`.
    pub portfolio: String,
    pub symbols: Vec<String>,
    pub rows: SegmentSizes,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub models: Vec<ModelOutcome>,
}

impl PortfolioReport {
    pub fn scores(&self) -> PortfolioScores {
        PortfolioScores {
            portfolio: self.portfolio.clone(),
            scores: self
                .models
                .iter()
                .map(|m| (m.model.key().to_string(), m.cumulative_ll))
                .collect(),
        }
    }

    /// `SYM1, SYM2 | VHVM -1013.489 | DCC-GARCH -1020.100 | ...`
    pub fn table_row(&self) -> String {
        let mut s = self.portfolio.clone();
        for m in &self.models {
            match m.cumulative_ll {
                Some(v) => s.push_str(&format!(" | {} {v:.3}", m.model.label())),
                None => s.push_str(&format!(" | {} failed", m.model.label())),
            }
        }
        s
    }
}

/// Deterministic experiment results; wall-clock data lives in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub include_2pi: bool,
    pub split: SplitRatios,
    pub portfolios: Vec<PortfolioReport>,
    pub ranks: RankTable,
}

impl EvalReport {
    pub fn format_table(&self) -> String {
        let mut s = String::new();
        for p in &self.portfolios {
            s.push_str(&p.table_row());
            s.push('\n');
        }
        s.push('\n');
        s.push_str(&self.ranks.format());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioForecasts {
    pub portfolio: String,
    pub timestamps: Vec<NaiveDate>,
    /// One covariance per test row, keyed by model.
    pub models: BTreeMap<String, Vec<CovarianceMatrix>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTiming {
    pub portfolio: String,
    pub seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub portfolios: Vec<PortfolioTiming>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    pub forecasts: Vec<PortfolioForecasts>,
    pub timings: Timings,
}

impl ExperimentOutput {
    /// Writes `report.json`, `forecasts.json` and `timings.json`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_json(&dir.join("report.json"), &self.report)?;
        write_json(&dir.join("forecasts.json"), &self.forecasts)?;
        write_json(&dir.join("timings.json"), &self.timings)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Loads the configured data source as a filtered returns panel.
pub fn load_panel(cfg: &ExperimentConfig) -> Result<ReturnsPanel, HarnessError> {
    match &cfg.data {
        DataSource::Prices { paths } => ingest(paths),
        DataSource::Panel { path } => Ok(drop_zero_rows(&ReturnsPanel::load_csv(path).map_err(|e| match e {
            crate::panel::PanelError::Io(io) => HarnessError::io(path, io),
            other => HarnessError::Panel(other),
        })?)),
        DataSource::Simulate { spec } => Ok(spec.simulate(cfg.seed)?.returns),
    }
}

/// Portfolio panels in configuration order.
pub fn portfolio_panels(cfg: &ExperimentConfig, panel: &ReturnsPanel) -> Result<Vec<ReturnsPanel>, HarnessError> {
    if cfg.portfolios.is_empty() {
        return Ok(vec![panel.clone()]);
    }
    cfg.portfolios
        .iter()
        .map(|syms| panel.select(syms).map_err(HarnessError::from))
        .collect()
}

struct Forecast {
    factors: Vec<LowerCholesky>,
    covs: Vec<CovarianceMatrix>,
    details: Option<serde_json::Value>,
}

fn from_covariances(covs: Vec<CovarianceMatrix>, details: Option<serde_json::Value>) -> Result<Forecast, String> {
    let factors = covs
        .iter()
        .map(LowerCholesky::from_covariance)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(Forecast {
        factors,
        covs,
        details,
    })
}

fn forecast_model(kind: ModelKind, s: &Split, warmup: &ReturnsPanel, cfg: &ExperimentConfig) -> Result<Forecast, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match kind {
        ModelKind::Vhvm => {
            let mut model = VhvmModel::new(cfg.vhvm.model_config(s.train.n()), cfg.seed).map_err(|e| err(&e))?;
            let train_cfg = crate::vhvm::TrainConfig {
                seed: cfg.seed,
                ..cfg.vhvm.train.clone()
            };
            let log = train(&mut model, &s.train, &s.valid, &train_cfg).map_err(|e| err(&e))?;
            let factors = forecast_factors(&model, &s.test, warmup).map_err(|e| err(&e))?;
            let covs = factors
                .iter()
                .map(covariance)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(&e))?;
            Ok(Forecast {
                factors,
                covs,
                details: Some(serde_json::to_value(&log).map_err(|e| err(&e))?),
            })
        }
        ModelKind::Dcc => {
            let (fit, covs) = dcc_fit_forecast(&s.train, warmup, &s.test).map_err(|e| err(&e))?;
            from_covariances(covs, Some(serde_json::to_value(&fit).map_err(|e| err(&e))?))
        }
        ModelKind::Ewma => {
            let covs = ewma_forecast(&s.train, warmup, &s.test, cfg.ewma_lambda).map_err(|e| err(&e))?;
            from_covariances(covs, Some(serde_json::json!({ "lambda": cfg.ewma_lambda })))
        }
        ModelKind::Constant => {
            let c = constant_forecast(&s.train).map_err(|e| err(&e))?;
            from_covariances(vec![c; s.test.len()], None)
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Fits every configured model on one portfolio and scores its test window.
/// Model failures are recorded, not propagated.
pub fn run_portfolio(
    panel: &ReturnsPanel,
    cfg: &ExperimentConfig,
) -> Result<(PortfolioReport, PortfolioForecasts, PortfolioTiming), HarnessError> {
    let s = split(panel, &cfg.split)?;
    let warmup = s.warmup();
    let name = panel.symbols().join(", ");
    let mut outcomes = Vec::new();
    let mut forecasts = BTreeMap::new();
    let mut seconds = BTreeMap::new();
    for &kind in &cfg.models {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| forecast_model(kind, &s, &warmup, cfg)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(p))));
        let scored = result.and_then(|f| {
            let steps = s
                .test
                .rows()
                .zip(&f.factors)
                .map(|(r, l)| gaussian_loglik(r, l, cfg.include_2pi))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| e.to_string())?;
            Ok((f, steps))
        });
        seconds.insert(kind.key().to_string(), start.elapsed().as_secs_f64());
        let outcome = match scored {
            Ok((f, steps)) => {
                forecasts.insert(kind.key().to_string(), f.covs);
                ModelOutcome {
                    model: kind,
                    cumulative_ll: Some(steps.iter().sum()),
                    per_step_ll: steps,
                    error: None,
                    details: f.details,
                }
            }
            Err(e) => {
                log::warn!("{name}: {} failed: {e}", kind.key());
                ModelOutcome {
                    model: kind,
                    cumulative_ll: None,
                    per_step_ll: Vec::new(),
                    error: Some(e),
                    details: None,
                }
            }
        };
        outcomes.push(outcome);
    }
    let report = PortfolioReport {
        portfolio: name.clone(),
        symbols: panel.symbols().to_vec(),
        rows: SegmentSizes {
            train: s.train.len(),
            valid: s.valid.len(),
            test: s.test.len(),
        },
        test_start: s.test.timestamps()[0],
        test_end: *s.test.timestamps().last().expect("non-empty test"),
        models: outcomes,
    };
    let fc = PortfolioForecasts {
        portfolio: name.clone(),
        timestamps: s.test.timestamps().to_vec(),
        models: forecasts,
    };
    Ok((
        report,
        fc,
        PortfolioTiming {
            portfolio: name,
            seconds,
        },
    ))
}

/// Runs all portfolios (in parallel) and ranks the models across them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let panel = load_panel(cfg)?;
    let panels = portfolio_panels(cfg, &panel)?;
    let results = panels
        .par_iter()
        .map(|p| run_portfolio(p, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut portfolios = Vec::new();
    let mut forecasts = Vec::new();
    let mut timing = Vec::new();
    for (r, f, t) in results {
        portfolios.push(r);
        forecasts.push(f);
        timing.push(t);
    }
    let scores: Vec<PortfolioScores> = portfolios.iter().map(PortfolioReport::scores).collect();
    let ranks = rank_report(&scores)?;
    Ok(ExperimentOutput {
        report: EvalReport {
            seed: cfg.seed,
            include_2pi: cfg.include_2pi,
            split: cfg.split,
            portfolios,
            ranks,
        },
        forecasts,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            portfolios: timing,
        },
    })
}
