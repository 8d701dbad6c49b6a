mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vhvm_core::harness::{
    drop_zero_rows, ingest, run_experiment, split, DataSource, ExperimentConfig, HarnessError, ModelKind,
    PortfolioForecasts, SplitRatios,
};

use common::random_panel;

fn write_prices(dir: &Path, symbol: &str, prices: &[f64]) -> PathBuf {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut s = String::from("date,price\n");
    for (i, p) in prices.iter().enumerate() {
        writeln!(s, "{},{p}", start + Duration::days(i as i64)).unwrap();
    }
    let path = dir.join(format!("{symbol}.csv"));
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn ingest_log_returns_and_weekend_filter() {
    let dir = tempfile::tempdir().unwrap();
    let mut a: Vec<f64> = vec![100.0, 110.0];
    let mut b: Vec<f64> = vec![50.0, 51.0];
    for i in 0..30 {
        a.push(a.last().unwrap() * (1.0 + 0.01 * ((i % 5) as f64 - 2.5)));
        b.push(b.last().unwrap() * (1.0 + 0.02 * ((i % 3) as f64 - 1.0)));
    }
    // day 2: both unchanged (dropped); day 3: only one unchanged (kept)
    a[2] = a[1];
    b[2] = b[1];
    a[3] = a[2];
    b[3] = b[2] * 1.01;
    let paths = vec![write_prices(dir.path(), "AAA", &a), write_prices(dir.path(), "BBB", &b)];
    let panel = ingest(&paths).unwrap();
    assert_eq!(panel.symbols(), ["AAA", "BBB"]);
    assert!((panel.row(0)[0] - (110.0f64 / 100.0).ln()).abs() < 1e-15);
    assert_eq!(panel.len(), 30);
    assert_eq!(panel.row(1)[0], 0.0);
    assert!(panel.zero_rows().is_empty());
    assert_eq!(drop_zero_rows(&panel), panel);

    let mut bad = a.clone();
    bad[7] = -1.0;
    let paths = vec![write_prices(dir.path(), "CCC", &bad)];
    assert!(matches!(ingest(&paths), Err(HarnessError::Data(m)) if m.contains("row")));
}

fn panel_config(dir: &Path, rows: usize, n: usize, seed: u64, models: Vec<ModelKind>) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let panel = random_panel(&mut rng, rows, n, 1.0);
    let path = dir.join("returns.csv");
    panel.save_csv(&path).unwrap();
    let mut cfg = ExperimentConfig::new(DataSource::Panel { path });
    cfg.models = models;
    cfg
}

#[test]
fn constant_baseline_matches_direct_formula_on_white_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = panel_config(dir.path(), 5000, 2, 3, vec![ModelKind::Constant]);
    let out = run_experiment(&cfg).unwrap();
    let panel = vhvm_core::panel::ReturnsPanel::load_csv(&dir.path().join("returns.csv")).unwrap();
    let s = split(&panel, &SplitRatios::default()).unwrap();
    let direct: f64 = s.test.rows().map(|r| -0.5 * r.iter().map(|x| x * x).sum::<f64>()).sum();
    let got = out.report.portfolios[0].models[0].cumulative_ll.unwrap();
    assert!((got / direct - 1.0).abs() < 0.05, "{got} vs {direct}");
}

#[test]
fn report_bytes_are_stable_and_forecasts_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = panel_config(dir.path(), 400, 3, 4, vec![ModelKind::Dcc, ModelKind::Ewma, ModelKind::Constant]);
    cfg.portfolios = vec![vec!["A0".into(), "A1".into()], vec!["A1".into(), "A2".into()], vec!["A2".into()]];
    let (d1, d2) = (dir.path().join("one"), dir.path().join("two"));
    run_experiment(&cfg).unwrap().write(&d1).unwrap();
    run_experiment(&cfg).unwrap().write(&d2).unwrap();
    for f in ["report.json", "forecasts.json"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f}");
    }
    assert!(d1.join("timings.json").exists());
    let fc: Vec<PortfolioForecasts> =
        serde_json::from_str(&std::fs::read_to_string(d1.join("forecasts.json")).unwrap()).unwrap();
    assert_eq!(fc.len(), 3);
    assert_eq!(fc[0].models["ewma"].len(), 40);
    assert!(!fc[2].models.contains_key("dcc"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["portfolios"][0]["portfolio"], "A0, A1");
    for p in report["portfolios"].as_array().unwrap() {
        for m in p["models"].as_array().unwrap() {
            if let Some(total) = m["cumulative_ll"].as_f64() {
                let sum: f64 = m["per_step_ll"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
                assert!((total - sum).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn table_rows_follow_portfolio_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = panel_config(dir.path(), 300, 2, 5, vec![ModelKind::Ewma, ModelKind::Constant]);
    let out = run_experiment(&cfg).unwrap();
    let row = out.report.portfolios[0].table_row();
    assert!(row.starts_with("A0, A1 | EWMA -"), "{row}");
    assert!(row.contains(" | Constant -"));
    assert!(out.report.format_table().contains("average rank"));
}

#[test]
fn bad_inputs_are_classified() {
    let cfg = ExperimentConfig::new(DataSource::Panel {
        path: "/nonexistent/returns.csv".into(),
    });
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.class(), vhvm_core::harness::ErrorClass::Data);
    let dir = tempfile::tempdir().unwrap();
    let cfg = panel_config(dir.path(), 50, 2, 1, vec![ModelKind::Constant]);
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Data(_))));
}
