use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::HarnessError;
use crate::panel::{ReturnsPanel, DATE_FORMAT};

/// Fewest return rows an ingested panel may have.
pub const MIN_INGEST_ROWS: usize = 20;

/// One asset's price history.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub symbol: String,
    pub prices: BTreeMap<NaiveDate, f64>,
}

/// Reads a `date,price` CSV (header required); the symbol is the file stem.
pub fn read_prices(path: &Path) -> Result<PriceSeries, HarnessError> {
    let symbol = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| HarnessError::Data(format!("{}: cannot derive a symbol", path.display())))?
        .to_string();
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_prices(symbol, file, &path.display().to_string())
}

pub fn parse_prices(symbol: String, input: impl std::io::Read, origin: &str) -> Result<PriceSeries, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut prices = BTreeMap::new();
    for (k, rec) in rd.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| HarnessError::Data(format!("{origin}: {e}")))?;
        let bad = |msg: String| HarnessError::Data(format!("{origin} row {row}: {msg}"));
        if rec.len() < 2 {
            return Err(bad("expected date,price".into()));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), DATE_FORMAT).map_err(|e| bad(e.to_string()))?;
        let price: f64 = rec[1].trim().parse().map_err(|e| bad(format!("{:?}: {e}", &rec[1])))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(bad(format!("price must be positive, got {price}")));
        }
        if prices.insert(date, price).is_some() {
            return Err(bad(format!("duplicate date {date}")));
        }
    }
    Ok(PriceSeries { symbol, prices })
}

/// Inner-joins the series on date, takes log returns between consecutive
/// joined dates and drops rows where every return is exactly zero.
pub fn ingest_series(series: &[PriceSeries]) -> Result<ReturnsPanel, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Config("ingest needs at least one price file".into()));
    }
    let mut symbols: Vec<String> = Vec::new();
    for s in series {
        if symbols.contains(&s.symbol) {
            return Err(HarnessError::Data(format!("symbol {} appears twice", s.symbol)));
        }
        symbols.push(s.symbol.clone());
    }
    let dates: Vec<NaiveDate> = series[0]
        .prices
        .keys()
        .filter(|d| series[1..].iter().all(|s| s.prices.contains_key(d)))
        .copied()
        .collect();
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for w in dates.windows(2) {
        let row: Vec<f64> = series.iter().map(|s| (s.prices[&w[1]] / s.prices[&w[0]]).ln()).collect();
        if row.iter().all(|&r| r == 0.0) {
            continue;
        }
        stamps.push(w[1]);
        values.extend(row);
    }
    if stamps.len() < MIN_INGEST_ROWS {
        return Err(HarnessError::Data(format!(
            "only {} return rows after joining {} series; need {MIN_INGEST_ROWS}",
            stamps.len(),
            series.len()
        )));
    }
    Ok(ReturnsPanel::new(stamps, symbols, values)?)
}

pub fn ingest(paths: &[PathBuf]) -> Result<ReturnsPanel, HarnessError> {
    let series = paths.iter().map(|p| read_prices(p)).collect::<Result<Vec<_>, _>>()?;
    ingest_series(&series)
}

/// Drops all-zero rows; a no-op on ingested panels.
pub fn drop_zero_rows(panel: &ReturnsPanel) -> ReturnsPanel {
    let zero = panel.zero_rows();
    if zero.is_empty() {
        return panel.clone();
    }
    let keep: Vec<usize> = (0..panel.len()).filter(|t| zero.binary_search(t).is_err()).collect();
    let stamps = keep.iter().map(|&t| panel.timestamps()[t]).collect();
    let values = keep.iter().flat_map(|&t| panel.row(t).to_vec()).collect();
    ReturnsPanel::new(stamps, panel.symbols().to_vec(), values).expect("subset of a valid panel")
}
