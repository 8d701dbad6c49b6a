//! Dated panels of asset log returns.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Days, NaiveDate};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("panel needs at least one symbol")]
    NoSymbols,
    #[error("{values} values do not fill {rows} rows of {cols} assets")]
    Shape { rows: usize, cols: usize, values: usize },
    #[error("timestamps not strictly increasing at row {0}")]
    Unordered(usize),
    #[error("non-finite return at row {row}, asset {col}")]
    NonFinite { row: usize, col: usize },
    #[error("panels do not line up: {0}")]
    Incompatible(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad csv record {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `T x n` log returns, row-major, one row per timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    timestamps: Vec<NaiveDate>,
    symbols: Vec<String>,
    values: Vec<f64>,
}

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// First date assigned to undated panels.
pub fn synthetic_origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

impl ReturnsPanel {
    pub fn new(timestamps: Vec<NaiveDate>, symbols: Vec<String>, values: Vec<f64>) -> Result<Self, PanelError> {
        let n = symbols.len();
        if n == 0 {
            return Err(PanelError::NoSymbols);
        }
        if values.len() != timestamps.len() * n {
            return Err(PanelError::Shape {
                rows: timestamps.len(),
                cols: n,
                values: values.len(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(PanelError::Unordered(i + 1));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(PanelError::NonFinite { row: k / n, col: k % n });
        }
        Ok(Self {
            timestamps,
            symbols,
            values,
        })
    }

    /// Panel with consecutive daily dates from [`synthetic_origin`] and
    /// symbols `A0, A1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PanelError> {
        let n = rows.first().map_or(0, Vec::len);
        let symbols = (0..n).map(|i| format!("A{i}")).collect();
        let mut values = Vec::with_capacity(rows.len() * n);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(PanelError::Shape {
                    rows: t + 1,
                    cols: n,
                    values: values.len() + r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_values(symbols, values)
    }

    /// Like [`ReturnsPanel::new`] with synthetic consecutive dates.
    pub fn from_values(symbols: Vec<String>, values: Vec<f64>) -> Result<Self, PanelError> {
        let n = symbols.len().max(1);
        let t = values.len() / n;
        Self::new(synthetic_dates(t), symbols, values)
    }

    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.n();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n())
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let n = self.n();
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            symbols: self.symbols.clone(),
            values: self.values[range.start * n..range.end * n].to_vec(),
        }
    }

    /// Appends `later` after `self`; symbols must match and dates must
    /// continue increasing.
    pub fn concat(&self, later: &Self) -> Result<Self, PanelError> {
        if self.symbols != later.symbols {
            return Err(PanelError::Incompatible(format!(
                "symbols {:?} vs {:?}",
                self.symbols, later.symbols
            )));
        }
        let mut timestamps = self.timestamps.clone();
        timestamps.extend_from_slice(&later.timestamps);
        let mut values = self.values.clone();
        values.extend_from_slice(&later.values);
        Self::new(timestamps, self.symbols.clone(), values)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select(&self, symbols: &[String]) -> Result<Self, PanelError> {
        let idx = symbols
            .iter()
            .map(|s| {
                self.symbols
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| PanelError::Incompatible(format!("unknown symbol {s}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let values = self.rows().flat_map(|r| idx.iter().map(move |&i| r[i])).collect();
        Self::new(self.timestamps.clone(), symbols.to_vec(), values)
    }

    /// Rows whose returns are all exactly zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        self.rows()
            .enumerate()
            .filter(|(_, r)| r.iter().all(|&v| v == 0.0))
            .map(|(t, _)| t)
            .collect()
    }

    /// Per-asset root mean square.
    pub fn rms(&self) -> Vec<f64> {
        let n = self.n();
        let mut acc = vec![0.0; n];
        for r in self.rows() {
            acc.iter_mut().zip(r).for_each(|(a, v)| *a += v * v);
        }
        let t = self.len().max(1) as f64;
        acc.into_iter().map(|a| (a / t).sqrt()).collect()
    }

    /// Sample covariance (denominator `T - 1`), row-major.
    pub fn sample_covariance(&self) -> Vec<f64> {
        let (n, t) = (self.n(), self.len());
        let mut mean = vec![0.0; n];
        for r in self.rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        let mut cov = vec![0.0; n * n];
        for r in self.rows() {
            for i in 0..n {
                for j in 0..=i {
                    cov[i * n + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        let denom = (t.max(2) - 1) as f64;
        for i in 0..n {
            for j in 0..=i {
                let v = cov[i * n + j] / denom;
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }
        cov
    }

    /// `date,SYM1,SYM2,...` with full-precision floats.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.symbols.iter().cloned());
        w.write_record(&header)?;
        for (t, r) in self.rows().enumerate() {
            let mut rec = vec![self.timestamps[t].format(DATE_FORMAT).to_string()];
            rec.extend(r.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PanelError> {
        let mut rd = csv::Reader::from_reader(input);
        let symbols: Vec<String> = rd.headers()?.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| PanelError::Parse { line, msg };
            if rec.len() != symbols.len() + 1 {
                return Err(bad(format!("expected {} fields, got {}", symbols.len() + 1, rec.len())));
            }
            let date = NaiveDate::parse_from_str(rec[0].trim(), DATE_FORMAT).map_err(|e| bad(e.to_string()))?;
            timestamps.push(date);
            for f in rec.iter().skip(1) {
                values.push(f.trim().parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}")))?);
            }
        }
        Self::new(timestamps, symbols, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), PanelError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self, PanelError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub fn synthetic_dates(len: usize) -> Vec<NaiveDate> {
    let origin = synthetic_origin();
    (0..len as u64)
        .map(|i| origin.checked_add_days(Days::new(i)).expect("date in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> ReturnsPanel {
        ReturnsPanel::from_rows(&[vec![0.1, -0.2], vec![0.0, 0.0], vec![1e-17, 3.0]]).unwrap()
    }

    #[test]
    fn validation() {
        let d = synthetic_dates(2);
        assert!(ReturnsPanel::new(d.clone(), vec![], vec![]).is_err());
        assert!(ReturnsPanel::new(d.clone(), vec!["a".into()], vec![1.0]).is_err());
        assert!(matches!(
            ReturnsPanel::new(vec![d[1], d[0]], vec!["a".into()], vec![1.0, 2.0]),
            Err(PanelError::Unordered(1))
        ));
        assert!(matches!(
            ReturnsPanel::new(d, vec!["a".into()], vec![1.0, f64::NAN]),
            Err(PanelError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn slicing_and_concat_partition() {
        let p = panel();
        let joined = p.slice(0..1).concat(&p.slice(1..3)).unwrap();
        assert_eq!(joined, p);
        assert!(p.slice(1..3).concat(&p.slice(0..1)).is_err());
        assert_eq!(p.row(2), &[1e-17, 3.0]);
        assert_eq!(p.zero_rows(), vec![1]);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let p = panel();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("date,A0,A1\n2000-01-03,0.1,-0.2\n"));
        assert_eq!(ReturnsPanel::read_csv(buf.as_slice()).unwrap(), p);
        assert!(ReturnsPanel::read_csv("date,a\n2000-01-01,x\n".as_bytes()).is_err());
    }

    #[test]
    fn moments() {
        let p = ReturnsPanel::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(p.sample_covariance(), vec![1.0, 1.0, 1.0, 1.0]);
        let rms = p.rms();
        assert!((rms[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let s = p.select(&["A1".to_string()]).unwrap();
        assert_eq!(s.values(), &[2.0, 0.0, 1.0]);
    }
}
