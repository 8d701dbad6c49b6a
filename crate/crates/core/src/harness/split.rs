use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::panel::ReturnsPanel;

/// Fewest rows any split segment may have.
pub const MIN_SEGMENT_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let r = [self.train, self.valid, self.test];
        if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Config(format!("split ratios must be positive and sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// `(train_end, valid_end)`: floors of the cumulative ratios times `len`.
    /// A `1e-9` slack keeps e.g. `0.8 * 100` from flooring to 79.
    pub fn boundaries(&self, len: usize) -> (usize, usize) {
        let t = len as f64;
        let b1 = (t * self.train + 1e-9).floor() as usize;
        let b2 = (t * (self.train + self.valid) + 1e-9).floor() as usize;
        (b1.min(len), b2.min(len))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: ReturnsPanel,
    pub valid: ReturnsPanel,
    pub test: ReturnsPanel,
}

impl Split {
    /// Everything before the test window.
    pub fn warmup(&self) -> ReturnsPanel {
        self.train.concat(&self.valid).expect("contiguous segments")
    }
}

/// Contiguous, order-preserving train/valid/test split.
pub fn split(panel: &ReturnsPanel, ratios: &SplitRatios) -> Result<Split, HarnessError> {
    ratios.validate()?;
    let (b1, b2) = ratios.boundaries(panel.len());
    let lens = [b1, b2 - b1, panel.len() - b2];
    if lens.iter().any(|&l| l < MIN_SEGMENT_ROWS) {
        return Err(HarnessError::Data(format!(
            "split of {} rows gives segments {lens:?}; each needs >= {MIN_SEGMENT_ROWS}",
            panel.len()
        )));
    }
    Ok(Split {
        train: panel.slice(0..b1),
        valid: panel.slice(b1..b2),
        test: panel.slice(b2..panel.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(len: usize) -> ReturnsPanel {
        ReturnsPanel::from_rows(&(0..len).map(|t| vec![t as f64 + 1.0]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn floor_rule() {
        let r = SplitRatios::default();
        for (len, want) in [(100, [80, 10, 10]), (101, [80, 10, 11]), (2600, [2080, 260, 260])] {
            let s = split(&panel(len), &r).unwrap();
            assert_eq!([s.train.len(), s.valid.len(), s.test.len()], want);
        }
    }

    #[test]
    fn partition_reassembles() {
        let p = panel(137);
        let s = split(&p, &SplitRatios::default()).unwrap();
        assert_eq!(s.warmup().concat(&s.test).unwrap(), p);
    }

    #[test]
    fn rejects_short_segments_and_bad_ratios() {
        assert!(split(&panel(95), &SplitRatios::default()).is_err());
        let bad = SplitRatios {
            train: 0.9,
            valid: 0.2,
            test: -0.1,
        };
        assert!(split(&panel(1000), &bad).is_err());
    }
}
