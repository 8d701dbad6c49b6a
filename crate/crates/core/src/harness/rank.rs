use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Cumulative test log likelihood per model for one portfolio; `None`
/// marks a failed model, which ranks below every finite score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioScores {
    pub portfolio: String,
    pub scores: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub models: Vec<String>,
    /// Rank of each model per portfolio (1 = highest log likelihood).
    pub per_portfolio: Vec<(String, BTreeMap<String, f64>)>,
    pub average: BTreeMap<String, f64>,
}

/// Ranks of `scores` with 1 for the largest; tied values share the mean of
/// the ranks they span.
pub fn fractional_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        order[i..=j].iter().for_each(|&k| ranks[k] = mean);
        i = j + 1;
    }
    ranks
}

/// Average rank of each model across portfolios.
pub fn rank_report(portfolios: &[PortfolioScores]) -> Result<RankTable, HarnessError> {
    let first = portfolios
        .first()
        .ok_or_else(|| HarnessError::Config("rank_report needs at least one portfolio".into()))?;
    let models: Vec<String> = first.scores.keys().cloned().collect();
    if models.is_empty() {
        return Err(HarnessError::Config("portfolio has no models".into()));
    }
    let mut per_portfolio = Vec::with_capacity(portfolios.len());
    let mut sums: BTreeMap<String, f64> = models.iter().map(|m| (m.clone(), 0.0)).collect();
    for p in portfolios {
        if !p.scores.keys().eq(models.iter()) {
            return Err(HarnessError::Config(format!(
                "portfolio {} has models {:?}, expected {models:?}",
                p.portfolio,
                p.scores.keys().collect::<Vec<_>>()
            )));
        }
        let values: Vec<f64> = p
            .scores
            .values()
            .map(|s| s.filter(|v| !v.is_nan()).unwrap_or(f64::NEG_INFINITY))
            .collect();
        let ranks = fractional_ranks(&values);
        let row: BTreeMap<String, f64> = models.iter().cloned().zip(ranks).collect();
        for (m, r) in &row {
            *sums.get_mut(m).expect("same model set") += r;
        }
        per_portfolio.push((p.portfolio.clone(), row));
    }
    let k = portfolios.len() as f64;
    let average = sums.into_iter().map(|(m, s)| (m, s / k)).collect();
    Ok(RankTable {
        models,
        per_portfolio,
        average,
    })
}

impl RankTable {
    /// Models with their average rank, best first; ties by name.
    pub fn ordered(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.average.iter().map(|(m, r)| (m.as_str(), *r)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn format(&self) -> String {
        let mut s = String::from("model | average rank\n");
        for (m, r) in self.ordered() {
            s.push_str(&format!("{m} | {r:.2}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(name: &str, v: &[(&str, Option<f64>)]) -> PortfolioScores {
        PortfolioScores {
            portfolio: name.into(),
            scores: v.iter().map(|(k, s)| (k.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn ties_share_mean_rank() {
        assert_eq!(fractional_ranks(&[1.0, 3.0, 3.0, 0.0]), vec![3.0, 1.5, 1.5, 4.0]);
        assert_eq!(fractional_ranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn seventeen_firsts_three_seconds() {
        let ps: Vec<PortfolioScores> = (0..20)
            .map(|i| {
                let a = if i < 17 { 10.0 } else { 5.0 };
                scores(&format!("p{i}"), &[("a", Some(a)), ("b", Some(7.0)), ("c", Some(1.0))])
            })
            .collect();
        let t = rank_report(&ps).unwrap();
        assert!((t.average["a"] - 1.15).abs() < 1e-12);
    }

    #[test]
    fn single_model_and_failures() {
        let t = rank_report(&[scores("p", &[("a", Some(-3.0))]), scores("q", &[("a", None)])]).unwrap();
        assert_eq!(t.average["a"], 1.0);
        let t = rank_report(&[scores("p", &[("a", None), ("b", Some(-1e300))])]).unwrap();
        assert_eq!((t.average["a"], t.average["b"]), (2.0, 1.0));
        let t = rank_report(&[scores("p", &[("a", None), ("b", None)])]).unwrap();
        assert_eq!(t.average["a"], 1.5);
    }

    #[test]
    fn inconsistent_models_rejected() {
        let r = rank_report(&[scores("p", &[("a", Some(1.0))]), scores("q", &[("b", Some(1.0))])]);
        assert!(r.is_err());
        assert!(rank_report(&[]).is_err());
    }
}
