//! Shared inputs for the benchmarks.

use vhvm_core::baselines::GarchParams;
use vhvm_core::panel::ReturnsPanel;
use vhvm_core::simlab::{simulate_factor_sv, simulate_garch, FactorSvConfig};

/// Factor-SV returns with one factor per five assets.
pub fn factor_panel(n: usize, len: usize, seed: u64) -> ReturnsPanel {
    let m = n.div_ceil(5);
    simulate_factor_sv(&FactorSvConfig::standard(n, m, len, seed))
        .expect("valid factor config")
        .returns
}

pub fn garch_series(len: usize, seed: u64) -> Vec<f64> {
    let p = GarchParams::new(0.05, 0.10, 0.85).expect("valid garch");
    simulate_garch(&p, len, seed).expect("valid garch").returns.values().to_vec()
}
