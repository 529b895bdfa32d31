//! Monte Carlo counters shared by the oblivious-transfer and key-exchange
//! studies.

use std::fmt;

/// Seed for trial `index` of a run started from `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStats {
    pub trials: u64,
    pub successes: u64,
}

impl TrialStats {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    /// `k` standard deviations of a binomial proportion with success
    /// probability `p` over this many trials.
    pub fn sigma_bound(&self, p: f64, k: f64) -> f64 {
        k * (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

impl fmt::Display for TrialStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trials={} successes={} rate={:.6}",
            self.trials,
            self.successes,
            self.rate()
        )
    }
}
