//! Pass@k over repair chains: a task counts once it succeeds within its
//! first `k` attempts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AttemptLog;
use crate::report::Percent;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("no attempt logs to score")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKReport {
    pub k: u32,
    pub n: u64,
    pub c: u64,
    pub rate: f64,
}

impl PassAtKReport {
    pub fn new(k: u32, c: u64, n: u64) -> Self {
        assert!(n > 0 && c <= n);
        PassAtKReport {
            k,
            n,
            c,
            rate: c as f64 / n as f64,
        }
    }

    /// Rate as a percentage rounded half-up to two decimals.
    pub fn percent(&self) -> Percent {
        Percent::from_ratio(self.c, self.n)
    }
}

pub fn pass_at_k(logs: &[AttemptLog], k: u32) -> Result<PassAtKReport, ScoringError> {
    if logs.is_empty() {
        return Err(ScoringError::EmptyCorpus);
    }
    if k == 0 {
        return Err(ScoringError::ZeroK);
    }
    let c = logs.iter().filter(|l| l.succeeded && l.attempts_used <= k).count() as u64;
    Ok(PassAtKReport::new(k, c, logs.len() as u64))
}
