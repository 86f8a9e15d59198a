//! Small mechanisms with known privacy behaviour, used to calibrate the
//! auditor.

use super::audit::{AuditError, ExactMechanism, OutputDistribution};
use super::noise::{geometric_noise_pmf, geometric_tail};
use crate::log_model::{cap_user_activity, SearchLog};

/// Publishes the log itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRelease;

impl ExactMechanism for IdentityRelease {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        Ok(OutputDistribution::certain(log.exact_encoding()))
    }
}

/// Randomized response on "the log contains `target_user`", answering
/// truthfully with probability `e^eps / (1 + e^eps)`.
#[derive(Debug, Clone)]
pub struct RandomizedResponse {
    pub target_user: String,
    pub epsilon: f64,
}

impl ExactMechanism for RandomizedResponse {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        let truth = log.user(&self.target_user).is_some();
        let e = self.epsilon.exp();
        let p_truth = e / (1.0 + e);
        let p_lie = 1.0 / (1.0 + e);
        let (p_yes, p_no) = if truth { (p_truth, p_lie) } else { (p_lie, p_truth) };
        OutputDistribution::new(vec![("yes".into(), p_yes), ("no".into(), p_no)])
    }
}

/// Publishes the exact log with probability `leak_prob`, nothing otherwise.
#[derive(Debug, Clone, Copy)]
pub struct TwoBranchLeak {
    pub leak_prob: f64,
}

impl ExactMechanism for TwoBranchLeak {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        OutputDistribution::accumulate(vec![
            (format!("log:{}", log.exact_encoding()), self.leak_prob),
            ("nothing".to_string(), 1.0 - self.leak_prob),
        ])
    }
}

/// Count of `query` in the capped log plus two-sided geometric noise,
/// clamped to `[-clamp, clamp]` so the output space is finite.
#[derive(Debug, Clone)]
pub struct GeometricCount {
    pub query: String,
    pub alpha: f64,
    pub cap_m: usize,
    pub clamp: i64,
}

impl GeometricCount {
    /// Noise calibrated to epsilon-DP for the capped count.
    pub fn calibrated(query: impl Into<String>, epsilon: f64, cap_m: usize, clamp: i64) -> Self {
        GeometricCount { query: query.into(), alpha: (-epsilon / cap_m as f64).exp(), cap_m, clamp }
    }
}

impl ExactMechanism for GeometricCount {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        let capped = cap_user_activity(log, self.cap_m);
        let count = capped.records().filter(|r| r.query == self.query).count() as i64;
        let (lo, hi) = (-self.clamp, self.clamp);
        if count > hi {
            return Err(AuditError::Mechanism(format!("count {count} exceeds clamp {hi}")));
        }
        let mut outcomes = Vec::with_capacity((hi - lo + 1) as usize);
        for v in lo..=hi {
            let p = if v == lo {
                // P[count + N <= lo] = P[N >= count - lo]
                geometric_tail(count - lo, self.alpha)
            } else if v == hi {
                geometric_tail(hi - count, self.alpha)
            } else {
                geometric_noise_pmf(v - count, self.alpha)
            };
            outcomes.push((v.to_string(), p));
        }
        OutputDistribution::new(outcomes)
    }
}
