//! Release mechanisms for search logs.
//!
//! Aggregate releases ([`laplace_histogram_release`], [`threshold_release`],
//! [`token_hash_release`]) publish statistics or transformed tokens;
//! schema-preserving releases ([`k_anon_release`], [`pdp_sanitize`]) publish a
//! search log with the input's layout.

mod kanon;
mod laplace;
mod output;
mod pdp;
mod threshold;
mod token_hash;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::log_model::SearchLog;
use crate::privacy::PrivacyError;

pub use kanon::k_anon_release;
pub use laplace::laplace_histogram_release;
pub use output::{Release, ReleaseMetadata, ReleaseOutput, TokenPair};
pub use pdp::{
    pdp_sanitize, selection_survival, selection_threshold, PdpAudit, PdpConfig, PhaseParams, SelectionNoise,
    TimestampGranularity,
};
pub use threshold::{threshold_release, ThresholdCount};
pub use token_hash::{frequency_inversion_attack, recovery_rate, token_hash, token_hash_release};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("delta >= 1 without pseudonymization publishes raw user ids and is rejected")]
    MeaninglessDelta,
    #[error("selection delta {0} must lie in [0, 0.5) for the survival threshold to exist")]
    SelectionDelta(f64),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> MechanismError {
    MechanismError::InvalidParameter { name, reason: reason.into() }
}

/// Number of distinct users issuing each query.
pub fn distinct_users_per_query(log: &SearchLog) -> BTreeMap<String, usize> {
    let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in log.records() {
        users.entry(&r.query).or_default().insert(&r.user_id);
    }
    users.into_iter().map(|(q, u)| (q.to_string(), u.len())).collect()
}
