use std::collections::BTreeMap;

use serde_json::json;

use super::output::{Release, ReleaseMetadata, ReleaseOutput};
use super::{distinct_users_per_query, invalid, MechanismError};
use crate::log_model::SearchLog;

/// What a threshold counts toward `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ThresholdCount {
    /// One share per user: a query needs `t` distinct issuers.
    #[default]
    DistinctUsers,
    Occurrences,
}

/// Releases the queries that reach the decoding threshold `t`.
pub fn threshold_release(log: &SearchLog, t: usize, count: ThresholdCount) -> Result<ReleaseOutput, MechanismError> {
    if t == 0 {
        return Err(invalid("t", "must be at least 1"));
    }
    let counts = match count {
        ThresholdCount::DistinctUsers => distinct_users_per_query(log),
        ThresholdCount::Occurrences => {
            let mut m = BTreeMap::new();
            for r in log.records() {
                *m.entry(r.query.clone()).or_insert(0) += 1;
            }
            m
        }
    };
    let released = counts.into_iter().filter(|&(_, c)| c >= t).map(|(q, _)| q).collect();
    let counted = match count {
        ThresholdCount::DistinctUsers => "distinct_users",
        ThresholdCount::Occurrences => "occurrences",
    };
    Ok(ReleaseOutput {
        release: Release::QuerySet(released),
        metadata: ReleaseMetadata::new("threshold", json!({ "t": t, "count": counted }), None),
    })
}
