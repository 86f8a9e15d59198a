use std::collections::BTreeMap;

use serde_json::json;

use super::output::{Release, ReleaseMetadata, ReleaseOutput};
use super::{distinct_users_per_query, invalid, MechanismError};
use crate::log_model::SearchLog;

/// Keeps only records whose query is issued by at least `k` distinct users.
pub fn k_anon_release(log: &SearchLog, k: usize) -> Result<ReleaseOutput, MechanismError> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let issuers = distinct_users_per_query(log);
    let users: BTreeMap<_, _> = log
        .users()
        .iter()
        .map(|(u, records)| {
            let kept = records.iter().filter(|r| issuers[&r.query] >= k).cloned().collect();
            (u.clone(), kept)
        })
        .collect();
    Ok(ReleaseOutput {
        release: Release::SanitizedLog(SearchLog::from_sorted_users(users)),
        metadata: ReleaseMetadata::new("kanon", json!({ "k": k }), None),
    })
}
