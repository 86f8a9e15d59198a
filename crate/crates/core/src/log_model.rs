//! Search-log data model: records, per-user logs, item keys and histograms.
//!
//! A [`SearchLog`] groups [`QueryRecord`]s by user and keeps each user's
//! records in timestamp order (stable with respect to input order). All
//! values are immutable once built; operations return new values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: RecordError },
    #[error("unknown user id {0:?}")]
    UnknownUser(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("user id is empty")]
    EmptyUserId,
    #[error("query is empty after whitespace normalization")]
    EmptyQuery,
    #[error("clicked url is empty")]
    EmptyUrl,
    #[error("rank is present but no clicked url")]
    RankWithoutClick,
    #[error("rank must be a positive integer")]
    ZeroRank,
    #[error("field contains a tab or line break: {0}")]
    ControlCharacter(&'static str),
}

/// One query (and optional click) issued by a user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryRecord {
    pub user_id: String,
    pub query: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub clicked_url: Option<String>,
    pub rank: Option<u32>,
}

impl QueryRecord {
    /// Builds a validated record with a whitespace-normalized query.
    pub fn new(
        user_id: impl Into<String>,
        query: impl AsRef<str>,
        timestamp: i64,
        clicked_url: Option<String>,
        rank: Option<u32>,
    ) -> Result<Self, RecordError> {
        let record = QueryRecord {
            user_id: user_id.into(),
            query: normalize_query(query.as_ref()),
            timestamp,
            clicked_url,
            rank,
        };
        record.validate()?;
        Ok(record)
    }

    /// A query-only record with no click.
    pub fn no_click(user_id: impl Into<String>, query: impl AsRef<str>, timestamp: i64) -> Result<Self, RecordError> {
        Self::new(user_id, query, timestamp, None, None)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.user_id.is_empty() {
            return Err(RecordError::EmptyUserId);
        }
        if has_control(&self.user_id) {
            return Err(RecordError::ControlCharacter("user_id"));
        }
        if normalize_query(&self.query).is_empty() {
            return Err(RecordError::EmptyQuery);
        }
        if let Some(url) = &self.clicked_url {
            if url.is_empty() {
                return Err(RecordError::EmptyUrl);
            }
            if has_control(url) {
                return Err(RecordError::ControlCharacter("clicked_url"));
            }
        }
        match (self.rank, &self.clicked_url) {
            (Some(0), _) => Err(RecordError::ZeroRank),
            (Some(_), None) => Err(RecordError::RankWithoutClick),
            _ => Ok(()),
        }
    }

    pub fn is_click(&self) -> bool {
        self.clicked_url.is_some()
    }

    /// The record's key under `kind`.
    pub fn key(&self, kind: ItemKind) -> ItemKey {
        match kind {
            ItemKind::Query => ItemKey::Query(self.query.clone()),
            ItemKind::QueryUrlPair => self.pair_key(),
        }
    }

    pub fn pair_key(&self) -> ItemKey {
        ItemKey::Pair { query: self.query.clone(), url: self.clicked_url.clone() }
    }
}

/// Trims and collapses runs of whitespace to a single space.
pub fn normalize_query(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn has_control(s: &str) -> bool {
    s.contains(['\t', '\n', '\r'])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Query,
    QueryUrlPair,
}

/// Key of a histogram item. A pair with `url: None` is the no-click value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemKey {
    Query(String),
    Pair { query: String, url: Option<String> },
}

impl ItemKey {
    pub fn kind(&self) -> ItemKind {
        match self {
            ItemKey::Query(_) => ItemKind::Query,
            ItemKey::Pair { .. } => ItemKind::QueryUrlPair,
        }
    }

    pub fn query(&self) -> &str {
        match self {
            ItemKey::Query(q) | ItemKey::Pair { query: q, .. } => q,
        }
    }

    pub fn url(&self) -> Option<&str> {
        match self {
            ItemKey::Query(_) => None,
            ItemKey::Pair { url, .. } => url.as_deref(),
        }
    }

    /// True for a pair key carrying an actual click.
    pub fn is_clicked_pair(&self) -> bool {
        matches!(self, ItemKey::Pair { url: Some(_), .. })
    }
}

/// Per-user ordered search records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLog {
    users: BTreeMap<String, Vec<QueryRecord>>,
}

impl SearchLog {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn users(&self) -> &BTreeMap<String, Vec<QueryRecord>> {
        &self.users
    }

    pub fn user(&self, user_id: &str) -> Option<&[QueryRecord]> {
        self.users.get(user_id).map(Vec::as_slice)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_records(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// All records, user by user (users in id order).
    pub fn records(&self) -> impl Iterator<Item = &QueryRecord> {
        self.users.values().flatten()
    }

    pub fn into_records(self) -> Vec<QueryRecord> {
        self.users.into_values().flatten().collect()
    }

    /// Assembles a log from per-user record lists that already satisfy the
    /// log invariants. Used by mechanisms that derive a log from a log.
    pub(crate) fn from_sorted_users(users: BTreeMap<String, Vec<QueryRecord>>) -> Self {
        let log = SearchLog { users: users.into_iter().filter(|(_, r)| !r.is_empty()).collect() };
        debug_assert!(log.check_invariants().is_ok());
        log
    }

    /// Verifies every structural invariant; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (user, records) in &self.users {
            if records.is_empty() {
                return Err(format!("user {user:?} has no records"));
            }
            for (i, r) in records.iter().enumerate() {
                if &r.user_id != user {
                    return Err(format!("record {i} of {user:?} has user id {:?}", r.user_id));
                }
                r.validate().map_err(|e| format!("record {i} of {user:?}: {e}"))?;
                if r.query != normalize_query(&r.query) {
                    return Err(format!("record {i} of {user:?} has unnormalized query"));
                }
            }
            if records.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
                return Err(format!("records of {user:?} are not in timestamp order"));
            }
        }
        Ok(())
    }

    /// Pseudonym-invariant canonical encoding: the sorted multiset of user
    /// rows, each row being the user's records without the user id.
    pub fn anonymous_encoding(&self) -> String {
        let mut rows: Vec<String> = self.users.values().map(|r| encode_row(r)).collect();
        rows.sort_unstable();
        rows.join("\x1e")
    }

    /// Canonical encoding that keeps user ids.
    pub fn exact_encoding(&self) -> String {
        self.users.iter().map(|(u, r)| format!("{u}\x1d{}", encode_row(r))).collect::<Vec<_>>().join("\x1e")
    }
}

fn encode_row(records: &[QueryRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{}\x1f{}\x1f{}\x1f{}",
                r.query,
                r.clicked_url.as_deref().unwrap_or(""),
                r.rank.map(|k| k.to_string()).unwrap_or_default(),
                r.timestamp
            )
        })
        .collect::<Vec<_>>()
        .join("\x1c")
}

/// Groups records by user and sorts each user's records by timestamp.
///
/// Queries are whitespace-normalized; a record violating the record
/// invariants is rejected with its input index.
pub fn build_log(records: impl IntoIterator<Item = QueryRecord>) -> Result<SearchLog, LogError> {
    let mut users: BTreeMap<String, Vec<QueryRecord>> = BTreeMap::new();
    for (index, mut record) in records.into_iter().enumerate() {
        record.query = normalize_query(&record.query);
        record.validate().map_err(|reason| LogError::InvalidRecord { index, reason })?;
        users.entry(record.user_id.clone()).or_default().push(record);
    }
    for records in users.values_mut() {
        // stable: equal timestamps keep input order
        records.sort_by_key(|r| r.timestamp);
    }
    Ok(SearchLog { users })
}

/// Item counts of one kind; zero-count items are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    kind: ItemKind,
    counts: BTreeMap<ItemKey, u64>,
}

impl Histogram {
    pub fn kind(&self) -> ItemKind {
        self.kind
    }

    pub fn counts(&self) -> &BTreeMap<ItemKey, u64> {
        &self.counts
    }

    pub fn get(&self, key: &ItemKey) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// L1 distance between two histograms of the same kind.
    pub fn l1_distance(&self, other: &Histogram) -> u64 {
        let mut d = 0;
        for (k, &c) in &self.counts {
            d += c.abs_diff(other.get(k));
        }
        for (k, &c) in &other.counts {
            if !self.counts.contains_key(k) {
                d += c;
            }
        }
        d
    }
}

pub fn histogram(log: &SearchLog, kind: ItemKind) -> Histogram {
    let mut counts = BTreeMap::new();
    for r in log.records() {
        *counts.entry(r.key(kind)).or_insert(0) += 1;
    }
    Histogram { kind, counts }
}

/// Keeps each user's `m` earliest records.
pub fn cap_user_activity(log: &SearchLog, m: usize) -> SearchLog {
    let users = log.users.iter().filter(|_| m > 0).map(|(u, r)| (u.clone(), r[..r.len().min(m)].to_vec())).collect();
    SearchLog { users }
}

/// The neighboring log without `user_id`'s entire history.
pub fn remove_user(log: &SearchLog, user_id: &str) -> Result<SearchLog, LogError> {
    if !log.users.contains_key(user_id) {
        return Err(LogError::UnknownUser(user_id.to_string()));
    }
    let mut users = log.users.clone();
    users.remove(user_id);
    Ok(SearchLog { users })
}
