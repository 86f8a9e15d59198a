//! Utility metrics comparing an original log with a release.
//!
//! Record matching is on the `(query, url)` multiset, so pseudonyms and
//! timestamp coarsening never cost utility.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::{histogram, ItemKey, ItemKind, QueryRecord, SearchLog};
use crate::mechanisms::Release;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("original log is empty")]
    EmptyOriginal,
    #[error("original log has no clicked records")]
    NoClicks,
    #[error("no user in the original log has two or more records")]
    NoLinkablePairs,
    #[error("invalid utility weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub w_retention: f64,
    pub w_coverage: f64,
    pub w_distance: f64,
    pub w_association: f64,
    pub w_linkage: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights { w_retention: 0.2, w_coverage: 0.2, w_distance: 0.2, w_association: 0.2, w_linkage: 0.2 }
    }
}

impl UtilityWeights {
    pub fn new(
        w_retention: f64,
        w_coverage: f64,
        w_distance: f64,
        w_association: f64,
        w_linkage: f64,
    ) -> Result<Self, UtilityError> {
        let w = UtilityWeights { w_retention, w_coverage, w_distance, w_association, w_linkage };
        w.validate()?;
        Ok(w)
    }

    /// Only the retention term.
    pub fn retention_only() -> Self {
        UtilityWeights { w_retention: 1.0, w_coverage: 0.0, w_distance: 0.0, w_association: 0.0, w_linkage: 0.0 }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.w_retention, self.w_coverage, self.w_distance, self.w_association, self.w_linkage]
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        let ws = self.as_array();
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(UtilityError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(UtilityError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

impl std::str::FromStr for UtilityWeights {
    type Err = UtilityError;

    /// Parses `retention,coverage,distance,association,linkage`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| UtilityError::InvalidWeights(e.to_string()))?;
        match parts[..] {
            [r, c, d, a, l] => UtilityWeights::new(r, c, d, a, l),
            _ => Err(UtilityError::InvalidWeights(format!("expected 5 weights, got {}", parts.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub tuple_retention: f64,
    pub distinct_coverage: f64,
    pub l1_distance: f64,
    pub kl_distance: f64,
    pub association_preservation: f64,
    pub session_linkage: f64,
    pub composite: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    L1,
    Kl,
}

type PairKey = (String, Option<String>);

fn pair_of(r: &QueryRecord) -> PairKey {
    (r.query.clone(), r.clicked_url.clone())
}

fn pair_multiset<'a>(records: impl Iterator<Item = &'a QueryRecord>) -> BTreeMap<PairKey, u64> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(pair_of(r)).or_insert(0) += 1;
    }
    m
}

fn multiset_overlap(a: &BTreeMap<PairKey, u64>, b: &BTreeMap<PairKey, u64>) -> u64 {
    a.iter().map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0))).sum()
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

fn require_nonempty(original: &SearchLog) -> Result<(), UtilityError> {
    if original.is_empty() {
        Err(UtilityError::EmptyOriginal)
    } else {
        Ok(())
    }
}

/// Fraction of original records matched in the release; 0 for aggregates.
pub fn tuple_retention(original: &SearchLog, release: &Release) -> Result<f64, UtilityError> {
    require_nonempty(original)?;
    let Some(out) = release.as_log() else { return Ok(0.0) };
    let matched = multiset_overlap(&pair_multiset(original.records()), &pair_multiset(out.records()));
    Ok(matched as f64 / original.num_records() as f64)
}

/// Non-negative released weight per item of `kind`.
fn released_counts(release: &Release, kind: ItemKind) -> BTreeMap<ItemKey, f64> {
    match release {
        Release::SanitizedLog(log) => {
            histogram(log, kind).counts().iter().map(|(k, &c)| (k.clone(), c as f64)).collect()
        }
        Release::NoisyHistogram(entries) => {
            entries.iter().filter(|(k, _)| k.kind() == kind).map(|(k, &v)| (k.clone(), v.max(0.0))).collect()
        }
        Release::QuerySet(queries) => match kind {
            ItemKind::Query => queries.iter().map(|q| (ItemKey::Query(q.clone()), 1.0)).collect(),
            ItemKind::QueryUrlPair => BTreeMap::new(),
        },
        Release::TokenStream(_) => BTreeMap::new(),
    }
}

/// Distance between normalized item distributions of `kind`.
///
/// KL is `KL(original || released)` with add-1/2 smoothing over the union
/// support. An empty released distribution has L1 distance 2.
pub fn distribution_distance(
    original: &SearchLog,
    release: &Release,
    kind: ItemKind,
    metric: DistanceMetric,
) -> Result<f64, UtilityError> {
    require_nonempty(original)?;
    let orig: BTreeMap<ItemKey, f64> =
        histogram(original, kind).counts().iter().map(|(k, &c)| (k.clone(), c as f64)).collect();
    let out = released_counts(release, kind);
    Ok(match metric {
        DistanceMetric::L1 => l1(&orig, &out),
        DistanceMetric::Kl => smoothed_kl(&orig, &out),
    })
}

pub(crate) fn l1(a: &BTreeMap<ItemKey, f64>, b: &BTreeMap<ItemKey, f64>) -> f64 {
    let (ta, tb): (f64, f64) = (a.values().sum(), b.values().sum());
    if ta <= 0.0 || tb <= 0.0 {
        return if ta <= 0.0 && tb <= 0.0 { 0.0 } else { 2.0 };
    }
    let keys: BTreeSet<&ItemKey> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) / ta - b.get(k).unwrap_or(&0.0) / tb).abs())
        .sum::<f64>()
        .min(2.0)
}

fn smoothed_kl(a: &BTreeMap<ItemKey, f64>, b: &BTreeMap<ItemKey, f64>) -> f64 {
    let keys: BTreeSet<&ItemKey> = a.keys().chain(b.keys()).collect();
    let n = keys.len() as f64;
    let za = a.values().sum::<f64>() + 0.5 * n;
    let zb = b.values().sum::<f64>() + 0.5 * n;
    keys.into_iter()
        .map(|k| {
            let p = (a.get(k).unwrap_or(&0.0) + 0.5) / za;
            let q = (b.get(k).unwrap_or(&0.0) + 0.5) / zb;
            p * (p / q).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn released_keys(release: &Release, kind: ItemKind) -> BTreeSet<ItemKey> {
    released_counts(release, kind).into_keys().collect()
}

/// Fraction of distinct original items of `kind` present in the release.
pub fn distinct_coverage(original: &SearchLog, release: &Release, kind: ItemKind) -> Result<f64, UtilityError> {
    require_nonempty(original)?;
    let orig = histogram(original, kind);
    let out = released_keys(release, kind);
    let hit = orig.counts().keys().filter(|k| out.contains(*k)).count();
    Ok(hit as f64 / orig.len() as f64)
}

/// Fraction of distinct clicked pairs of the original present in the
/// release.
pub fn association_preservation(original: &SearchLog, release: &Release) -> Result<f64, UtilityError> {
    let orig: BTreeSet<ItemKey> = original.records().filter(|r| r.is_click()).map(|r| r.pair_key()).collect();
    if orig.is_empty() {
        return Err(UtilityError::NoClicks);
    }
    let out = released_keys(release, ItemKind::QueryUrlPair);
    Ok(orig.iter().filter(|k| out.contains(*k)).count() as f64 / orig.len() as f64)
}

/// Fraction of original same-user record pairs that survive under a single
/// output user.
///
/// Each output user is credited with `C(k, 2)` where `k` is its largest
/// `(query, url)` multiset overlap with any original user.
pub fn session_linkage(original: &SearchLog, release: &Release) -> Result<f64, UtilityError> {
    let total: f64 = original.users().values().map(|r| choose2(r.len() as u64)).sum();
    if total == 0.0 {
        return Err(UtilityError::NoLinkablePairs);
    }
    let Some(out) = release.as_log() else { return Ok(0.0) };
    let originals: Vec<BTreeMap<PairKey, u64>> = original.users().values().map(|r| pair_multiset(r.iter())).collect();
    let credited: f64 = out
        .users()
        .values()
        .map(|records| {
            let mine = pair_multiset(records.iter());
            let best = originals.iter().map(|o| multiset_overlap(&mine, o)).max().unwrap_or(0);
            choose2(best)
        })
        .sum();
    Ok((credited / total).min(1.0))
}

/// Weighted sum of the report's components, using `1 - L1/2` for distance.
pub fn composite_utility(report: &UtilityReport, weights: &UtilityWeights) -> Result<f64, UtilityError> {
    weights.validate()?;
    let value = weights.w_retention * report.tuple_retention
        + weights.w_coverage * report.distinct_coverage
        + weights.w_distance * (1.0 - report.l1_distance / 2.0)
        + weights.w_association * report.association_preservation
        + weights.w_linkage * report.session_linkage;
    Ok(value.clamp(0.0, 1.0))
}

/// Computes every metric; coverage and distances use items of `kind`.
pub fn evaluate(
    original: &SearchLog,
    release: &Release,
    kind: ItemKind,
    weights: &UtilityWeights,
) -> Result<UtilityReport, UtilityError> {
    weights.validate()?;
    let mut report = UtilityReport {
        tuple_retention: tuple_retention(original, release)?,
        distinct_coverage: distinct_coverage(original, release, kind)?,
        l1_distance: distribution_distance(original, release, kind, DistanceMetric::L1)?,
        kl_distance: distribution_distance(original, release, kind, DistanceMetric::Kl)?,
        association_preservation: association_preservation(original, release)?,
        session_linkage: session_linkage(original, release)?,
        composite: 0.0,
    };
    report.composite = composite_utility(&report, weights)?;
    Ok(report)
}
