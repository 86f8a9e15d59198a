//! Schema-preserving sanitizer with a probabilistic-DP guarantee.
//!
//! Pipeline on a log `L` with budget `(eps, delta)`, cap `m` and split `rho`:
//!
//! 1. cap every user at their `m` earliest records;
//! 2. item selection (`eps_a = rho * eps`, `delta_a = delta / 2`): every
//!    distinct query-url pair gets noise of scale `m / eps_a` on its count
//!    and survives when the noisy count reaches
//!    `tau = m + (m / eps_a) ln(1 / (2 delta_a))`;
//! 3. record retention (`eps_b = (1 - rho) * eps`, `delta_b = delta / 2`):
//!    each record of a surviving item is kept independently with the
//!    certificate's probability `p`;
//! 4. surviving users get fresh pseudonyms `1..=k` in seeded random order;
//! 5. timestamps are coarsened.
//!
//! `delta = 1` is the vacuous configuration: no constraint binds, every
//! item survives and every record is kept.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::laplace::item_index;
use super::output::{Release, ReleaseMetadata, ReleaseOutput};
use super::token_hash::keyed_hash;
use super::{invalid, MechanismError};
use crate::log_model::{cap_user_activity, histogram, ItemKey, ItemKind, QueryRecord, SearchLog};
use crate::optimizer::Certificate;
use crate::privacy::{
    geometric_tail, laplace_inverse_cdf, laplace_tail, AuditError, ExactMechanism, OutputDistribution, PrivacyParams,
    OUTCOME_GUARD,
};
use crate::rng::{open_unit, stream, Domain};
use crate::utility::UtilityWeights;

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampGranularity {
    Exact,
    #[default]
    Day,
}

impl TimestampGranularity {
    pub fn apply(self, ts: i64) -> i64 {
        match self {
            TimestampGranularity::Exact => ts,
            TimestampGranularity::Day => ts.div_euclid(DAY) * DAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpConfig {
    pub privacy: PrivacyParams,
    /// Fraction of epsilon spent on item selection.
    pub rho: f64,
    pub weights: UtilityWeights,
    pub pseudonymize: bool,
    pub timestamps: TimestampGranularity,
    pub certificate: Certificate,
}

impl PdpConfig {
    pub fn new(privacy: PrivacyParams, rho: f64) -> Result<Self, MechanismError> {
        let config = PdpConfig {
            privacy,
            rho,
            weights: UtilityWeights::default(),
            pseudonymize: true,
            timestamps: TimestampGranularity::Day,
            certificate: Certificate::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        self.privacy.validate()?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if self.privacy.delta >= 1.0 && !self.pseudonymize {
            return Err(MechanismError::MeaninglessDelta);
        }
        Ok(())
    }

    /// True when `delta >= 1`, where probabilistic DP constrains nothing.
    pub fn is_vacuous(&self) -> bool {
        self.privacy.delta >= 1.0
    }

    pub fn phases(&self) -> Result<PhaseParams, MechanismError> {
        self.validate()?;
        PhaseParams::new(&self.privacy, self.rho, self.certificate)
    }
}

/// Derived per-phase budgets and thresholds of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseParams {
    pub cap_m: usize,
    pub eps_a: f64,
    pub delta_a: f64,
    pub eps_b: f64,
    pub delta_b: f64,
    /// Survival threshold on noisy counts (`-inf` when vacuous).
    pub tau: f64,
    /// Laplace scale `m / eps_a` of the selection noise.
    pub noise_scale: f64,
    /// Per-record retention probability.
    pub retention_p: f64,
    pub vacuous: bool,
}

impl PhaseParams {
    pub fn new(privacy: &PrivacyParams, rho: f64, certificate: Certificate) -> Result<Self, MechanismError> {
        let m = privacy.cap_m;
        let eps_a = rho * privacy.epsilon;
        let eps_b = (1.0 - rho) * privacy.epsilon;
        let delta_a = privacy.delta / 2.0;
        let delta_b = privacy.delta / 2.0;
        let vacuous = privacy.delta >= 1.0;
        let (tau, retention_p) = if vacuous {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (selection_threshold(eps_a, delta_a, m)?, certificate.bound(eps_b, delta_b, m))
        };
        Ok(PhaseParams {
            cap_m: m,
            eps_a,
            delta_a,
            eps_b,
            delta_b,
            tau,
            noise_scale: m as f64 / eps_a,
            retention_p,
            vacuous,
        })
    }

    /// Ratio of the two-sided geometric noise used in audit mode.
    pub fn geometric_alpha(&self) -> f64 {
        (-self.eps_a / self.cap_m as f64).exp()
    }
}

/// `tau = m + (m / eps_a) ln(1 / (2 delta_a))`: a count of `m` (one user's
/// whole contribution) passes with probability at most `delta_a`.
pub fn selection_threshold(eps_a: f64, delta_a: f64, cap_m: usize) -> Result<f64, MechanismError> {
    if !(0.0..0.5).contains(&delta_a) {
        return Err(MechanismError::SelectionDelta(delta_a));
    }
    if eps_a.is_nan() || eps_a <= 0.0 {
        return Err(invalid("eps_a", "selection budget must be positive"));
    }
    if delta_a == 0.0 {
        return Ok(f64::INFINITY);
    }
    let m = cap_m as f64;
    Ok(m + (m / eps_a) * (1.0 / (2.0 * delta_a)).ln())
}

/// Noise used by the item-selection phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionNoise {
    /// Continuous Laplace noise (sampling mode).
    Laplace,
    /// Two-sided geometric noise with `alpha = e^(-eps_a/m)` (audit mode).
    Geometric,
}

/// Probability that an item with capped count `count` survives selection.
pub fn selection_survival(count: u64, phase: &PhaseParams, noise: SelectionNoise) -> f64 {
    if phase.vacuous {
        return 1.0;
    }
    if phase.tau.is_infinite() {
        return 0.0;
    }
    let gap = phase.tau - count as f64;
    match noise {
        SelectionNoise::Laplace => laplace_tail(gap, phase.noise_scale),
        SelectionNoise::Geometric => geometric_tail(gap.ceil() as i64, phase.geometric_alpha()),
    }
}

fn record_index(user_id: &str, position: usize) -> u64 {
    let mut data = user_id.as_bytes().to_vec();
    data.extend_from_slice(&(position as u64).to_le_bytes());
    keyed_hash(0, 0x10, &data)
}

/// Builds the published log from the capped log and a retention predicate.
fn assemble(
    capped: &SearchLog,
    mut keep: impl FnMut(&str, usize, &QueryRecord) -> bool,
    timestamps: TimestampGranularity,
    pseudonyms: Option<u64>,
) -> SearchLog {
    let mut survivors: Vec<(&String, Vec<QueryRecord>)> = Vec::new();
    for (user, records) in capped.users() {
        let kept: Vec<QueryRecord> = records
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(user, *i, r))
            .map(|(_, r)| QueryRecord { timestamp: timestamps.apply(r.timestamp), ..r.clone() })
            .collect();
        if !kept.is_empty() {
            survivors.push((user, kept));
        }
    }
    let names: Vec<String> = match pseudonyms {
        Some(seed) => {
            let mut ids: Vec<usize> = (1..=survivors.len()).collect();
            ids.shuffle(&mut stream(seed, Domain::Pseudonyms, 0));
            ids.into_iter().map(|i| i.to_string()).collect()
        }
        None => survivors.iter().map(|(u, _)| (*u).clone()).collect(),
    };
    let users: BTreeMap<String, Vec<QueryRecord>> = survivors
        .into_iter()
        .zip(names)
        .map(|((_, records), name)| {
            let records = records.into_iter().map(|r| QueryRecord { user_id: name.clone(), ..r }).collect();
            (name, records)
        })
        .collect();
    SearchLog::from_sorted_users(users)
}

/// Sanitizes `log` under `config`; the result is a pure function of
/// `(log, config, seed)`.
pub fn pdp_sanitize(log: &SearchLog, config: &PdpConfig, seed: u64) -> Result<ReleaseOutput, MechanismError> {
    let phase = config.phases()?;
    let capped = cap_user_activity(log, phase.cap_m);
    let pair_counts = histogram(&capped, ItemKind::QueryUrlPair);

    let kept_items: BTreeMap<&ItemKey, bool> = pair_counts
        .counts()
        .iter()
        .map(|(key, &count)| {
            let kept = if phase.vacuous {
                true
            } else if phase.tau.is_infinite() {
                false
            } else {
                let u = open_unit(&mut stream(seed, Domain::ItemSelection, item_index(key)));
                let noise = laplace_inverse_cdf(u, phase.noise_scale).expect("u in (0,1)");
                count as f64 + noise >= phase.tau
            };
            (key, kept)
        })
        .collect();

    let p = phase.retention_p;
    let sanitized = assemble(
        &capped,
        |user, i, r| {
            kept_items[&r.pair_key()]
                && open_unit(&mut stream(seed, Domain::RecordRetention, record_index(user, i))) < p
        },
        config.timestamps,
        config.pseudonymize.then_some(seed),
    );

    Ok(ReleaseOutput {
        release: Release::SanitizedLog(sanitized),
        metadata: ReleaseMetadata::new(
            "pdp",
            json!({
                "epsilon": config.privacy.epsilon,
                "delta": config.privacy.delta,
                "cap_m": config.privacy.cap_m,
                "rho": config.rho,
                "tau": if phase.tau.is_finite() { json!(phase.tau) } else { json!(null) },
                "retention_p": p,
                "certificate": config.certificate.describe(),
                "pseudonymize": config.pseudonymize,
                "timestamps": config.timestamps,
            }),
            Some(seed),
        ),
    })
}

/// Audit mode of [`pdp_sanitize`]: geometric selection noise and exhaustive
/// enumeration of retention outcomes. Outputs are encoded up to pseudonym
/// renaming when pseudonymization is on.
#[derive(Debug, Clone)]
pub struct PdpAudit {
    pub config: PdpConfig,
    /// Keep every item and every record (a deliberately broken variant).
    pub disable_noise: bool,
}

impl PdpAudit {
    pub fn new(config: PdpConfig) -> Self {
        PdpAudit { config, disable_noise: false }
    }
}

impl ExactMechanism for PdpAudit {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        let phase = self.config.phases().map_err(|e| AuditError::Mechanism(e.to_string()))?;
        let capped = cap_user_activity(log, phase.cap_m);
        let p = if self.disable_noise { 1.0 } else { phase.retention_p };

        // global record positions per item
        let mut positions: Vec<(String, usize)> = Vec::new();
        let mut by_item: BTreeMap<ItemKey, Vec<usize>> = BTreeMap::new();
        for (user, records) in capped.users() {
            for (i, r) in records.iter().enumerate() {
                by_item.entry(r.pair_key()).or_default().push(positions.len());
                positions.push((user.clone(), i));
            }
        }

        struct Item {
            records: Vec<usize>,
            survival: f64,
        }
        let items: Vec<Item> = by_item
            .into_values()
            .map(|records| {
                let survival = if self.disable_noise {
                    1.0
                } else {
                    selection_survival(records.len() as u64, &phase, SelectionNoise::Geometric)
                };
                Item { records, survival }
            })
            .filter(|it| it.survival > 0.0 && p > 0.0)
            .collect();

        let mut outcomes: u128 = 1;
        for it in &items {
            let options: u128 = if p >= 1.0 { 2 } else { 1u128 << it.records.len().min(100) };
            outcomes = outcomes.saturating_mul(options);
        }
        if outcomes > OUTCOME_GUARD as u128 {
            return Err(AuditError::OutcomeGuard { outcomes, limit: OUTCOME_GUARD });
        }

        // active records are renumbered into bit positions
        let active: Vec<usize> = items.iter().flat_map(|it| it.records.iter().copied()).collect();
        let mut states: Vec<(u64, f64)> = vec![(0, 1.0)];
        let mut bit = 0;
        for it in &items {
            let c = it.records.len();
            let s = it.survival;
            let item_bits = ((1u64 << c) - 1) << bit;
            let mut next = Vec::with_capacity(states.len() * 2);
            for &(mask, prob) in &states {
                let empty = (1.0 - s) + s * (1.0 - p).powi(c as i32);
                if empty > 0.0 {
                    next.push((mask, prob * empty));
                }
                if p >= 1.0 {
                    next.push((mask | item_bits, prob * s));
                    continue;
                }
                for subset in 1..(1u64 << c) {
                    let k = subset.count_ones() as i32;
                    let w = s * p.powi(k) * (1.0 - p).powi(c as i32 - k);
                    if w > 0.0 {
                        next.push((mask | (subset << bit), prob * w));
                    }
                }
            }
            states = next;
            bit += c;
        }

        let pseudonymize = self.config.pseudonymize;
        let timestamps = self.config.timestamps;
        let encoded = states.into_iter().map(|(mask, prob)| {
            let retained: std::collections::BTreeSet<(String, usize)> = active
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &g)| positions[g].clone())
                .collect();
            let out = assemble(&capped, |user, i, _| retained.contains(&(user.to_string(), i)), timestamps, None);
            let enc = if pseudonymize { out.anonymous_encoding() } else { out.exact_encoding() };
            (enc, prob)
        });
        OutputDistribution::accumulate(encoded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticParams};
    use crate::log_model::build_log;

    fn params(eps: f64, delta: f64, m: usize) -> PrivacyParams {
        PrivacyParams::new(eps, delta, m).unwrap()
    }

    fn fixture() -> SearchLog {
        build_log(vec![
            QueryRecord::new("u1", "q1", 100, Some("a".into()), Some(1)).unwrap(),
            QueryRecord::no_click("u1", "q2", 200).unwrap(),
            QueryRecord::new("u2", "q1", 300, Some("a".into()), Some(1)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn threshold_formula() {
        let tau = selection_threshold(0.5, 0.025, 2).unwrap();
        assert!((tau - (2.0 + 4.0 * 20f64.ln())).abs() < 1e-12);
        assert_eq!(selection_threshold(1.0, 0.0, 3).unwrap(), f64::INFINITY);
        assert!(matches!(selection_threshold(1.0, 0.5, 3), Err(MechanismError::SelectionDelta(_))));
    }

    #[test]
    fn single_user_item_survives_with_at_most_delta_a() {
        let phase = PhaseParams::new(&params(1.0, 0.1, 3), 0.5, Certificate::default()).unwrap();
        let q = selection_survival(3, &phase, SelectionNoise::Laplace);
        assert!((q - phase.delta_a).abs() < 1e-12);
        assert!(selection_survival(1, &phase, SelectionNoise::Laplace) < q);
    }

    #[test]
    fn config_validation() {
        assert!(PdpConfig::new(params(1.0, 0.1, 2), 0.0).is_err());
        assert!(PdpConfig::new(params(1.0, 0.1, 2), 1.0).is_err());
        let mut c = PdpConfig::new(params(1.0, 1.0, 2), 0.5).unwrap();
        assert!(c.is_vacuous());
        c.pseudonymize = false;
        assert_eq!(c.validate(), Err(MechanismError::MeaninglessDelta));
    }

    #[test]
    fn vacuous_configuration_reproduces_capped_input() {
        let log = generate_synthetic(&SyntheticParams { num_users: 40, seed: 1, ..Default::default() });
        let mut config = PdpConfig::new(params(1e6, 1.0, 3), 0.5).unwrap();
        config.timestamps = TimestampGranularity::Exact;
        let out = pdp_sanitize(&log, &config, 5).unwrap();
        let sanitized = out.release.as_log().unwrap();
        let capped = cap_user_activity(&log, 3);
        assert_eq!(sanitized.anonymous_encoding(), capped.anonymous_encoding());
        assert_eq!(sanitized.num_users(), capped.num_users());
    }

    #[test]
    fn deterministic_given_seed() {
        let log = generate_synthetic(&SyntheticParams { num_users: 200, seed: 8, ..Default::default() });
        let config = PdpConfig::new(params(4.0, 0.3, 2), 0.3).unwrap();
        let a = pdp_sanitize(&log, &config, 17).unwrap();
        let b = pdp_sanitize(&log, &config, 17).unwrap();
        assert_eq!(a, b);
        assert!(a.release.as_log().unwrap().check_invariants().is_ok());
    }

    #[test]
    fn pseudonyms_are_a_fresh_range() {
        let log = generate_synthetic(&SyntheticParams { num_users: 60, seed: 2, ..Default::default() });
        let config = PdpConfig::new(params(1.0, 1.0, 2), 0.5).unwrap();
        let out = pdp_sanitize(&log, &config, 3).unwrap();
        let sanitized = out.release.as_log().unwrap();
        let mut ids: Vec<usize> = sanitized.users().keys().map(|u| u.parse().unwrap()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=sanitized.num_users()).collect::<Vec<_>>());
        assert!(sanitized.records().all(|r| r.timestamp % DAY == 0));
    }

    #[test]
    fn zero_delta_publishes_nothing() {
        let config = PdpConfig::new(params(5.0, 0.0, 2), 0.5).unwrap();
        let out = pdp_sanitize(&fixture(), &config, 1).unwrap();
        assert!(out.release.as_log().unwrap().is_empty());
        let dist = PdpAudit::new(config).exact_distribution(&fixture()).unwrap();
        assert_eq!(dist.len(), 1);
    }

    #[test]
    fn audit_distribution_sums_to_one() {
        let config = PdpConfig::new(params(3.0, 0.2, 2), 0.5).unwrap();
        let dist = PdpAudit::new(config).exact_distribution(&fixture()).unwrap();
        assert!((dist.total_mass() - 1.0).abs() < 1e-9);
        assert!(dist.len() > 1);
    }

    #[test]
    fn audit_mode_guard() {
        let log = generate_synthetic(&SyntheticParams { num_users: 50, seed: 1, ..Default::default() });
        let config = PdpConfig::new(params(1.0, 0.5, 5), 0.5).unwrap();
        let err = PdpAudit::new(config).exact_distribution(&log).unwrap_err();
        assert!(matches!(err, AuditError::OutcomeGuard { .. }));
    }
}
