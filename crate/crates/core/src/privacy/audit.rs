//! Exact-enumeration privacy auditing.
//!
//! An auditor takes a mechanism that can report its *exact* output
//! distribution on a log, and a family of base logs. For every base log `D`
//! and every user `u` of `D` it forms the neighbor `D' = D - u` and compares
//! the two output distributions in both directions:
//!
//! * the pure audit records `max_o P[M(D)=o] / P[M(D')=o]`;
//! * the probabilistic audit records the mass, under `M(D)`, of the outputs
//!   where that ratio exceeds `e^eps`.
//!
//! Sampling is never used, so a passing report is a certificate for the
//! audited inputs, not an estimate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::log_model::{remove_user, SearchLog};

/// Maximum number of distinct outcomes a mechanism may enumerate.
pub const OUTCOME_GUARD: usize = 1_000_000;

/// Relative slack allowed on `e^eps` when comparing likelihood ratios.
pub const RATIO_TOLERANCE: f64 = 1e-9;

const MASS_TOLERANCE: f64 = 1e-12;

pub const PROBABILISTIC_DP_DEFINITION: &str = "violating mass: max over ordered neighbor pairs (D, D') \
of P[M(D) in V], V = {o : P[M(D)=o] > e^eps * P[M(D')=o]}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("output space has {outcomes} outcomes, above the enumeration guard of {limit}")]
    OutcomeGuard { outcomes: u128, limit: usize },
    #[error("invalid output distribution: {0}")]
    InvalidDistribution(String),
    #[error("mechanism failed: {0}")]
    Mechanism(String),
}

/// A finite output distribution keyed by canonical output encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution {
    outcomes: BTreeMap<String, f64>,
}

impl OutputDistribution {
    /// Validates unique encodings, non-negative mass and a total of 1.
    pub fn new(outcomes: Vec<(String, f64)>) -> Result<Self, AuditError> {
        let mut map = BTreeMap::new();
        for (enc, p) in outcomes {
            if map.contains_key(&enc) {
                return Err(AuditError::InvalidDistribution(format!("duplicate outcome {enc:?}")));
            }
            map.insert(enc, p);
        }
        Self::checked(map)
    }

    /// Sums the probabilities of repeated encodings, then validates.
    pub fn accumulate(outcomes: impl IntoIterator<Item = (String, f64)>) -> Result<Self, AuditError> {
        let mut map: BTreeMap<String, f64> = BTreeMap::new();
        for (enc, p) in outcomes {
            *map.entry(enc).or_insert(0.0) += p;
        }
        Self::checked(map)
    }

    /// A point mass.
    pub fn certain(encoding: impl Into<String>) -> Self {
        OutputDistribution { outcomes: BTreeMap::from([(encoding.into(), 1.0)]) }
    }

    fn checked(mut outcomes: BTreeMap<String, f64>) -> Result<Self, AuditError> {
        if outcomes.len() > OUTCOME_GUARD {
            return Err(AuditError::OutcomeGuard { outcomes: outcomes.len() as u128, limit: OUTCOME_GUARD });
        }
        if let Some((enc, p)) = outcomes.iter().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(AuditError::InvalidDistribution(format!("outcome {enc:?} has mass {p}")));
        }
        let total: f64 = outcomes.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AuditError::InvalidDistribution(format!("total mass {total}")));
        }
        outcomes.retain(|_, p| *p > 0.0);
        Ok(OutputDistribution { outcomes })
    }

    pub fn probability(&self, encoding: &str) -> f64 {
        self.outcomes.get(encoding).copied().unwrap_or(0.0)
    }

    pub fn outcomes(&self) -> &BTreeMap<String, f64> {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.outcomes.values().sum()
    }
}

/// A mechanism whose output distribution on a log can be enumerated.
pub trait ExactMechanism: Sync {
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError>;
}

impl<F> ExactMechanism for F
where
    F: Fn(&SearchLog) -> Result<OutputDistribution, AuditError> + Sync,
{
    fn exact_distribution(&self, log: &SearchLog) -> Result<OutputDistribution, AuditError> {
        self(log)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon_tested: f64,
    pub delta_tested: f64,
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub max_ratio: f64,
    pub violating_mass: f64,
    pub pass: bool,
    pub worst_neighbor_pair: String,
    pub definition: String,
}

fn ser_ratio<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_ratio<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ratio {
        Number(f64),
        Text(String),
    }
    match Ratio::deserialize(d)? {
        Ratio::Number(v) => Ok(v),
        Ratio::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Ratio::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
    }
}

#[derive(Debug, Clone)]
struct DirectionStats {
    max_ratio: f64,
    violating_mass: f64,
    label: String,
}

/// Ratio and violating mass of `p` against `q` at threshold `e^epsilon`.
fn compare(p: &OutputDistribution, q: &OutputDistribution, epsilon: f64) -> (f64, f64) {
    let bound = epsilon.exp();
    let mut max_ratio: f64 = 0.0;
    let mut violating = 0.0;
    for (enc, &pp) in p.outcomes() {
        let qq = q.probability(enc);
        let ratio = if qq > 0.0 { pp / qq } else { f64::INFINITY };
        max_ratio = max_ratio.max(ratio);
        if pp > bound * qq * (1.0 + RATIO_TOLERANCE) {
            violating += pp;
        }
    }
    (max_ratio, violating)
}

fn neighbor_stats<M: ExactMechanism + ?Sized>(
    mechanism: &M,
    base_logs: &[SearchLog],
    epsilon: f64,
) -> Result<Vec<DirectionStats>, AuditError> {
    let base_dists: Vec<OutputDistribution> =
        base_logs.par_iter().map(|d| mechanism.exact_distribution(d)).collect::<Result<_, _>>()?;

    let pairs: Vec<(usize, &String)> =
        base_logs.iter().enumerate().flat_map(|(i, d)| d.users().keys().map(move |u| (i, u))).collect();

    let per_pair: Vec<Vec<DirectionStats>> = pairs
        .par_iter()
        .map(|&(i, user)| {
            let neighbor = remove_user(&base_logs[i], user).expect("user taken from the log");
            let nd = mechanism.exact_distribution(&neighbor)?;
            let (r1, v1) = compare(&base_dists[i], &nd, epsilon);
            let (r2, v2) = compare(&nd, &base_dists[i], epsilon);
            Ok(vec![
                DirectionStats {
                    max_ratio: r1,
                    violating_mass: v1,
                    label: format!("base log {i} vs base log {i} without user {user:?}"),
                },
                DirectionStats {
                    max_ratio: r2,
                    violating_mass: v2,
                    label: format!("base log {i} without user {user:?} vs base log {i}"),
                },
            ])
        })
        .collect::<Result<_, AuditError>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

fn report(stats: &[DirectionStats], epsilon: f64, delta: f64, by_ratio: bool) -> AuditReport {
    let max_ratio = stats.iter().map(|s| s.max_ratio).fold(0.0, f64::max);
    let violating_mass = stats.iter().map(|s| s.violating_mass).fold(0.0, f64::max);
    let worst = if by_ratio {
        stats.iter().max_by(|a, b| a.max_ratio.total_cmp(&b.max_ratio))
    } else {
        stats.iter().max_by(|a, b| a.violating_mass.total_cmp(&b.violating_mass))
    };
    let pass = if by_ratio {
        max_ratio <= epsilon.exp() * (1.0 + RATIO_TOLERANCE)
    } else {
        violating_mass <= delta + MASS_TOLERANCE
    };
    AuditReport {
        epsilon_tested: epsilon,
        delta_tested: delta,
        max_ratio,
        violating_mass,
        pass,
        worst_neighbor_pair: worst.map(|s| s.label.clone()).unwrap_or_else(|| "none".into()),
        definition: PROBABILISTIC_DP_DEFINITION.to_string(),
    }
}

/// Certifies (or refutes) pure epsilon-DP on every neighbor pair.
pub fn audit_pure_dp<M: ExactMechanism + ?Sized>(
    mechanism: &M,
    base_logs: &[SearchLog],
    epsilon: f64,
) -> Result<AuditReport, AuditError> {
    let stats = neighbor_stats(mechanism, base_logs, epsilon)?;
    Ok(report(&stats, epsilon, 0.0, true))
}

/// Certifies (or refutes) (epsilon, delta)-probabilistic DP.
pub fn audit_probabilistic_dp<M: ExactMechanism + ?Sized>(
    mechanism: &M,
    base_logs: &[SearchLog],
    epsilon: f64,
    delta: f64,
) -> Result<AuditReport, AuditError> {
    let stats = neighbor_stats(mechanism, base_logs, epsilon)?;
    Ok(report(&stats, epsilon, delta, false))
}
