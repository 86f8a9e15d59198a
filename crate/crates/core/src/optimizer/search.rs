use serde::{Deserialize, Serialize};

use super::{Certificate, OptimizerError, UtilityModel};
use crate::log_model::{build_log, cap_user_activity, ItemKey, ItemKind, QueryRecord, SearchLog};
use crate::mechanisms::{selection_survival, PhaseParams, Release, SelectionNoise};
use crate::privacy::PrivacyParams;
use crate::utility::{evaluate, UtilityWeights};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1.0 - 1e-6;
const GUARD_POINTS: usize = 20;
const ORACLE_MAX_ITEMS: usize = 4;
const ORACLE_MAX_RECORDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanItem {
    pub query: String,
    pub url: Option<String>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionPlan {
    pub rho: f64,
    pub expected_utility: f64,
    pub certificate: String,
    pub items: Vec<PlanItem>,
}

impl RetentionPlan {
    pub fn p(&self, key: &ItemKey) -> Option<f64> {
        self.items.iter().find(|it| it.query == key.query() && it.url.as_deref() == key.url()).map(|it| it.p)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan is plain JSON")
    }
}

/// How [`maximize_retention`] picks the budget split.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSearch {
    /// Golden-section search with a coarse-grid unimodality guard.
    Golden { tolerance: f64 },
    /// Best of the given candidates.
    Grid(Vec<f64>),
}

impl Default for RhoSearch {
    fn default() -> Self {
        RhoSearch::Golden { tolerance: 1e-4 }
    }
}

struct Objective<'a> {
    model: UtilityModel,
    privacy: &'a PrivacyParams,
    weights: &'a UtilityWeights,
}

impl Objective<'_> {
    fn survival(&self, phase: &PhaseParams) -> Vec<f64> {
        self.model.counts().iter().map(|&c| selection_survival(c, phase, SelectionNoise::Laplace)).collect()
    }

    fn eval(&self, rho: f64) -> Result<(f64, PhaseParams), OptimizerError> {
        let phase = PhaseParams::new(self.privacy, rho, Certificate::default())?;
        let p = vec![phase.retention_p; self.model.len()];
        let value = self.model.expected_utility(&p, &self.survival(&phase), self.weights)?;
        Ok((value, phase))
    }

    fn golden(&self, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64), OptimizerError> {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = self.eval(x1)?.0;
        let mut f2 = self.eval(x2)?.0;
        while b - a > tol {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = self.eval(x1)?.0;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = self.eval(x2)?.0;
            }
        }
        let mid = (a + b) / 2.0;
        let candidates = [(x1, f1), (x2, f2), (mid, self.eval(mid)?.0)];
        Ok(candidates.into_iter().fold((mid, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best }))
    }

    fn plan(&self, rho: f64) -> Result<RetentionPlan, OptimizerError> {
        let (value, phase) = self.eval(rho)?;
        Ok(RetentionPlan {
            rho,
            expected_utility: value,
            certificate: Certificate::default().describe().to_string(),
            items: self
                .model
                .items()
                .iter()
                .map(|k| PlanItem {
                    query: k.query().to_string(),
                    url: k.url().map(str::to_string),
                    p: phase.retention_p,
                })
                .collect(),
        })
    }
}

/// Plan with every `p_j` at the certificate bound for a fixed split.
pub fn plan_for_rho(
    log: &SearchLog,
    privacy: &PrivacyParams,
    weights: &UtilityWeights,
    rho: f64,
) -> Result<RetentionPlan, OptimizerError> {
    objective(log, privacy, weights)?.plan(rho)
}

fn objective<'a>(
    log: &SearchLog,
    privacy: &'a PrivacyParams,
    weights: &'a UtilityWeights,
) -> Result<Objective<'a>, OptimizerError> {
    privacy.validate().map_err(crate::mechanisms::MechanismError::from)?;
    weights.validate()?;
    let model = UtilityModel::from_capped(&cap_user_activity(log, privacy.cap_m))?;
    Ok(Objective { model, privacy, weights })
}

/// Sets every retention probability to the certificate bound and picks the
/// split `rho` maximizing expected utility.
///
/// Expected utility is non-decreasing in every record term as `p` grows,
/// so the bound is the natural choice; the distance term is the one
/// component that can dip, which the oracle comparison covers.
pub fn maximize_retention(
    log: &SearchLog,
    privacy: &PrivacyParams,
    weights: &UtilityWeights,
    search: &RhoSearch,
) -> Result<RetentionPlan, OptimizerError> {
    let obj = objective(log, privacy, weights)?;
    let rho = match search {
        RhoSearch::Grid(candidates) => {
            if candidates.is_empty() || candidates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
                return Err(OptimizerError::Search("rho candidates must be non-empty and inside (0, 1)".into()));
            }
            let mut best = (candidates[0], f64::NEG_INFINITY);
            for &r in candidates {
                let v = obj.eval(r)?.0;
                if v > best.1 {
                    best = (r, v);
                }
            }
            best.0
        }
        RhoSearch::Golden { tolerance } => {
            if tolerance.is_nan() || *tolerance <= 0.0 {
                return Err(OptimizerError::Search("tolerance must be positive".into()));
            }
            let mut best = obj.golden(RHO_MIN, RHO_MAX, *tolerance)?;
            let grid: Vec<(f64, f64)> = (0..GUARD_POINTS)
                .map(|i| {
                    let r = (i as f64 + 0.5) / GUARD_POINTS as f64;
                    obj.eval(r).map(|(v, _)| (r, v))
                })
                .collect::<Result<_, _>>()?;
            let (i, &(gr, gv)) =
                grid.iter().enumerate().fold((0, &grid[0]), |b, (i, g)| if g.1 > b.1 .1 { (i, g) } else { b });
            if gv > best.1 + 1e-12 {
                // not unimodal: search again around the best grid point
                let lo = if i == 0 { RHO_MIN } else { grid[i - 1].0 };
                let hi = if i + 1 == grid.len() { RHO_MAX } else { grid[i + 1].0 };
                let local = obj.golden(lo, hi, *tolerance)?;
                best = if local.1 >= gv { local } else { (gr, gv) };
            }
            best.0
        }
    };
    obj.plan(rho)
}

/// Candidate grid for [`grid_search_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub enum OracleGrid {
    /// Exactly these `(rho, p)` combinations.
    Explicit { rhos: Vec<f64>, ps: Vec<f64> },
    /// Full grid at the first step, then successively finer grids around
    /// the incumbent.
    Staged { steps: Vec<f64> },
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid::Staged { steps: vec![0.05, 0.01, 0.001] }
    }
}

/// Brute-force reference for [`maximize_retention`] on tiny logs.
///
/// Expected utility is computed by enumerating every retention outcome and
/// scoring it with [`evaluate`]; the search runs over a `(rho, uniform p)`
/// grid, with `p` also tried at the certificate bound. Infeasible points
/// are skipped.
pub fn grid_search_oracle(
    log: &SearchLog,
    privacy: &PrivacyParams,
    weights: &UtilityWeights,
    grid: &OracleGrid,
) -> Result<RetentionPlan, OptimizerError> {
    privacy.validate().map_err(crate::mechanisms::MechanismError::from)?;
    weights.validate()?;
    let capped = cap_user_activity(log, privacy.cap_m);
    let model = UtilityModel::from_capped(&capped)?;
    if model.len() > ORACLE_MAX_ITEMS {
        return Err(OptimizerError::Guard { what: "items", found: model.len(), limit: ORACLE_MAX_ITEMS });
    }
    let records: Vec<QueryRecord> = capped.records().cloned().collect();
    if records.len() > ORACLE_MAX_RECORDS {
        return Err(OptimizerError::Guard { what: "records", found: records.len(), limit: ORACLE_MAX_RECORDS });
    }
    let item_of: Vec<usize> = records
        .iter()
        .map(|r| model.items().iter().position(|k| *k == r.pair_key()).expect("item of a capped record"))
        .collect();

    let scores: Vec<f64> = (0u32..1 << records.len())
        .map(|mask| {
            let kept = records.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, r)| r.clone());
            let out = build_log(kept).expect("records already valid");
            evaluate(&capped, &Release::SanitizedLog(out), ItemKind::QueryUrlPair, weights).map(|r| r.composite)
        })
        .collect::<Result<_, _>>()?;

    let value = |p: f64, q: &[f64]| -> f64 {
        let mut total = 0.0;
        for (mask, score) in scores.iter().enumerate() {
            let mut prob = 1.0;
            for (j, &qj) in q.iter().enumerate() {
                let (mut c, mut k) = (0, 0);
                for (i, _) in item_of.iter().enumerate().filter(|(_, &it)| it == j) {
                    c += 1;
                    k += mask >> i & 1;
                }
                prob *= if k == 0 {
                    1.0 - qj + qj * (1.0 - p).powi(c)
                } else {
                    qj * p.powi(k as i32) * (1.0 - p).powi(c - k as i32)
                };
            }
            total += prob * score;
        }
        total
    };

    type Best = Option<(f64, f64, f64)>;
    let consider = |best: &mut Best, rhos: &[f64], ps: &[f64], with_bound: bool| -> Result<(), OptimizerError> {
        for &rho in rhos {
            let phase = PhaseParams::new(privacy, rho, Certificate::default())?;
            let q: Vec<f64> =
                model.counts().iter().map(|&c| selection_survival(c, &phase, SelectionNoise::Laplace)).collect();
            let bound = phase.retention_p;
            let extra = with_bound.then_some(bound);
            for p in ps.iter().copied().chain(extra) {
                if !(0.0..=1.0).contains(&p) || p > bound + 1e-12 {
                    continue;
                }
                let v = value(p, &q);
                if best.is_none_or(|b| v > b.2) {
                    *best = Some((rho, p, v));
                }
            }
        }
        Ok(())
    };

    let mut best: Best = None;
    match grid {
        OracleGrid::Explicit { rhos, ps } => consider(&mut best, rhos, ps, false)?,
        OracleGrid::Staged { steps } => {
            let mut previous: Option<f64> = None;
            for &step in steps {
                if !(step > 0.0 && step < 1.0) {
                    return Err(OptimizerError::Search(format!("grid step {step} outside (0, 1)")));
                }
                let (rho_lo, rho_hi, p_lo, p_hi) = match (previous, best) {
                    (Some(prev), Some((r, p, _))) => (r - prev, r + prev, p - prev, p + prev),
                    _ => (step, 1.0 - step, 0.0, 1.0),
                };
                let rhos = ticks(rho_lo.max(step / 2.0), rho_hi.min(1.0 - step / 2.0), step);
                let ps = ticks(p_lo.max(0.0), p_hi.min(1.0), step);
                consider(&mut best, &rhos, &ps, true)?;
                previous = Some(step);
            }
        }
    }

    let (rho, p, v) = best.ok_or_else(|| OptimizerError::Search("no feasible grid point".into()))?;
    Ok(RetentionPlan {
        rho,
        expected_utility: v,
        certificate: Certificate::default().describe().to_string(),
        items: model
            .items()
            .iter()
            .map(|k| PlanItem { query: k.query().to_string(), url: k.url().map(str::to_string), p })
            .collect(),
    })
}

/// Points `lo, lo + step, ...` up to `hi`, snapped to multiples of `step`.
fn ticks(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| (i as f64 * step * 1e9).round() / 1e9).collect()
}
