//! Closed-form expected utility of the sanitizer under its independence
//! model: item `j` survives selection with probability `q_j`, and each of
//! its `c_j` records is then kept with probability `p_j`.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::OptimizerError;
use crate::log_model::{histogram, ItemKey, ItemKind, SearchLog};
use crate::utility::{UtilityError, UtilityReport, UtilityWeights};

/// Mass below which distribution supports are truncated.
const SUPPORT_EPS: f64 = 1e-14;

/// Item counts and per-user profiles of a capped log.
#[derive(Debug, Clone)]
pub struct UtilityModel {
    items: Vec<ItemKey>,
    counts: Vec<u64>,
    clicked: Vec<bool>,
    /// Per user, `(item index, records of that user in the item)`.
    profiles: Vec<Vec<(usize, u64)>>,
    total_records: u64,
    total_pairs: f64,
}

impl UtilityModel {
    /// Builds the model of an already capped log.
    pub fn from_capped(capped: &SearchLog) -> Result<Self, OptimizerError> {
        if capped.is_empty() {
            return Err(OptimizerError::EmptyLog);
        }
        let hist = histogram(capped, ItemKind::QueryUrlPair);
        let items: Vec<ItemKey> = hist.counts().keys().cloned().collect();
        let index: BTreeMap<&ItemKey, usize> = items.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let counts: Vec<u64> = hist.counts().values().copied().collect();
        let clicked: Vec<bool> = items.iter().map(ItemKey::is_clicked_pair).collect();
        if !clicked.iter().any(|&c| c) {
            return Err(UtilityError::NoClicks.into());
        }
        let mut total_pairs = 0.0;
        let profiles = capped
            .users()
            .values()
            .map(|records| {
                let n = records.len() as f64;
                total_pairs += n * (n - 1.0) / 2.0;
                let mut per: BTreeMap<usize, u64> = BTreeMap::new();
                for r in records {
                    *per.entry(index[&r.pair_key()]).or_insert(0) += 1;
                }
                per.into_iter().collect()
            })
            .collect();
        if total_pairs == 0.0 {
            return Err(UtilityError::NoLinkablePairs.into());
        }
        Ok(UtilityModel { items, counts, clicked, profiles, total_records: hist.total(), total_pairs })
    }

    pub fn items(&self) -> &[ItemKey] {
        &self.items
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Expected value of every metric except KL, which is reported as 0.
    pub fn expected_report(&self, p: &[f64], q: &[f64]) -> Result<UtilityReport, OptimizerError> {
        if p.len() != self.len() || q.len() != self.len() {
            return Err(OptimizerError::DimensionMismatch { items: self.len(), p: p.len(), q: q.len() });
        }
        if p.iter().chain(q).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(OptimizerError::Probability);
        }

        let c_total = self.total_records as f64;
        let mut retained = 0.0;
        let mut covered = 0.0;
        let mut assoc = 0.0;
        let mut clicked = 0.0;
        for j in 0..self.len() {
            let c = self.counts[j] as f64;
            retained += c * q[j] * p[j];
            // 1 - (1 - p)^c
            let seen = q[j] * -((-p[j]).ln_1p() * c).exp_m1();
            covered += seen;
            if self.clicked[j] {
                assoc += seen;
                clicked += 1.0;
            }
        }

        let mut linked = 0.0;
        for profile in &self.profiles {
            let (mut s, mut s2, mut same) = (0.0, 0.0, 0.0);
            for &(j, a) in profile {
                let a = a as f64;
                let w = q[j] * p[j];
                s += a * w;
                s2 += a * a * w * w;
                same += a * (a - 1.0) / 2.0 * q[j] * p[j] * p[j];
            }
            linked += 0.5 * (s * s - s2) + same;
        }

        Ok(UtilityReport {
            tuple_retention: retained / c_total,
            distinct_coverage: covered / self.len() as f64,
            l1_distance: self.expected_l1(p, q),
            kl_distance: 0.0,
            association_preservation: assoc / clicked,
            session_linkage: (linked / self.total_pairs).min(1.0),
            composite: 0.0,
        })
    }

    /// Expected composite utility for per-item retention `p` and selection
    /// survival `q`.
    pub fn expected_utility(&self, p: &[f64], q: &[f64], weights: &UtilityWeights) -> Result<f64, OptimizerError> {
        let report = self.expected_report(p, q)?;
        Ok(crate::utility::composite_utility(&report, weights)?)
    }

    /// `E[L1]` between the normalized original pair distribution and the
    /// released one, 2 when nothing is released.
    ///
    /// Items with equal `(c, q, p)` are exchangeable, so the expectation is
    /// `2 P[N = 0] + sum_g n_g E|c_g / C - X / (X + R_g)|` where `X` is one
    /// item's released count and `R_g` the independent rest.
    fn expected_l1(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut groups: BTreeMap<(u64, u64, u64), usize> = BTreeMap::new();
        for j in 0..self.len() {
            *groups.entry((self.counts[j], q[j].to_bits(), p[j].to_bits())).or_insert(0) += 1;
        }
        let groups: Vec<(u64, f64, f64, usize)> =
            groups.into_iter().map(|((c, q, p), n)| (c, f64::from_bits(q), f64::from_bits(p), n)).collect();
        let pmfs: Vec<Vec<f64>> = groups.iter().map(|&(c, q, p, _)| released_pmf(c, q, p)).collect();

        let log_empty: f64 = groups.iter().zip(&pmfs).map(|(g, pmf)| g.3 as f64 * pmf[0].ln()).sum();
        let p_empty = log_empty.exp();

        let len = (self.total_records as usize + 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);

        let spectra: Vec<Vec<Complex64>> = pmfs
            .iter()
            .map(|pmf| {
                let mut buf: Vec<Complex64> =
                    (0..len).map(|i| Complex64::new(*pmf.get(i).unwrap_or(&0.0), 0.0)).collect();
                fft.process(&mut buf);
                buf
            })
            .collect();
        let totals: Vec<Vec<Complex64>> =
            spectra.iter().zip(&groups).map(|(s, g)| s.iter().map(|z| z.powi(g.3 as i32)).collect()).collect();
        let ones = vec![Complex64::new(1.0, 0.0); len];
        let mut prefix = vec![ones.clone()];
        for t in &totals {
            let last = prefix.last().expect("seeded");
            prefix.push(last.iter().zip(t).map(|(a, b)| a * b).collect());
        }
        let mut suffix = vec![ones; totals.len() + 1];
        for g in (0..totals.len()).rev() {
            suffix[g] = suffix[g + 1].iter().zip(&totals[g]).map(|(a, b)| a * b).collect();
        }

        let c_total = self.total_records as f64;
        let mut expected = 2.0 * p_empty;
        for (g, &(c, _, _, n)) in groups.iter().enumerate() {
            let mut rest: Vec<Complex64> =
                (0..len).map(|i| prefix[g][i] * suffix[g + 1][i] * spectra[g][i].powi(n as i32 - 1)).collect();
            ifft.process(&mut rest);
            let rest: Vec<f64> = rest.iter().map(|z| (z.re / len as f64).max(0.0)).collect();
            let r_support = support(&rest);
            let x_pmf = &pmfs[g];
            let x_support = support(x_pmf);
            let f = c as f64 / c_total;
            let mut e = 0.0;
            for x in x_support.clone() {
                let px = x_pmf[x];
                for r in r_support.clone() {
                    if x + r == 0 {
                        continue;
                    }
                    e += px * rest[r] * (f - x as f64 / (x + r) as f64).abs();
                }
            }
            expected += n as f64 * e;
        }
        expected.clamp(0.0, 2.0)
    }
}

/// Range of indices carrying mass above [`SUPPORT_EPS`].
fn support(pmf: &[f64]) -> std::ops::Range<usize> {
    let lo = pmf.iter().position(|&v| v > SUPPORT_EPS).unwrap_or(0);
    let hi = pmf.iter().rposition(|&v| v > SUPPORT_EPS).map_or(lo, |i| i + 1);
    lo..hi.max(lo)
}

/// Distribution of one item's released record count.
fn released_pmf(c: u64, q: f64, p: f64) -> Vec<f64> {
    let n = c as usize;
    let mut pmf = vec![0.0; n + 1];
    if p >= 1.0 {
        pmf[n] = q;
    } else if p > 0.0 {
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        let mut log_choose = 0.0;
        for (x, slot) in pmf.iter_mut().enumerate() {
            if x > 0 {
                log_choose += ((n - x + 1) as f64).ln() - (x as f64).ln();
            }
            *slot = q * (log_choose + x as f64 * lp + (n - x) as f64 * lq).exp();
        }
    } else {
        pmf[0] = q;
    }
    pmf[0] += 1.0 - q;
    pmf
}
