use rand::Rng;
use rand_distr::Distribution;

use super::PrivacyError;
use crate::rng::open_unit;

/// Inverse CDF of the zero-centred Laplace distribution with scale `scale_b`.
pub fn laplace_inverse_cdf(u: f64, scale_b: f64) -> Result<f64, PrivacyError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(PrivacyError::Unit(u));
    }
    if !(scale_b > 0.0 && scale_b.is_finite()) {
        return Err(PrivacyError::Scale(scale_b));
    }
    let c = u - 0.5;
    // ln_1p keeps precision near the median
    Ok(-scale_b * c.signum() * (-2.0 * c.abs()).ln_1p())
}

/// `P[L >= x]` for `L ~ Laplace(0, b)`.
pub fn laplace_tail(x: f64, b: f64) -> f64 {
    if x > 0.0 {
        0.5 * (-x / b).exp()
    } else {
        1.0 - 0.5 * (x / b).exp()
    }
}

/// Laplace noise sampler driven by inverse-CDF transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self, PrivacyError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PrivacyError::Scale(scale));
        }
        Ok(Laplace { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl Distribution<f64> for Laplace {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open_unit(rng);
        laplace_inverse_cdf(u, self.scale).expect("u in (0,1), scale validated")
    }
}

/// Two-sided geometric pmf `(1-a)/(1+a) * a^|k|`.
pub fn geometric_noise_pmf(k: i64, alpha: f64) -> f64 {
    (1.0 - alpha) / (1.0 + alpha) * alpha.powf(k.unsigned_abs() as f64)
}

/// `P[N >= k]` for two-sided geometric noise `N`.
pub fn geometric_tail(k: i64, alpha: f64) -> f64 {
    if k >= 1 {
        alpha.powf(k as f64) / (1.0 + alpha)
    } else {
        1.0 - alpha.powf((1 - k) as f64) / (1.0 + alpha)
    }
}

/// L1 sensitivity of a histogram over logs capped at `cap_m` records per
/// user, under add/remove-one-user neighbors.
pub fn user_level_sensitivity(cap_m: usize) -> usize {
    cap_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_model::{build_log, cap_user_activity, histogram, remove_user, ItemKind, QueryRecord};

    #[test]
    fn inverse_cdf_values() {
        assert_eq!(laplace_inverse_cdf(0.5, 3.0).unwrap(), 0.0);
        // F^-1(0.25) = b ln(2 * 0.25) = -ln 2
        assert!((laplace_inverse_cdf(0.25, 1.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(laplace_inverse_cdf(0.0, 1.0).is_err());
        assert!(laplace_inverse_cdf(1.0, 1.0).is_err());
        assert!(laplace_inverse_cdf(0.3, 0.0).is_err());
    }

    #[test]
    fn inverse_cdf_inverts_cdf() {
        for &x in &[-4.0, -0.3, 0.2, 5.0] {
            let cdf = 1.0 - laplace_tail(x, 2.0);
            assert!((laplace_inverse_cdf(cdf, 2.0).unwrap() - x).abs() < 1e-9);
        }
    }

    #[test]
    fn geometric_pmf_values() {
        assert!((geometric_noise_pmf(0, 0.5) - 1.0 / 3.0).abs() < 1e-15);
        for k in 0..20 {
            assert_eq!(geometric_noise_pmf(k, 0.7), geometric_noise_pmf(-k, 0.7));
        }
        let total: f64 = (-60..=60).map(|k| geometric_noise_pmf(k, 0.5)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_tail_matches_pmf_sums() {
        let alpha = 0.6;
        for k in -10..10 {
            let direct: f64 = (k..400).map(|j| geometric_noise_pmf(j, alpha)).sum();
            assert!((geometric_tail(k, alpha) - direct).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn sensitivity_is_cap() {
        assert_eq!(user_level_sensitivity(1), 1);
        assert_eq!(user_level_sensitivity(5), 5);
    }

    /// Brute force over every log with at most 3 users holding at most 3
    /// records each (two queries, two click states).
    #[test]
    fn exhaustive_sensitivity_bound() {
        let alphabet = [("a", None), ("a", Some("x")), ("b", None)];
        let mut histories: Vec<Vec<usize>> = vec![vec![]];
        for len in 1..=3 {
            let mut frontier = vec![vec![]];
            for _ in 0..len {
                frontier = frontier
                    .into_iter()
                    .flat_map(|h: Vec<usize>| (0..alphabet.len()).map(move |s| [h.clone(), vec![s]].concat()))
                    .collect();
            }
            histories.extend(frontier);
        }
        let mut worst = 0;
        for a in &histories {
            for b in &histories {
                for c in &histories {
                    let mut records = Vec::new();
                    for (u, h) in [a, b, c].iter().enumerate() {
                        for (t, &s) in h.iter().enumerate() {
                            let (q, url) = alphabet[s];
                            records.push(
                                QueryRecord::new(format!("u{u}"), q, t as i64, url.map(String::from), None).unwrap(),
                            );
                        }
                    }
                    let log = cap_user_activity(&build_log(records).unwrap(), 2);
                    for kind in [ItemKind::Query, ItemKind::QueryUrlPair] {
                        let full = histogram(&log, kind);
                        for user in log.users().keys() {
                            let without = histogram(&remove_user(&log, user).unwrap(), kind);
                            worst = worst.max(full.l1_distance(&without));
                        }
                    }
                }
            }
        }
        assert_eq!(worst as usize, user_level_sensitivity(2));
    }
}
