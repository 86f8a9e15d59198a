use serde::{Deserialize, Serialize};

/// Privacy certificate: the largest per-record retention probability the
/// retention phase may use with budget `(eps_b, delta_b)` and cap `m`.
///
/// Retention with probability `p` has two failure modes under add/remove
/// of one user `u` (at most `m` records):
///
/// * outputs without any of `u`'s records: the likelihood ratio picks up a
///   factor `(1 - p)^-m`, which stays below `e^eps_b` when
///   `p <= 1 - e^(-eps_b / m)`;
/// * outputs showing one of `u`'s records: these can have an unbounded
///   ratio. Their mass is at most `1 - (1 - p)^m`, and after merging with
///   look-alike outputs of other users the violating mass is at most that
///   amount divided by `1 - e^(-eps_b)`. Keeping it below `delta_b` gives
///   `p <= 1 - (1 - delta_b (1 - e^(-eps_b)))^(1/m)`.
///
/// [`Certificate::LeakBounded`] enforces both; [`Certificate::RatioOnly`]
/// enforces only the first and is kept to show that the enumeration audit
/// rejects it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    #[default]
    LeakBounded,
    RatioOnly,
}

impl Certificate {
    pub fn bound(self, eps_b: f64, delta_b: f64, cap_m: usize) -> f64 {
        let m = cap_m.max(1) as f64;
        // 1 - e^(-eps_b/m)
        let ratio = -(-eps_b / m).exp_m1();
        let p = match self {
            Certificate::RatioOnly => ratio,
            Certificate::LeakBounded => {
                let leak = delta_b.clamp(0.0, 1.0) * -(-eps_b).exp_m1();
                // 1 - (1 - leak)^(1/m)
                let leak_p = -((-leak).ln_1p() / m).exp_m1();
                ratio.min(leak_p)
            }
        };
        p.clamp(0.0, 1.0)
    }

    pub fn describe(self) -> &'static str {
        match self {
            Certificate::LeakBounded => "p <= min(1 - exp(-eps_b/m), 1 - (1 - delta_b*(1 - exp(-eps_b)))^(1/m))",
            Certificate::RatioOnly => "p <= 1 - exp(-eps_b/m)",
        }
    }
}

/// Retention bound of the default certificate.
pub fn retention_bound(eps_b: f64, delta_b: f64, cap_m: usize) -> f64 {
    Certificate::default().bound(eps_b, delta_b, cap_m)
}
