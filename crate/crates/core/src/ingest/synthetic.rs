use rand::Rng;
use rand_distr::{Distribution, Geometric, Zipf};
use serde::{Deserialize, Serialize};

use crate::log_model::{build_log, QueryRecord, SearchLog};
use crate::rng::{stream, Domain};

/// 2006-03-01 00:00:00 UTC, start of the synthetic collection window.
const EPOCH_START: i64 = 1_141_171_200;
const WINDOW_SECS: i64 = 31 * 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub num_users: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Expected records per user; counts are geometric with minimum 1.
    pub mean_activity: f64,
    pub click_prob: f64,
    pub urls_per_query: usize,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            num_users: 100,
            vocab_size: 1000,
            zipf_exponent: 1.0,
            mean_activity: 5.0,
            click_prob: 0.5,
            urls_per_query: 3,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    /// Returns the name of the first out-of-range field.
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.vocab_size == 0 {
            return Err("vocab_size");
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err("zipf_exponent");
        }
        if !(self.mean_activity > 0.0 && self.mean_activity.is_finite()) {
            return Err("mean_activity");
        }
        if !(0.0..=1.0).contains(&self.click_prob) {
            return Err("click_prob");
        }
        if self.urls_per_query == 0 {
            return Err("urls_per_query");
        }
        Ok(())
    }
}

/// Vocabulary entry for Zipf rank `rank` (1-based): `q0001`, `q0002`, ...
pub fn query_token(rank: usize, vocab_size: usize) -> String {
    let width = vocab_size.to_string().len().max(4);
    format!("q{rank:0width$}")
}

pub fn harmonic_number(n: usize, exponent: f64) -> f64 {
    (1..=n).map(|k| (k as f64).powf(-exponent)).sum()
}

/// Generates a log that is a pure function of `params`.
///
/// # Panics
/// If `params` fails [`SyntheticParams::validate`].
pub fn generate_synthetic(params: &SyntheticParams) -> SearchLog {
    if let Err(field) = params.validate() {
        panic!("invalid synthetic parameter {field}");
    }
    let zipf = Zipf::new(params.vocab_size as f64, params.zipf_exponent).expect("validated");
    let extra = (params.mean_activity > 1.0).then(|| Geometric::new(1.0 / params.mean_activity).expect("p in (0,1)"));

    let mut records = Vec::new();
    for user in 0..params.num_users {
        let mut rng = stream(params.seed, Domain::SyntheticUser, user as u64);
        let user_id = (user + 1).to_string();
        let count = 1 + extra.as_ref().map_or(0, |g| g.sample(&mut rng)) as usize;
        let mut t = EPOCH_START + rng.random_range(0..WINDOW_SECS);
        for _ in 0..count {
            let rank = zipf.sample(&mut rng) as usize;
            let query = query_token(rank, params.vocab_size);
            let (url, item_rank) = if rng.random_bool(params.click_prob) {
                let r = rng.random_range(1..=params.urls_per_query);
                (Some(format!("http://www.{query}-{r}.com")), Some(r as u32))
            } else {
                (None, None)
            };
            records.push(
                QueryRecord::new(user_id.clone(), query, t, url, item_rank).expect("generated records are valid"),
            );
            t += rng.random_range(1..=3_600);
        }
    }
    build_log(records).expect("generated records are valid")
}
