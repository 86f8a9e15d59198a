use std::collections::BTreeMap;

use rand_distr::Distribution;
use serde_json::json;

use super::output::{Release, ReleaseMetadata, ReleaseOutput};
use super::token_hash::keyed_hash;
use super::{invalid, MechanismError};
use crate::log_model::{cap_user_activity, histogram, ItemKey, ItemKind, SearchLog};
use crate::privacy::{Laplace, PrivacyParams};
use crate::rng::{stream, Domain};

/// Stable per-item noise index, independent of which other items exist.
pub(crate) fn item_index(key: &ItemKey) -> u64 {
    let (tag, url) = match key {
        ItemKey::Query(_) => (0u8, None),
        ItemKey::Pair { url, .. } => (1u8, url.as_deref()),
    };
    let mut data = key.query().as_bytes().to_vec();
    data.push(0);
    data.extend_from_slice(url.unwrap_or("\0none").as_bytes());
    keyed_hash(0, tag, &data)
}

/// Aggregate release of capped query and query-url counts with Laplace
/// noise of scale `m / epsilon`; only items present in the log are
/// candidates and only noisy counts `>= tau` are published.
pub fn laplace_histogram_release(
    log: &SearchLog,
    privacy: &PrivacyParams,
    tau: f64,
    seed: u64,
) -> Result<ReleaseOutput, MechanismError> {
    privacy.validate()?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("must be a finite non-negative number, got {tau}")));
    }
    let capped = cap_user_activity(log, privacy.cap_m);
    let noise = Laplace::new(privacy.cap_m as f64 / privacy.epsilon)?;
    let mut published = BTreeMap::new();
    for kind in [ItemKind::Query, ItemKind::QueryUrlPair] {
        for (key, &count) in histogram(&capped, kind).counts() {
            let mut rng = stream(seed, Domain::LaplaceHistogram, item_index(key));
            let noisy = count as f64 + noise.sample(&mut rng);
            if noisy >= tau {
                published.insert(key.clone(), noisy);
            }
        }
    }
    Ok(ReleaseOutput {
        release: Release::NoisyHistogram(published),
        metadata: ReleaseMetadata::new(
            "laplace_hist",
            json!({ "epsilon": privacy.epsilon, "cap_m": privacy.cap_m, "tau": tau }),
            Some(seed),
        ),
    })
}
