use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::output::{Release, ReleaseMetadata, ReleaseOutput, TokenPair};
use crate::log_model::SearchLog;
use crate::rng::{stream, Domain};

const USER_DOMAIN: u8 = 0x01;
const TOKEN_DOMAIN: u8 = 0x02;

/// 64-bit keyed hash (truncated SHA-256 of key, domain byte and data).
pub(crate) fn keyed_hash(key: u64, domain: u8, data: &[u8]) -> u64 {
    let digest = Sha256::new().chain_update(key.to_le_bytes()).chain_update([domain]).chain_update(data).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The hash [`token_hash_release`] assigns to `token` under `hash_seed`.
pub fn token_hash(hash_seed: u64, token: &str) -> u64 {
    keyed_hash(hash_seed, TOKEN_DOMAIN, token.as_bytes())
}

/// Splits every query into whitespace tokens and publishes
/// `(hash(user), hash(token))` pairs in seeded random order.
pub fn token_hash_release(log: &SearchLog, hash_seed: u64) -> ReleaseOutput {
    let mut pairs: Vec<TokenPair> = log
        .records()
        .flat_map(|r| {
            let user_hash = keyed_hash(hash_seed, USER_DOMAIN, r.user_id.as_bytes());
            r.query.split_whitespace().map(move |tok| TokenPair { user_hash, token_hash: token_hash(hash_seed, tok) })
        })
        .collect();
    pairs.shuffle(&mut stream(hash_seed, Domain::TokenShuffle, 0));
    ReleaseOutput {
        release: Release::TokenStream(pairs),
        metadata: ReleaseMetadata::new("token_hash", json!({}), Some(hash_seed)),
    }
}

/// Rank-matching frequency attack: the i-th most frequent released hash is
/// guessed to be the i-th most frequent public token. Ties break by hash
/// value and by token string respectively.
pub fn frequency_inversion_attack(
    released: &[TokenPair],
    public_frequencies: &BTreeMap<String, f64>,
) -> BTreeMap<u64, String> {
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for p in released {
        *counts.entry(p.token_hash).or_insert(0) += 1;
    }
    let mut hashes: Vec<(u64, u64)> = counts.into_iter().collect();
    hashes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut tokens: Vec<(&String, f64)> = public_frequencies.iter().map(|(t, &f)| (t, f)).collect();
    tokens.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));

    hashes.into_iter().zip(tokens).map(|((h, _), (t, _))| (h, t.clone())).collect()
}

/// Fraction of `targets` whose hash the attack maps back to the right token.
pub fn recovery_rate(guesses: &BTreeMap<u64, String>, hash_seed: u64, targets: &[&str]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = targets.iter().filter(|t| guesses.get(&token_hash(hash_seed, t)).is_some_and(|g| g == *t)).count();
    hits as f64 / targets.len() as f64
}
