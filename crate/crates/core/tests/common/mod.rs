#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use searchlog::ingest::parse_tsv_str;
use searchlog::log_model::{build_log, QueryRecord, SearchLog};
use searchlog::rng::{stream, Domain};

pub const TINY_FIXTURES: [&str; 4] = ["tiny_two_users", "tiny_three_users", "tiny_shared_item", "tiny_mixed"];

/// Per-user cap the tiny fixtures are audited with.
pub const TINY_CAP: usize = 2;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.tsv"))
}

pub fn fixture(name: &str) -> SearchLog {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_tsv_str(&text).expect("fixture parses")
}

pub fn tiny_fixtures() -> Vec<(&'static str, SearchLog)> {
    TINY_FIXTURES.iter().map(|&n| (n, fixture(n))).collect()
}

/// A random small log with multi-word queries, clicks and timestamp ties.
pub fn random_log(seed: u64) -> SearchLog {
    let mut rng = stream(seed, Domain::Sampler, 0xf1);
    let words = ["apple", "pie", "news", "maps", "rust", "weather", "jobs"];
    let users = rng.random_range(0..8);
    let mut records = Vec::new();
    for u in 0..users {
        for _ in 0..rng.random_range(1..7) {
            let n = rng.random_range(1..4);
            let query: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            let ts = 1_141_171_200 + rng.random_range(0..5) * 43_200;
            let record = if rng.random_bool(0.5) {
                let r = rng.random_range(1..4u32);
                QueryRecord::new(format!("{}", 100 + u), query.join(" "), ts, Some(format!("http://r{r}.com")), Some(r))
            } else {
                QueryRecord::no_click(format!("{}", 100 + u), query.join(" "), ts)
            };
            records.push(record.expect("generated record is valid"));
        }
    }
    build_log(records).expect("valid")
}
