use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::log_model::{ItemKey, ItemKind, SearchLog};

/// One released (hashed user, hashed token) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenPair {
    pub user_hash: u64,
    pub token_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Release {
    SanitizedLog(SearchLog),
    /// Noisy counts; keys of both kinds may be present.
    NoisyHistogram(BTreeMap<ItemKey, f64>),
    QuerySet(BTreeSet<String>),
    TokenStream(Vec<TokenPair>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseMetadata {
    pub mechanism: String,
    pub params: Map<String, Value>,
    pub seed: Option<u64>,
}

impl ReleaseMetadata {
    pub fn new(mechanism: &str, params: Value, seed: Option<u64>) -> Self {
        let params = match params {
            Value::Object(m) => m,
            other => Map::from_iter([("value".to_string(), other)]),
        };
        ReleaseMetadata { mechanism: mechanism.to_string(), params, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutput {
    pub release: Release,
    pub metadata: ReleaseMetadata,
}

impl Release {
    pub fn as_log(&self) -> Option<&SearchLog> {
        match self {
            Release::SanitizedLog(log) => Some(log),
            _ => None,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        !matches!(self, Release::SanitizedLog(_))
    }

    /// JSON form of an aggregate release; `None` for a sanitized log, which
    /// is written as TSV instead.
    pub fn to_json(&self) -> Option<Value> {
        match self {
            Release::SanitizedLog(_) => None,
            Release::NoisyHistogram(entries) => Some(Value::Array(
                entries
                    .iter()
                    .map(|(k, v)| {
                        json!({
                            "kind": match k.kind() {
                                ItemKind::Query => "query",
                                ItemKind::QueryUrlPair => "pair",
                            },
                            "query": k.query(),
                            "url": k.url(),
                            "noisy_count": v,
                        })
                    })
                    .collect(),
            )),
            Release::QuerySet(queries) => Some(json!(queries)),
            Release::TokenStream(pairs) => Some(Value::Array(
                pairs
                    .iter()
                    .map(|p| json!([format!("{:016x}", p.user_hash), format!("{:016x}", p.token_hash)]))
                    .collect(),
            )),
        }
    }

    /// Reads an aggregate release back from its JSON form. An empty array
    /// reads as an empty query set.
    pub fn from_json(value: &Value) -> Result<Release, String> {
        let items = value.as_array().ok_or("release JSON must be an array")?;
        let Some(first) = items.first() else {
            return Ok(Release::QuerySet(BTreeSet::new()));
        };
        match first {
            Value::String(_) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or("mixed query set entries".to_string()))
                .collect::<Result<_, _>>()
                .map(Release::QuerySet),
            Value::Array(_) => items
                .iter()
                .map(|v| {
                    let pair = v.as_array().filter(|a| a.len() == 2).ok_or("token pair must have 2 entries")?;
                    let parse = |x: &Value| {
                        x.as_str()
                            .and_then(|s| u64::from_str_radix(s, 16).ok())
                            .ok_or("token hashes must be hex strings")
                    };
                    Ok(TokenPair { user_hash: parse(&pair[0])?, token_hash: parse(&pair[1])? })
                })
                .collect::<Result<_, String>>()
                .map(Release::TokenStream),
            Value::Object(_) => items
                .iter()
                .map(|v| {
                    let query = v["query"].as_str().ok_or("histogram entry without query")?.to_string();
                    let url = v["url"].as_str().map(str::to_string);
                    let count = v["noisy_count"].as_f64().ok_or("histogram entry without noisy_count")?;
                    let key = match v["kind"].as_str().unwrap_or("pair") {
                        "query" => ItemKey::Query(query),
                        "pair" => ItemKey::Pair { query, url },
                        other => return Err(format!("unknown histogram kind {other:?}")),
                    };
                    Ok((key, count))
                })
                .collect::<Result<_, String>>()
                .map(Release::NoisyHistogram),
            _ => Err("unrecognised release JSON".into()),
        }
    }
}

impl ReleaseOutput {
    pub fn metadata_json(&self) -> Value {
        serde_json::to_value(&self.metadata).expect("metadata is plain JSON")
    }
}
