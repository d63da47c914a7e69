//! Run manifests: what was run, with which inputs, and where the results went.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use rmtlab_symbolic::corollary::{THREE_TIME_FIXTURE, TWO_TIME_FIXTURE};

/// Git-style content hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hashes of the operator fixtures compiled into the binary.
pub fn fixture_hashes() -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("two_time_edge.op", content_hash(TWO_TIME_FIXTURE)),
        ("three_time_edge.op", content_hash(THREE_TIME_FIXTURE)),
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct WallClock {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    /// Timings reported by the experiment itself, moved out of the
    /// summary so that the summary is reproducible byte for byte.
    pub experiment_timings_ms: BTreeMap<String, u128>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub mode: String,
    pub config: Value,
    pub fixtures: BTreeMap<&'static str, String>,
    pub seed: Option<u64>,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub wall_clock: WallClock,
}

pub fn versions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("rmtlab", env!("CARGO_PKG_VERSION")),
        ("manifest_format", "1"),
    ])
}

/// Remove every `elapsed_ms` field from `v`, returning them keyed by
/// their JSON path.
pub fn strip_timings(v: &mut Value) -> BTreeMap<String, u128> {
    fn walk(v: &mut Value, path: &str, out: &mut BTreeMap<String, u128>) {
        match v {
            Value::Object(map) => {
                if let Some(t) = map.remove("elapsed_ms") {
                    let key = if path.is_empty() {
                        "elapsed_ms".to_string()
                    } else {
                        format!("{path}.elapsed_ms")
                    };
                    out.insert(key, t.as_u64().unwrap_or(0) as u128);
                }
                for (k, child) in map.iter_mut() {
                    let p = if path.is_empty() {
                        k.clone()
                    } else {
                        format!("{path}.{k}")
                    };
                    walk(child, &p, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter_mut().enumerate() {
                    walk(child, &format!("{path}[{i}]"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk(v, "", &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_blob_hash() {
        // sha256 of "blob 0\0", as `git hash-object --object-format=sha256`.
        assert_eq!(
            content_hash(""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn timings_are_stripped_at_any_depth() {
        let mut v = json!({"elapsed_ms": 3, "a": {"elapsed_ms": 4, "b": [{"elapsed_ms": 5}]}});
        let t = strip_timings(&mut v);
        assert_eq!(v, json!({"a": {"b": [{}]}}));
        assert_eq!(t.len(), 3);
        assert_eq!(t["a.b[0].elapsed_ms"], 5);
    }
}
