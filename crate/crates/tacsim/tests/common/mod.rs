#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use tacsim::config::{BatchSpec, EnvironmentSpec, ResolvedEnvironment};
use tacsim::demos::demo_configs;

/// Every file under `dir` keyed by its relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if dir.is_dir() {
        walk(dir, dir, &mut out);
    }
    out
}

/// Relative paths whose contents differ between two trees, including files
/// present in only one of them.
pub fn tree_diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect()
}

/// A shortened gripper squeeze written to `dir`: `steps` steps with the
/// fingers closing in `close_time` seconds. Returns the config path.
pub fn short_squeeze(dir: &Path, steps: usize, close_time: f64) -> std::path::PathBuf {
    let c = demo_configs("gripper_squeeze", dir).unwrap().remove(0);
    let mut doc: Value = serde_json::from_slice(&fs::read(&c.path).unwrap()).unwrap();
    doc["steps"] = steps.into();
    doc["output"]["maps_every"] = 2.into();
    doc["output"]["snapshots"] = true.into();
    doc["robots"][0]["waypoints"][0]["time"] = close_time.into();
    let path = dir.join("short_squeeze.json");
    fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    path
}

/// `n` variants of a scene that differ in the final finger opening and the
/// seed.
pub fn squeeze_batch(base: &Path, n: usize) -> BatchSpec {
    let doc: Value = serde_json::from_slice(&fs::read(base).unwrap()).unwrap();
    let environments = (0..n)
        .map(|i| {
            let mut robots = doc["robots"].clone();
            let q = &mut robots[0]["waypoints"][0]["q"];
            let close = q[0].as_f64().unwrap() * (1.0 + 0.02 * i as f64);
            *q = json!([close, close]);
            EnvironmentSpec {
                name: format!("env{i}"),
                overrides: json!({ "robots": robots }),
                seed: Some(100 + i as u64),
            }
        })
        .collect();
    BatchSpec {
        base: Value::String(base.to_string_lossy().into_owned()),
        environments,
        workers: 1,
    }
}

pub fn resolve(spec: &BatchSpec) -> Vec<ResolvedEnvironment> {
    spec.resolve(Path::new(".")).unwrap()
}
