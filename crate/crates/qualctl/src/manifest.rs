use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

use qualkg::dataset::fingerprint;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: BTreeMap<String, Value>,
    pub input_fingerprints: BTreeMap<String, String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(Self::file_name(&self.command));
        let mut body = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        body.push(b'\n');
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

/// Flattens serialized arguments into a sorted map without nulls.
pub fn normalize_args(args: Value) -> BTreeMap<String, Value> {
    match args {
        Value::Object(map) => map.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => BTreeMap::new(),
    }
}

/// SHA-256 of each existing input file, keyed by its path as given.
pub fn fingerprints<'a>(paths: impl IntoIterator<Item = &'a Path>) -> BTreeMap<String, String> {
    paths
        .into_iter()
        .filter(|p| p.is_file())
        .filter_map(|p| fingerprint(p).ok().map(|h| (p.display().to_string(), h)))
        .collect()
}
