//! Config resolution and run manifests.
//!
//! Precedence is flags > config file > defaults: every command starts from
//! its default config, overlays the JSON config file (which may be a bare
//! config or a previously emitted manifest), then applies explicit flags.
//! The fully resolved config is echoed into `manifest.json`, so any run is
//! reproducible from its manifest alone.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub command: String,
    pub config: T,
}

/// Loads a config file and overlays it onto the default config. Accepts
/// either a bare config object or a `{command, config}` manifest.
pub fn overlay_config<T: Serialize + DeserializeOwned>(defaults: &T, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(inner) = value.get("config") {
        if value.get("command").is_some() {
            value = inner.clone();
        }
    }
    let mut base = serde_json::to_value(defaults)?;
    merge(&mut base, &value);
    Ok(serde_json::from_value(base)?)
}

fn merge(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(overlay_map)) => {
            for (key, value) in overlay_map {
                match base_map.get_mut(key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base_map.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

/// Writes the `{command, config}` manifest into the run directory.
pub fn write_manifest<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        config,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}
