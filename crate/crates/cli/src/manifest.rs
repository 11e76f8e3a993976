use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::failure::Failure;

#[derive(Debug, Serialize)]
pub struct GridInfo {
    #[serde(rename = "M")]
    pub m: usize,
    pub shifted: bool,
}

/// Everything needed to rerun a command and get the same bytes back.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub grid: GridInfo,
    #[serde(rename = "box")]
    pub box_radius: usize,
    pub outputs: Vec<PathBuf>,
    /// Relative change of each metric when M is doubled.
    pub doubling_deltas: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        write_json(path, &serde_json::to_value(self)?)
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::usage(format!("writing {}: {e}", path.display())))
}

/// `<out>.manifest.json` next to an output file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
