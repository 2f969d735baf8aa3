//! Sequence manifests: a JSON list of frame files relative to the manifest.

use std::path::{Path, PathBuf};

use equicanon_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::cloud_io::{self, CloudFormat};
use crate::config::SynthSection;
use crate::error::{CliError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: CloudFormat,
    pub frames: Vec<String>,
    pub seed: u64,
    /// Generator settings, absent for hand-written manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fsutil::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        fsutil::write_atomic(path, text.as_bytes())
    }

    pub fn frame_paths(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        self.frames.iter().map(|f| dir.join(f)).collect()
    }

    pub fn load_frames(&self, manifest_path: &Path) -> Result<Vec<PointCloud>> {
        self.frame_paths(manifest_path).iter().map(|p| cloud_io::read_cloud(p)).collect()
    }
}

/// Treats `.json` inputs as manifests and anything else as a single cloud.
pub fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}
