//! Where each stage reads and writes under the output root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

/// The scenes of a project in generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneIndex {
    pub master_seed: u64,
    pub seeds: Vec<u64>,
}

/// Which image kinds exist per render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderKind {
    Depth,
    Ids,
    Control,
    Preview,
}

impl RenderKind {
    pub fn suffix(self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Ids => "ids",
            Self::Control => "control",
            Self::Preview => "preview",
        }
    }
}

/// File stem of an image name: `scene_7.png` -> `scene_7`.
pub fn stem(file_name: &str) -> &str {
    file_name.rsplit_once('.').map_or(file_name, |(s, _)| s)
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn scenes_dir(&self) -> PathBuf {
        self.root.join("scenes")
    }

    pub fn scene_index(&self) -> PathBuf {
        self.scenes_dir().join("index.json")
    }

    pub fn renders_dir(&self) -> PathBuf {
        self.root.join("renders")
    }

    /// `renders/<stem>_<kind>.png` for the annotated image `image_name`.
    pub fn render_file(&self, image_name: &str, kind: RenderKind) -> PathBuf {
        self.renders_dir().join(format!("{}_{}.png", stem(image_name), kind.suffix()))
    }

    pub fn render_sidecar(&self, image_name: &str) -> PathBuf {
        self.renders_dir().join(format!("{}.sha256.json", stem(image_name)))
    }

    pub fn annotations(&self) -> PathBuf {
        self.root.join("annotations").join("instances.json")
    }

    pub fn crops_dir(&self) -> PathBuf {
        self.root.join("crops")
    }

    pub fn tiles_dir(&self) -> PathBuf {
        self.root.join("tiles")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("jobs").join("manifest.json")
    }

    pub fn generated_dir(&self) -> PathBuf {
        self.root.join("generated")
    }

    pub fn generated_images(&self) -> PathBuf {
        self.generated_dir().join("images")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn load_scene_index(&self) -> Result<SceneIndex, CliError> {
        let p = self.scene_index();
        if !p.is_file() {
            return Err(CliError::Validation(format!("no scenes in {}; run gen-scenes first", self.scenes_dir().display())));
        }
        let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Writes `bytes` unless the file already holds exactly them. Returns whether
/// it wrote.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool, CliError> {
    if std::fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    shroomgen_core::fsutil::write_atomic(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(true)
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}
