//! Project configuration file.
//!
//! Every key is optional and falls back to the value of
//! [`ProjectConfig::default`]. Unknown keys are rejected. Command-line flags
//! override the file; `SHROOMGEN_ENDPOINT` overrides `generation.endpoint`
//! but loses to `--endpoint`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shroomgen_core::annotate::{TileSpec, VisibilityFilter};
use shroomgen_core::eval::{EvalConfig, KidConfig};
use shroomgen_core::procgen::{BankConfig, Tessellation};
use shroomgen_core::render::{CameraModel, Lens};
use shroomgen_core::scene::{Rect, SceneConfig, DEFAULT_ATTEMPTS, DEFAULT_MIN_DISTANCE};
use shroomgen_genclient::{AblationConfig, GenerationDefaults};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub version: u32,
    pub master_seed: u64,
    pub scene_count: u64,
    pub scene: SceneSection,
    pub render: RenderSection,
    pub crop: CropSection,
    pub tile: TileSpec,
    pub output: PathBuf,
    pub generation: GenerationSection,
    pub metrics: MetricsSection,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            master_seed: 0,
            scene_count: 100,
            scene: SceneSection::default(),
            render: RenderSection::default(),
            crop: CropSection::default(),
            tile: TileSpec::default(),
            output: PathBuf::from("out"),
            generation: GenerationSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    /// Ground rectangle to populate; defaults to the camera footprint.
    pub region: Option<Rect>,
    pub min_distance: f64,
    pub max_attempts_per_point: u32,
    pub camera_height: f64,
    pub lens: Lens,
    pub bank: BankSection,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            region: None,
            min_distance: DEFAULT_MIN_DISTANCE,
            max_attempts_per_point: DEFAULT_ATTEMPTS,
            camera_height: 1.0,
            lens: Lens::default(),
            bank: BankSection::default(),
        }
    }
}

/// Variant bank layout. Its seed is the project master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankSection {
    pub rows: u32,
    pub per_row: u32,
    pub randomness: f64,
    pub tessellation: Tessellation,
}

impl Default for BankSection {
    fn default() -> Self {
        let b = BankConfig::default();
        Self {
            rows: b.rows,
            per_row: b.per_row,
            randomness: b.randomness,
            tessellation: b.tessellation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    /// Also write a shaded RGB preview per scene.
    pub preview: bool,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self { preview: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropSection {
    pub width: u32,
    pub height: u32,
    pub count: u32,
    pub filter: VisibilityFilter,
}

impl Default for CropSection {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 1024,
            count: 3,
            filter: VisibilityFilter::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    /// Full renders.
    Renders,
    /// Fixed crops.
    Crops,
    /// SAHI tiles.
    Tiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub endpoint: String,
    pub source: DepthSource,
    /// Number of depth maps to build jobs for; `None` uses all.
    pub depth_count: Option<usize>,
    pub configs: Vec<AblationConfig>,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub request_timeout_s: u64,
    pub defaults: GenerationDefaults,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8188".into(),
            source: DepthSource::Crops,
            depth_count: None,
            configs: AblationConfig::ALL.to_vec(),
            concurrency: 4,
            max_attempts: 3,
            initial_backoff_ms: 500,
            request_timeout_s: 600,
            defaults: GenerationDefaults::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub eval: EvalConfig,
    pub kid: KidConfig,
}

impl ProjectConfig {
    pub fn from_json(s: &str) -> Result<Self, CliError> {
        let c: Self = serde_json::from_str(s).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let s = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn scene_config(&self) -> SceneConfig {
        let s = &self.scene;
        SceneConfig {
            region: s
                .region
                .unwrap_or_else(|| CameraModel::look_down([0.0, 0.0], s.camera_height, s.lens).ground_footprint()),
            min_distance: s.min_distance,
            max_attempts_per_point: s.max_attempts_per_point,
            camera_height: s.camera_height,
            lens: s.lens,
            bank: BankConfig {
                rows: s.bank.rows,
                per_row: s.bank.per_row,
                randomness: s.bank.randomness,
                master_seed: self.master_seed,
                tessellation: s.bank.tessellation,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |m: String| Err(CliError::Validation(format!("config: {m}")));
        if self.version != CONFIG_VERSION {
            return v(format!("unsupported version {}", self.version));
        }
        self.scene_config()
            .validate()
            .map_err(|e| CliError::Validation(format!("config: scene: {e}")))?;
        let l = &self.scene.lens;
        if self.crop.count == 0 || self.crop.width > l.width || self.crop.height > l.height {
            return v(format!(
                "crop {}x{} x{} does not fit {}x{} renders",
                self.crop.width, self.crop.height, self.crop.count, l.width, l.height
            ));
        }
        if self.tile.tile_width > l.width || self.tile.tile_height > l.height || !(0.0..1.0).contains(&self.tile.overlap) {
            return v("tile spec does not fit the renders".into());
        }
        let g = &self.generation;
        if g.configs.is_empty() || g.concurrency == 0 || g.max_attempts == 0 {
            return v("generation needs configs, concurrency >= 1 and max_attempts >= 1".into());
        }
        if self.metrics.kid.n_subsets == 0 {
            return v("kid.n_subsets must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(ProjectConfig::from_json("{}").unwrap(), ProjectConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ProjectConfig::from_json(r#"{"scene_cont": 3}"#).is_err());
        assert!(ProjectConfig::from_json(r#"{"scene": {"lens": {"fov": 3}}}"#).is_err());
    }

    #[test]
    fn partial_override_and_round_trip() {
        let c = ProjectConfig::from_json(r#"{"master_seed": 9, "scene": {"lens": {"width": 256, "height": 128}}, "crop": {"width": 128, "height": 128}, "tile": {"tile_width": 64, "tile_height": 64}}"#).unwrap();
        assert_eq!(c.scene.lens.width, 256);
        assert_eq!(c.scene.lens.focal_length_mm, Lens::default().focal_length_mm);
        assert_eq!(c.scene_config().bank.master_seed, 9);
        assert_eq!(ProjectConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn default_region_is_footprint() {
        let c = ProjectConfig::default();
        assert_eq!(c.scene_config().region, SceneConfig::default().region);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ProjectConfig::from_json(r#"{"version": 2}"#).is_err());
        assert!(ProjectConfig::from_json(r#"{"crop": {"width": 4000}}"#).is_err());
        assert!(ProjectConfig::from_json(r#"{"scene": {"min_distance": 0}}"#).is_err());
        assert!(ProjectConfig::from_json(r#"{"generation": {"configs": []}}"#).is_err());
    }
}
