//! Randomized scene composition: Poisson-disk positions, variant choice,
//! poses and the top-down camera rig.

mod poisson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Mat3;
use crate::num::Real;
use crate::procgen::{BankConfig, ProcgenError};
use crate::render::{CameraModel, Lens};
use crate::rng;

pub use poisson::{poisson_disk_sample, SamplingConfig, DEFAULT_ATTEMPTS};

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const YAW_RANGE_DEG: (f64, f64) = (0.0, 360.0);
pub const TILT_RANGE_DEG: (f64, f64) = (-10.0, 10.0);
/// Default Poisson-disk radius, calibrated so that renders from the default
/// rig show roughly 145 visible mushrooms on average.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.036;

const KEY_POINTS: u64 = 0x5054;
const KEY_POSES: u64 = 0x504F;
const KEY_SCENE: u64 = 0x5343;
const FIELD_VARIANT: u64 = 0;
const FIELD_YAW: u64 = 1;
const FIELD_TILT_X: u64 = 2;
const FIELD_TILT_Y: u64 = 3;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Procgen(#[from] ProcgenError),
    #[error("scene document: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported scene format version {0}")]
    Version(u32),
}

/// Axis-aligned rectangle on the ground plane, metres. Half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn centered(center: [f64; 2], width: f64, height: f64) -> Self {
        Self::new(
            [center[0] - width / 2.0, center[1] - height / 2.0],
            [center[0] + width / 2.0, center[1] + height / 2.0],
        )
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] < self.max[0] && p[1] >= self.min[1] && p[1] < self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstancePlacement {
    /// Dense, 1-based.
    pub instance_id: u32,
    pub variant_index: u32,
    pub position: [f64; 2],
    pub yaw_deg: f64,
    pub tilt_x_deg: f64,
    pub tilt_y_deg: f64,
}

impl InstancePlacement {
    /// Model-to-world rotation: tilt about X, then Y, then yaw about Z.
    pub fn rotation<T: Real>(&self) -> Mat3<T> {
        let rad = |d: f64| T::lit(d.to_radians());
        Mat3::rotation_z(rad(self.yaw_deg))
            .mul(&Mat3::rotation_y(rad(self.tilt_y_deg)))
            .mul(&Mat3::rotation_x(rad(self.tilt_x_deg)))
    }
}

/// One placement per point with a uniformly drawn variant, yaw and tilts.
/// Ids follow point order starting at 1.
pub fn place_instances(
    points: &[[f64; 2]],
    bank_size: usize,
    seed: u64,
) -> Result<Vec<InstancePlacement>, SceneError> {
    if bank_size == 0 {
        return Err(SceneError::InvalidConfig("bank_size must be at least 1".into()));
    }
    let (t0, t1) = TILT_RANGE_DEG;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &position)| {
            let i = i as u64;
            InstancePlacement {
                instance_id: i as u32 + 1,
                variant_index: rng::below(seed, &[i, FIELD_VARIANT], bank_size as u64) as u32,
                position,
                yaw_deg: YAW_RANGE_DEG.1 * rng::unit(seed, &[i, FIELD_YAW]),
                tilt_x_deg: t0 + (t1 - t0) * rng::unit(seed, &[i, FIELD_TILT_X]),
                tilt_y_deg: t0 + (t1 - t0) * rng::unit(seed, &[i, FIELD_TILT_Y]),
            }
        })
        .collect())
}

/// Everything needed to build a scene from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub region: Rect,
    pub min_distance: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_point: u32,
    pub camera_height: f64,
    pub lens: Lens,
    pub bank: BankConfig,
}

fn default_attempts() -> u32 {
    DEFAULT_ATTEMPTS
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            // Exactly the ground area imaged by the default camera.
            region: CameraModel::look_down([0.0, 0.0], 1.0, Lens::default()).ground_footprint(),
            min_distance: DEFAULT_MIN_DISTANCE,
            max_attempts_per_point: DEFAULT_ATTEMPTS,
            camera_height: 1.0,
            lens: Lens::default(),
            bank: BankConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.region.area() > 0.0) {
            return Err(SceneError::InvalidConfig("region must have positive area".into()));
        }
        if !(self.min_distance > 0.0) {
            return Err(SceneError::InvalidConfig("min_distance must be positive".into()));
        }
        if !(self.camera_height > 0.0) {
            return Err(SceneError::InvalidConfig("camera_height must be positive".into()));
        }
        self.lens
            .validate()
            .map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        self.bank.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    /// The plane z = 0 restricted to this rectangle.
    pub extent: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub min_distance: f64,
    pub max_attempts_per_point: u32,
}

/// A complete, seed-reproducible scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub version: u32,
    pub seed: u64,
    pub ground: Ground,
    pub camera: CameraModel,
    pub bank: BankConfig,
    pub sampling: SamplingParams,
    pub placements: Vec<InstancePlacement>,
}

impl SceneDescriptor {
    pub fn file_name(&self) -> String {
        scene_file_name(self.seed)
    }

    pub fn to_json(&self) -> Result<String, SceneError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, SceneError> {
        let d: Self = serde_json::from_str(s)?;
        if d.version != SCENE_FORMAT_VERSION {
            return Err(SceneError::Version(d.version));
        }
        Ok(d)
    }

    /// The configuration this scene was built from.
    pub fn config(&self) -> SceneConfig {
        SceneConfig {
            region: self.ground.extent,
            min_distance: self.sampling.min_distance,
            max_attempts_per_point: self.sampling.max_attempts_per_point,
            camera_height: self.camera.position[2],
            lens: self.camera.lens(),
            bank: self.bank,
        }
    }
}

pub fn scene_file_name(seed: u64) -> String {
    format!("scene_{seed}.json")
}

/// Seed of the `index`-th scene of a project.
pub fn scene_seed(master_seed: u64, index: u64) -> u64 {
    rng::derive(master_seed, &[KEY_SCENE, index])
}

/// Builds the scene for `seed`. Instance ids are assigned after sorting by
/// position (x, then y) and variant, so they are stable across runs.
pub fn build_scene(seed: u64, config: &SceneConfig) -> Result<SceneDescriptor, SceneError> {
    config.validate()?;
    let sampling = SamplingConfig {
        region: config.region,
        min_distance: config.min_distance,
        seed: rng::derive(seed, &[KEY_POINTS]),
        max_attempts_per_point: config.max_attempts_per_point,
    };
    let points = poisson_disk_sample(&sampling)?;
    let mut placements = place_instances(&points, config.bank.len(), rng::derive(seed, &[KEY_POSES]))?;
    placements.sort_by(|a, b| {
        a.position[0]
            .total_cmp(&b.position[0])
            .then(a.position[1].total_cmp(&b.position[1]))
            .then(a.variant_index.cmp(&b.variant_index))
    });
    for (i, p) in placements.iter_mut().enumerate() {
        p.instance_id = i as u32 + 1;
    }
    Ok(SceneDescriptor {
        version: SCENE_FORMAT_VERSION,
        seed,
        ground: Ground {
            extent: config.region,
        },
        camera: CameraModel::look_down(config.region.center(), config.camera_height, config.lens),
        bank: config.bank,
        sampling: SamplingParams {
            min_distance: config.min_distance,
            max_attempts_per_point: config.max_attempts_per_point,
        },
        placements,
    })
}
