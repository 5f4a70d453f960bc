//! Depth and instance-id rendering of scenes.

mod camera;
mod control;
pub mod io;
mod masks;
mod raster;

use thiserror::Error;

use crate::procgen::ProcgenError;

pub use camera::{CameraModel, Lens, LOOK_DOWN};
pub use control::{depth_to_control_image, ControlImage};
pub use masks::{extract_masks, InstanceMask};
pub use raster::{
    rasterize, rasterize_with_bank, world_instances, RenderOptions, RenderOutput, WorldInstance, MAX_DEPTH,
};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point at or behind the camera plane (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("placement references unknown variant {0}")]
    UnknownVariant(u32),
    #[error("instance id {0} does not fit a 16-bit image")]
    IdOverflow(u32),
    #[error("image size mismatch: expected {expected:?}, got {actual:?}")]
    SizeMismatch { expected: (u32, u32), actual: (u32, u32) },
    #[error(transparent)]
    Procgen(#[from] ProcgenError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! raster_map {
    ($(#[$meta:meta])* $name:ident, $ty:ty) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: u32,
            height: u32,
            data: Vec<$ty>,
        }

        impl $name {
            /// Panics if `data.len() != width * height`.
            pub fn from_vec(width: u32, height: u32, data: Vec<$ty>) -> Self {
                assert_eq!(data.len(), width as usize * height as usize, "raster size");
                Self { width, height, data }
            }

            #[inline]
            pub fn width(&self) -> u32 {
                self.width
            }

            #[inline]
            pub fn height(&self) -> u32 {
                self.height
            }

            #[inline]
            pub fn get(&self, x: u32, y: u32) -> $ty {
                self.data[(y * self.width + x) as usize]
            }

            pub fn data(&self) -> &[$ty] {
                &self.data
            }
        }
    };
}

raster_map!(
    /// Planar depth per pixel in metres.
    DepthMap,
    f32
);
raster_map!(
    /// Instance id per pixel; 0 is background.
    InstanceIdMap,
    u32
);

impl DepthMap {
    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)))
    }
}

impl InstanceIdMap {
    pub fn visible_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.data.iter().copied().filter(|&i| i != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
