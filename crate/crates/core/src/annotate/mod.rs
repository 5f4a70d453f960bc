//! COCO annotation export, cropping and tiling, and dataset statistics.

pub mod coco;
pub mod rle;
pub mod stats;
pub mod tiling;

use thiserror::Error;

pub use coco::{
    build_annotation_set, export_coco, render_image_name, Annotation, AnnotationSet, Category, ImageEntry,
    ImageProvenance, InstanceExtra, RleSegmentation, CATEGORY_ID, CATEGORY_NAME,
};
pub use rle::{decode_rle, encode_rle, Rle, RleError};
pub use stats::{dataset_stats, DatasetStats};
pub use tiling::{
    clip_rle, crop_fixed, crop_pixels, crop_windows, tile_sahi, tile_windows, TileSpec, VisibilityFilter, Window,
};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Rle(#[from] RleError),
    #[error("inconsistent annotations: {0}")]
    Consistency(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
