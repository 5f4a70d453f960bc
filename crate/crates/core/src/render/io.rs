//! PNG encodings of render outputs.
//!
//! * depth: 16-bit grey, millimetres, `round(depth_m * 1000)`
//! * control: 16-bit grey, see [`depth_to_control_image`](super::depth_to_control_image)
//! * ids: 16-bit grey, raw instance ids
//! * preview: 8-bit RGB

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, RgbImage};

use super::{ControlImage, DepthMap, InstanceIdMap, RenderError};
use crate::fsutil::write_atomic;

pub type Gray16 = ImageBuffer<Luma<u16>, Vec<u16>>;

pub fn depth_to_png16(depth: &DepthMap) -> Gray16 {
    let data = depth
        .data()
        .iter()
        .map(|&d| (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    Gray16::from_raw(depth.width(), depth.height(), data).expect("sized buffer")
}

pub fn control_to_png16(c: &ControlImage) -> Gray16 {
    Gray16::from_raw(c.width, c.height, c.data.clone()).expect("sized buffer")
}

pub fn ids_to_png16(ids: &InstanceIdMap) -> Result<Gray16, RenderError> {
    let data = ids
        .data()
        .iter()
        .map(|&i| u16::try_from(i).map_err(|_| RenderError::IdOverflow(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Gray16::from_raw(ids.width(), ids.height(), data).expect("sized buffer"))
}

pub fn ids_from_png16(img: &Gray16) -> InstanceIdMap {
    InstanceIdMap::from_vec(
        img.width(),
        img.height(),
        img.as_raw().iter().map(|&v| v as u32).collect(),
    )
}

pub fn encode_png16(img: &Gray16) -> Result<Vec<u8>, RenderError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn save_png16(img: &Gray16, path: &Path) -> Result<(), RenderError> {
    Ok(write_atomic(path, &encode_png16(img)?)?)
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<(), RenderError> {
    Ok(write_atomic(path, &encode_rgb_png(img)?)?)
}

pub fn load_png16(path: &Path) -> Result<Gray16, RenderError> {
    Ok(image::open(path)?.into_luma16())
}

pub fn load_ids_png(path: &Path) -> Result<InstanceIdMap, RenderError> {
    Ok(ids_from_png16(&load_png16(path)?))
}
