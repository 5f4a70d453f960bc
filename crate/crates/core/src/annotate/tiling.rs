//! Fixed crops and overlapping sliding-window tiles, with annotation
//! clipping.

use image::{ImageBuffer, Pixel};
use serde::{Deserialize, Serialize};

use super::coco::{Annotation, AnnotationSet, ImageEntry, ImageProvenance};
use super::rle::Rle;
use super::AnnotateError;

/// Pixel rectangle inside a source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Window {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// Drops clipped annotations that are too small in absolute terms or
/// relative to the unclipped instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilityFilter {
    pub min_visible_area: u64,
    pub min_visibility_ratio: f64,
}

impl Default for VisibilityFilter {
    fn default() -> Self {
        Self {
            min_visible_area: 16,
            min_visibility_ratio: 0.1,
        }
    }
}

impl VisibilityFilter {
    /// Keeps every clipped annotation with at least one pixel.
    pub const KEEP_ALL: Self = Self {
        min_visible_area: 1,
        min_visibility_ratio: 0.0,
    };

    fn keeps(&self, clipped: u64, original: u64) -> bool {
        clipped > 0
            && clipped >= self.min_visible_area
            && (original == 0 || clipped as f64 / original as f64 >= self.min_visibility_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileSpec {
    pub tile_width: u32,
    pub tile_height: u32,
    /// Fraction of the tile size shared by neighbouring tiles, in `[0, 1)`.
    pub overlap: f64,
    #[serde(default)]
    pub filter: VisibilityFilter,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            tile_width: 512,
            tile_height: 512,
            overlap: 0.2,
            filter: VisibilityFilter::default(),
        }
    }
}

/// Window origins along one axis: stride `tile - floor(overlap * tile)`,
/// with the last window moved flush to the far edge.
fn axis_origins(len: u32, tile: u32, overlap: f64) -> Vec<u32> {
    let overlap_px = (overlap * tile as f64).floor() as u32;
    let mut out: Vec<u32> = Vec::new();
    let mut start = 0u32;
    loop {
        let end = start + tile;
        if end >= len {
            let last = len - tile;
            if out.last() != Some(&last) {
                out.push(last);
            }
            return out;
        }
        out.push(start);
        start = end - overlap_px;
    }
}

pub fn tile_windows(width: u32, height: u32, spec: &TileSpec) -> Result<Vec<Window>, AnnotateError> {
    if !(0.0..1.0).contains(&spec.overlap) {
        return Err(AnnotateError::InvalidWindow(format!("overlap {} outside [0, 1)", spec.overlap)));
    }
    if spec.tile_width == 0 || spec.tile_height == 0 || spec.tile_width > width || spec.tile_height > height {
        return Err(AnnotateError::InvalidWindow(format!(
            "tile {}x{} does not fit image {width}x{height}",
            spec.tile_width, spec.tile_height
        )));
    }
    let xs = axis_origins(width, spec.tile_width, spec.overlap);
    let ys = axis_origins(height, spec.tile_height, spec.overlap);
    Ok(ys
        .iter()
        .flat_map(|&y| {
            xs.iter().map(move |&x| Window {
                x,
                y,
                width: spec.tile_width,
                height: spec.tile_height,
            })
        })
        .collect())
}

/// `count` crops evenly spaced from the left to the right edge, vertically
/// centred.
pub fn crop_windows(
    width: u32,
    height: u32,
    crop_width: u32,
    crop_height: u32,
    count: u32,
) -> Result<Vec<Window>, AnnotateError> {
    if count == 0 || crop_width == 0 || crop_height == 0 || crop_width > width || crop_height > height {
        return Err(AnnotateError::InvalidWindow(format!(
            "{count} crops of {crop_width}x{crop_height} do not fit image {width}x{height}"
        )));
    }
    let slack = width - crop_width;
    let y = (height - crop_height) / 2;
    Ok((0..count)
        .map(|i| Window {
            x: if count == 1 { slack / 2 } else { i * slack / (count - 1) },
            y,
            width: crop_width,
            height: crop_height,
        })
        .collect())
}

/// Restricts a full-image RLE to `window`, in window coordinates.
pub fn clip_rle(rle: &Rle, window: Window) -> Rle {
    let (y0, y1) = (window.y, window.y + window.height);
    let segs = rle.column_segments().into_iter().filter_map(|(col, s, e)| {
        if col < window.x || col >= window.x + window.width {
            return None;
        }
        let (s, e) = (s.max(y0), e.min(y1));
        (s < e).then(|| (col - window.x, s - y0, e - y0))
    });
    Rle::from_column_segments(window.height, window.width, segs)
}

/// One cropped or tiled image with its clipped annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedImage {
    pub window: Window,
    pub image: ImageEntry,
    pub annotations: Vec<Annotation>,
}

pub fn window_file_name(parent: &str, w: Window) -> String {
    let stem = parent.rsplit_once('.').map_or(parent, |(s, _)| s);
    format!("{stem}_x{}_y{}.png", w.x, w.y)
}

/// Clips the annotations of one image into each window. Ids of the new
/// images and annotations are left at 0 for the caller to assign.
pub fn clip_into_windows(
    image: &ImageEntry,
    annotations: &[&Annotation],
    windows: &[Window],
    filter: VisibilityFilter,
) -> Result<Vec<WindowedImage>, AnnotateError> {
    let decoded: Vec<(&Annotation, Rle)> = annotations
        .iter()
        .map(|a| Ok((*a, a.segmentation.to_rle()?)))
        .collect::<Result<_, AnnotateError>>()?;
    let scene_seed = image.provenance.as_ref().and_then(|p| p.scene_seed);
    Ok(windows
        .iter()
        .map(|&window| {
            let annotations = decoded
                .iter()
                .filter_map(|(a, rle)| {
                    let clipped = clip_rle(rle, window);
                    filter
                        .keeps(clipped.area(), rle.area())
                        .then(|| Annotation::from_rle(0, 0, &clipped, a.extra.clone()))
                })
                .collect();
            WindowedImage {
                window,
                image: ImageEntry {
                    id: 0,
                    file_name: window_file_name(&image.file_name, window),
                    width: window.width,
                    height: window.height,
                    provenance: Some(ImageProvenance {
                        scene_seed,
                        parent: Some(image.file_name.clone()),
                        origin: Some([window.x, window.y]),
                    }),
                },
                annotations,
            }
        })
        .collect())
}

/// Splits every image of `set` into windows and renumbers images and
/// annotations in order.
pub fn apply_windows(
    set: &AnnotationSet,
    windows_for: impl Fn(&ImageEntry) -> Result<Vec<Window>, AnnotateError>,
    filter: VisibilityFilter,
) -> Result<AnnotationSet, AnnotateError> {
    let mut out = AnnotationSet {
        images: Vec::new(),
        annotations: Vec::new(),
        ..set.clone()
    };
    let (mut next_image, mut next_ann) = (1u64, 1u64);
    for image in &set.images {
        let anns: Vec<&Annotation> = set.annotations_for(image.id).collect();
        for mut w in clip_into_windows(image, &anns, &windows_for(image)?, filter)? {
            w.image.id = next_image;
            for mut a in w.annotations {
                a.id = next_ann;
                a.image_id = next_image;
                next_ann += 1;
                out.annotations.push(a);
            }
            out.images.push(w.image);
            next_image += 1;
        }
    }
    Ok(out)
}

/// Left/centre/right style crops of every image.
pub fn crop_fixed(
    set: &AnnotationSet,
    crop_width: u32,
    crop_height: u32,
    count: u32,
    filter: VisibilityFilter,
) -> Result<AnnotationSet, AnnotateError> {
    apply_windows(
        set,
        |img| crop_windows(img.width, img.height, crop_width, crop_height, count),
        filter,
    )
}

/// Overlapping tiles of every image.
pub fn tile_sahi(set: &AnnotationSet, spec: &TileSpec) -> Result<AnnotationSet, AnnotateError> {
    apply_windows(set, |img| tile_windows(img.width, img.height, spec), spec.filter)
}

/// Copies the pixels under `w`.
pub fn crop_pixels<P: Pixel + 'static>(
    img: &ImageBuffer<P, Vec<P::Subpixel>>,
    w: Window,
) -> ImageBuffer<P, Vec<P::Subpixel>> {
    image::imageops::crop_imm(img, w.x, w.y, w.width, w.height).to_image()
}
