//! COCO instance annotations for rendered scenes.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rle::Rle;
use super::AnnotateError;
use crate::fsutil::write_atomic;
use crate::render::{extract_masks, InstanceIdMap};
use crate::scene::SceneDescriptor;

pub const CATEGORY_ID: u64 = 1;
pub const CATEGORY_NAME: &str = "white_button_mushroom";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<DatasetInfo>,
    pub images: Vec<ImageEntry>,
    pub categories: Vec<Category>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub description: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<ImageProvenance>,
}

/// Where an image came from: the scene it was rendered from and, for crops
/// and tiles, the parent image and the window origin inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageProvenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

/// Compressed RLE as stored in COCO JSON; `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleSegmentation {
    pub size: [u32; 2],
    pub counts: String,
}

impl RleSegmentation {
    pub fn from_rle(rle: &Rle) -> Self {
        Self {
            size: [rle.height(), rle.width()],
            counts: rle.to_compressed(),
        }
    }

    pub fn to_rle(&self) -> Result<Rle, AnnotateError> {
        Ok(Rle::from_compressed(self.size[0], self.size[1], &self.counts)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
    pub segmentation: RleSegmentation,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<InstanceExtra>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExtra {
    pub scene_seed: u64,
    pub instance_id: u32,
    pub age: f64,
}

impl Annotation {
    /// Builds an annotation whose bbox and area are derived from `rle`.
    pub fn from_rle(id: u64, image_id: u64, rle: &Rle, extra: Option<InstanceExtra>) -> Self {
        Self {
            id,
            image_id,
            category_id: CATEGORY_ID,
            bbox: rle.bbox().map(|b| b.to_xywh()).unwrap_or([0.0; 4]),
            area: rle.area() as f64,
            segmentation: RleSegmentation::from_rle(rle),
            iscrowd: 0,
            extra,
        }
    }
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self {
            info: Some(DatasetInfo {
                description: "synthetic mushroom bed instances".into(),
                version: "1".into(),
            }),
            images: Vec::new(),
            categories: vec![Category {
                id: CATEGORY_ID,
                name: CATEGORY_NAME.into(),
                supercategory: Some("mushroom".into()),
            }],
            annotations: Vec::new(),
        }
    }

    pub fn image(&self, id: u64) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }

    /// Checks image references, RLE sizes and that bbox/area match the
    /// decoded masks.
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let ids: HashSet<u64> = self.images.iter().map(|i| i.id).collect();
        if ids.len() != self.images.len() {
            return Err(AnnotateError::Consistency("duplicate image ids".into()));
        }
        let mut ann_ids = HashSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.id) {
                return Err(AnnotateError::Consistency(format!("duplicate annotation id {}", a.id)));
            }
            let img = self
                .image(a.image_id)
                .ok_or_else(|| AnnotateError::Consistency(format!("annotation {} references missing image {}", a.id, a.image_id)))?;
            if a.segmentation.size != [img.height, img.width] {
                return Err(AnnotateError::Consistency(format!("annotation {} mask size differs from image", a.id)));
            }
            let rle = a.segmentation.to_rle()?;
            let bbox = rle.bbox().map(|b| b.to_xywh()).unwrap_or([0.0; 4]);
            if bbox != a.bbox || rle.area() as f64 != a.area {
                return Err(AnnotateError::Consistency(format!("annotation {} bbox/area disagree with mask", a.id)));
            }
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, AnnotateError> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, AnnotateError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotateError> {
        Ok(write_atomic(path, &self.to_json_bytes()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        Self::from_json_bytes(&std::fs::read(path)?)
    }
}

impl Default for AnnotationSet {
    fn default() -> Self {
        Self::new()
    }
}

/// File name of the image rendered or generated for a scene.
pub fn render_image_name(scene_seed: u64) -> String {
    format!("scene_{scene_seed}.png")
}

/// One annotation per visible instance, ordered by image then instance id.
/// Image ids are 1-based positions in `scenes`.
pub fn build_annotation_set(
    renders: &[&InstanceIdMap],
    scenes: &[&SceneDescriptor],
) -> Result<AnnotationSet, AnnotateError> {
    if renders.len() != scenes.len() {
        return Err(AnnotateError::Consistency(format!(
            "{} renders for {} scenes",
            renders.len(),
            scenes.len()
        )));
    }
    let mut set = AnnotationSet::new();
    let mut next_id = 1u64;
    for (i, (ids, scene)) in renders.iter().zip(scenes).enumerate() {
        let (w, h) = (ids.width(), ids.height());
        if (w, h) != (scene.camera.width, scene.camera.height) {
            return Err(AnnotateError::Consistency(format!(
                "render of scene {} is {w}x{h}, camera is {}x{}",
                scene.seed, scene.camera.width, scene.camera.height
            )));
        }
        let image_id = i as u64 + 1;
        set.images.push(ImageEntry {
            id: image_id,
            file_name: render_image_name(scene.seed),
            width: w,
            height: h,
            provenance: Some(ImageProvenance {
                scene_seed: Some(scene.seed),
                parent: None,
                origin: None,
            }),
        });
        let ages: Vec<f64> = scene.bank.variant_params().iter().map(|p| p.age).collect();
        for m in extract_masks(ids) {
            let placement = scene
                .placements
                .get(m.instance_id as usize - 1)
                .filter(|p| p.instance_id == m.instance_id)
                .ok_or_else(|| {
                    AnnotateError::Consistency(format!(
                        "render of scene {} shows unknown instance {}",
                        scene.seed, m.instance_id
                    ))
                })?;
            let age = *ages
                .get(placement.variant_index as usize)
                .ok_or_else(|| AnnotateError::Consistency(format!("unknown variant {}", placement.variant_index)))?;
            let rle = Rle::from_instance_mask(h, w, &m);
            set.annotations.push(Annotation::from_rle(
                next_id,
                image_id,
                &rle,
                Some(InstanceExtra {
                    scene_seed: scene.seed,
                    instance_id: m.instance_id,
                    age,
                }),
            ));
            next_id += 1;
        }
    }
    Ok(set)
}

/// Builds the annotation set and writes it to `path`.
pub fn export_coco(
    renders: &[&InstanceIdMap],
    scenes: &[&SceneDescriptor],
    path: &Path,
) -> Result<AnnotationSet, AnnotateError> {
    let set = build_annotation_set(renders, scenes)?;
    set.save(path)?;
    Ok(set)
}
