//! Pairs generated images with the annotations of the depth maps they were
//! conditioned on.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use shroomgen_core::annotate::{AnnotationSet, ImageEntry, ImageProvenance};
use shroomgen_core::fsutil::write_atomic;

use crate::client::artifact_name;
use crate::job::AblationConfig;
use crate::manifest::JobManifest;
use crate::GenError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub job_id: String,
    pub ablation: AblationConfig,
    /// Artifact file name.
    pub image: String,
    pub source_image: String,
    pub annotation_image_id: u64,
    pub annotation_ids: Vec<u64>,
    pub scene_seed: Option<u64>,
    pub origin: Option<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedIndex {
    pub batch_id: String,
    pub entries: Vec<PairEntry>,
}

fn orphan_error(kind: &str, ids: BTreeSet<String>) -> Result<(), GenError> {
    if ids.is_empty() {
        return Ok(());
    }
    Err(GenError::Pairing(format!(
        "{kind}: {}",
        ids.into_iter().collect::<Vec<_>>().join(", ")
    )))
}

/// Builds the index for a completed batch.
///
/// Fails when a job has no artifact on disk, when a job's source image is not
/// in `annotations`, when a PNG in `artifacts_dir` belongs to no job, or when
/// an annotated image has no generated counterpart.
pub fn pair_outputs(
    artifacts_dir: &Path,
    manifest: &JobManifest,
    annotations: &AnnotationSet,
) -> Result<PairedIndex, GenError> {
    let by_name: HashMap<&str, &ImageEntry> = annotations.images.iter().map(|i| (i.file_name.as_str(), i)).collect();
    let mut ann_ids: HashMap<u64, Vec<u64>> = HashMap::new();
    for a in &annotations.annotations {
        ann_ids.entry(a.image_id).or_default().push(a.id);
    }

    let mut missing = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    let mut covered = BTreeSet::new();
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let job = &e.job;
        let image = e.artifact.clone().unwrap_or_else(|| artifact_name(&job.job_id));
        if !artifacts_dir.join(&image).is_file() {
            missing.insert(job.job_id.clone());
            continue;
        }
        let Some(src) = job.provenance.source_image.as_deref().and_then(|s| by_name.get(s)) else {
            unknown.insert(job.job_id.clone());
            continue;
        };
        covered.insert(src.id);
        entries.push(PairEntry {
            job_id: job.job_id.clone(),
            ablation: job.ablation,
            image,
            source_image: src.file_name.clone(),
            annotation_image_id: src.id,
            annotation_ids: ann_ids.get(&src.id).cloned().unwrap_or_default(),
            scene_seed: job.provenance.scene_seed,
            origin: job.provenance.origin,
        });
    }
    orphan_error("jobs without an artifact", missing)?;
    orphan_error("jobs whose source image is not annotated", unknown)?;

    let known: BTreeSet<&str> = entries.iter().map(|p| p.image.as_str()).collect();
    let mut stray = BTreeSet::new();
    for f in std::fs::read_dir(artifacts_dir)? {
        let name = f?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") && !known.contains(name.as_str()) {
            stray.insert(name);
        }
    }
    orphan_error("artifacts not in the manifest", stray)?;

    let uncovered = annotations
        .images
        .iter()
        .filter(|i| !covered.contains(&i.id) && ann_ids.contains_key(&i.id))
        .map(|i| i.file_name.clone())
        .collect();
    orphan_error("annotated images without a generated image", uncovered)?;

    Ok(PairedIndex {
        batch_id: manifest.batch_id.clone(),
        entries,
    })
}

impl PairedIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A COCO set over the generated images, reusing each source image's
    /// masks. Image and annotation ids are renumbered from 1.
    pub fn to_annotation_set(&self, source: &AnnotationSet) -> Result<AnnotationSet, GenError> {
        let by_id: HashMap<u64, _> = source.annotations.iter().map(|a| (a.id, a)).collect();
        let mut out = AnnotationSet {
            annotations: Vec::new(),
            images: Vec::new(),
            ..source.clone()
        };
        for (k, p) in self.entries.iter().enumerate() {
            let src = source
                .image(p.annotation_image_id)
                .ok_or_else(|| GenError::Pairing(format!("{}: unknown image {}", p.job_id, p.annotation_image_id)))?;
            let image_id = k as u64 + 1;
            out.images.push(ImageEntry {
                id: image_id,
                file_name: p.image.clone(),
                width: src.width,
                height: src.height,
                provenance: Some(ImageProvenance {
                    scene_seed: p.scene_seed,
                    parent: Some(p.source_image.clone()),
                    origin: p.origin,
                }),
            });
            for aid in &p.annotation_ids {
                let mut a = (*by_id
                    .get(aid)
                    .ok_or_else(|| GenError::Pairing(format!("{}: unknown annotation {aid}", p.job_id)))?)
                .clone();
                a.id = out.annotations.len() as u64 + 1;
                a.image_id = image_id;
                out.annotations.push(a);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
