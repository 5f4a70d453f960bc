//! COCO-protocol instance segmentation scores for a single category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matching::{greedy_match, iou_matrix, score_order};
use super::EvalError;
use crate::annotate::{AnnotationSet, Rle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Compressed(String),
    Raw(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSegmentation {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Counts,
}

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: u64,
    #[serde(default)]
    pub category_id: Option<u64>,
    pub score: f64,
    pub segmentation: PredictedSegmentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

impl Prediction {
    pub fn from_rle(image_id: u64, score: f64, rle: &Rle) -> Self {
        Self {
            image_id,
            category_id: Some(crate::annotate::CATEGORY_ID),
            score,
            segmentation: PredictedSegmentation {
                size: [rle.height(), rle.width()],
                counts: Counts::Compressed(rle.to_compressed()),
            },
            bbox: rle.bbox().map(|b| b.to_xywh()),
        }
    }

    pub fn to_rle(&self) -> Result<Rle, EvalError> {
        let [h, w] = self.segmentation.size;
        Ok(match &self.segmentation.counts {
            Counts::Compressed(s) => Rle::from_compressed(h, w, s)?,
            Counts::Raw(c) => Rle::from_counts(h, w, c.clone())?,
        })
    }
}

pub fn parse_predictions(bytes: &[u8]) -> Result<Vec<Prediction>, EvalError> {
    let preds: Vec<Prediction> = serde_json::from_slice(bytes)?;
    if let Some(p) = preds.iter().find(|p| !p.score.is_finite()) {
        return Err(EvalError::Format(format!("non-finite score for image {}", p.image_id)));
    }
    Ok(preds)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    parse_predictions(&std::fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Minimum score for a prediction to count towards F1 and mIoU.
    pub score_threshold: f64,
    /// IoU threshold for F1 and mIoU matching.
    pub f1_iou: f64,
    /// Highest-scoring predictions kept per image for AP and AR.
    pub max_dets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            f1_iou: 0.5,
            max_dets: 100,
        }
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95 computed as `numpy.linspace` does.
pub fn iou_thresholds() -> [f64; 10] {
    let step = (0.95 - 0.5) / 9.0;
    let mut t = [0.0; 10];
    for (i, v) in t.iter_mut().enumerate() {
        *v = 0.5 + i as f64 * step;
    }
    t[9] = 0.95;
    t
}

/// Recall sample points 0.00, 0.01, ..., 1.00.
pub fn recall_points() -> [f64; 101] {
    let mut r = [0.0; 101];
    for (i, v) in r.iter_mut().enumerate() {
        *v = i as f64 * 0.01;
    }
    r[100] = 1.0;
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou: f64,
    pub ap: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub miou: f64,
    /// False when no prediction matched, in which case `miou` is 0.
    pub miou_defined: bool,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub num_gt: usize,
    pub num_predictions: usize,
    pub per_threshold: Vec<ThresholdResult>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "metric      value");
        for (name, v) in [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("AR", self.ar),
            ("precision", self.precision),
            ("recall", self.recall),
            ("F1", self.f1),
        ] {
            let _ = writeln!(s, "{name:<11} {v:.4}");
        }
        let miou = if self.miou_defined { format!("{:.4}", self.miou) } else { "undefined".into() };
        let _ = writeln!(s, "{:<11} {miou}", "mIoU");
        let _ = writeln!(s, "\niou   AP      recall");
        for t in &self.per_threshold {
            let _ = writeln!(s, "{:.2}  {:.4}  {:.4}", t.iou, t.ap, t.recall);
        }
        s
    }
}

struct ImageData {
    gts: Vec<Rle>,
    preds: Vec<(f64, Rle)>,
}

fn group(gt: &AnnotationSet, preds: &[Prediction]) -> Result<BTreeMap<u64, ImageData>, EvalError> {
    let mut images: BTreeMap<u64, ImageData> = gt
        .images
        .iter()
        .map(|i| (i.id, ImageData { gts: Vec::new(), preds: Vec::new() }))
        .collect();
    for a in &gt.annotations {
        let img = images
            .get_mut(&a.image_id)
            .ok_or_else(|| EvalError::Format(format!("annotation {} references unknown image {}", a.id, a.image_id)))?;
        img.gts.push(a.segmentation.to_rle()?);
    }
    let unknown: BTreeSet<u64> = preds.iter().map(|p| p.image_id).filter(|id| !images.contains_key(id)).collect();
    if !unknown.is_empty() {
        return Err(EvalError::Format(format!("predictions reference unknown images {unknown:?}")));
    }
    for p in preds {
        images.get_mut(&p.image_id).unwrap().preds.push((p.score, p.to_rle()?));
    }
    Ok(images)
}

/// 101-point interpolated precision for detections already sorted by score.
fn interpolated_ap(is_tp: &[bool], num_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(is_tp.len());
    let mut recall = Vec::with_capacity(is_tp.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in is_tp {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let points = recall_points();
    let sum: f64 = points
        .iter()
        .map(|&r| {
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    sum / points.len() as f64
}

pub fn evaluate(gt: &AnnotationSet, preds: &[Prediction], config: &EvalConfig) -> Result<EvalReport, EvalError> {
    let images = group(gt, preds)?;
    let thresholds = iou_thresholds();
    let num_gt: usize = images.values().map(|i| i.gts.len()).sum();

    // Per threshold: (score, is_tp) for every kept detection over all images.
    let mut detections: Vec<Vec<(f64, bool)>> = vec![Vec::new(); thresholds.len()];
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;

    for img in images.values() {
        let gts: Vec<&Rle> = img.gts.iter().collect();
        let scores: Vec<f64> = img.preds.iter().map(|p| p.0).collect();
        let masks: Vec<&Rle> = img.preds.iter().map(|p| &p.1).collect();
        let ious = iou_matrix(&masks, &gts)?;
        let order = score_order(&scores);

        let kept = &order[..order.len().min(config.max_dets)];
        for (t, &thr) in thresholds.iter().enumerate() {
            let m = greedy_match(&ious, gts.len(), kept, thr);
            let mut hit = vec![false; scores.len()];
            for &(p, _, _) in &m.pairs {
                hit[p] = true;
            }
            detections[t].extend(kept.iter().map(|&p| (scores[p], hit[p])));
        }

        let confident: Vec<usize> = order.iter().copied().filter(|&p| scores[p] >= config.score_threshold).collect();
        let m = greedy_match(&ious, gts.len(), &confident, config.f1_iou);
        tp += m.pairs.len();
        fp += m.false_positives.len();
        fneg += m.false_negatives.len();
        iou_sum += m.pairs.iter().map(|p| p.2).sum::<f64>();
    }

    let per_threshold: Vec<ThresholdResult> = thresholds
        .iter()
        .zip(detections.iter_mut())
        .map(|(&iou, dets)| {
            // Stable, so equal scores keep image order.
            dets.sort_by(|a, b| b.0.total_cmp(&a.0));
            let hits: Vec<bool> = dets.iter().map(|d| d.1).collect();
            let tps = hits.iter().filter(|&&h| h).count();
            let (ap, recall) = if num_gt == 0 {
                (0.0, 0.0)
            } else {
                (interpolated_ap(&hits, num_gt), tps as f64 / num_gt as f64)
            };
            ThresholdResult {
                iou,
                ap,
                recall,
                true_positives: tps,
                false_positives: hits.len() - tps,
            }
        })
        .collect();

    let n = per_threshold.len() as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(EvalReport {
        ap: per_threshold.iter().map(|t| t.ap).sum::<f64>() / n,
        ap50: per_threshold[0].ap,
        ap75: per_threshold[5].ap,
        ar: per_threshold.iter().map(|t| t.recall).sum::<f64>() / n,
        f1,
        precision,
        recall,
        miou: if tp == 0 { 0.0 } else { iou_sum / tp as f64 },
        miou_defined: tp > 0,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        num_gt,
        num_predictions: preds.len(),
        per_threshold,
    })
}
