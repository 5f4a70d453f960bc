use super::EvalError;
use crate::annotate::Rle;

/// `|a ∩ b| / |a ∪ b|`, with two empty masks scoring 0.
pub fn mask_iou(a: &Rle, b: &Rle) -> Result<f64, EvalError> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(EvalError::DimensionMismatch(format!(
            "masks {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Pairwise IoU, `ious[p][g]`.
pub fn iou_matrix(preds: &[&Rle], gts: &[&Rle]) -> Result<Vec<Vec<f64>>, EvalError> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| mask_iou(p, g)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(prediction, ground truth, iou)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }
}

/// Indices of `scores` in descending order; equal scores keep input order.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy one-to-one matching. Predictions are visited in `order`; each takes
/// the unmatched ground truth with the highest IoU at or above `threshold`,
/// preferring the lower index on ties.
pub fn greedy_match(ious: &[Vec<f64>], n_gt: usize, order: &[usize], threshold: f64) -> Matching {
    let mut taken = vec![false; n_gt];
    let mut out = Matching::default();
    for &p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in ious[p].iter().enumerate() {
            if taken[g] || iou < threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) => {
                taken[g] = true;
                out.pairs.push((p, g, iou));
            }
            None => out.false_positives.push(p),
        }
    }
    out.false_negatives = (0..n_gt).filter(|&g| !taken[g]).collect();
    out
}

/// Scores and masks of predictions for one image against its ground truth.
pub fn match_instances(
    scores: &[f64],
    preds: &[&Rle],
    gts: &[&Rle],
    threshold: f64,
) -> Result<Matching, EvalError> {
    if scores.len() != preds.len() {
        return Err(EvalError::DimensionMismatch(format!("{} scores for {} predictions", scores.len(), preds.len())));
    }
    let ious = iou_matrix(preds, gts)?;
    Ok(greedy_match(&ious, gts.len(), &score_order(scores), threshold))
}
