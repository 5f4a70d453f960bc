//! Hand-built evaluation fixtures shared by integration and acceptance tests.

use shroomgen_core::annotate::{Annotation, AnnotationSet, ImageEntry, Rle};
use shroomgen_core::eval::Prediction;
use shroomgen_core::mask::Mask;

fn rect(x0: u32, x1: u32, y0: u32, y1: u32) -> Mask {
    Mask::from_fn(10, 10, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y))
}

fn with_pixel(mut m: Mask, x: u32, y: u32) -> Mask {
    m.set(x, y, true);
    m
}

/// Three 10x10 images, four ground-truth instances, five predictions.
///
/// | pred | image | score | IoU with its GT |
/// |------|-------|-------|-----------------|
/// | p1   | 1     | 0.9   | 16/16 = 1       |
/// | p3   | 2     | 0.8   | 20/26           |
/// | p4   | 2     | 0.7   | 0 (false alarm) |
/// | p2   | 1     | 0.6   | 12/17           |
/// | p5   | 3     | 0.3   | 10/20 = 0.5     |
pub fn toy_pr_fixture() -> (AnnotationSet, Vec<Prediction>) {
    let mut gt = AnnotationSet::new();
    for id in 1..=3 {
        gt.images.push(ImageEntry {
            id,
            file_name: format!("toy_{id}.png"),
            width: 10,
            height: 10,
            provenance: None,
        });
    }
    let gts = [
        (1, rect(0, 3, 0, 3)),
        (1, rect(6, 9, 6, 9)),
        (2, rect(0, 4, 0, 4)),
        (3, rect(0, 1, 0, 9)),
    ];
    for (i, (img, m)) in gts.iter().enumerate() {
        gt.annotations.push(Annotation::from_rle(i as u64 + 1, *img, &Rle::from_mask(m), None));
    }
    let preds = [
        (1, 0.9, rect(0, 3, 0, 3)),
        (1, 0.6, with_pixel(rect(6, 9, 7, 9), 5, 9)),
        (2, 0.8, with_pixel(rect(0, 4, 0, 3), 9, 0)),
        (2, 0.7, rect(5, 9, 5, 9)),
        (3, 0.3, rect(0, 1, 0, 4)),
    ]
    .iter()
    .map(|(img, s, m)| Prediction::from_rle(*img, *s, &Rle::from_mask(m)))
    .collect();
    (gt, preds)
}

/// Values traced by hand from the table above. Per IoU threshold the score
/// ordered hits are: 0.50 -> TTFTT, 0.55..0.70 -> TTFTF, 0.75 -> TTFFF,
/// 0.80..0.95 -> TFFFF, over 4 ground-truth instances.
pub struct ToyExpected {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub miou: f64,
}

pub fn toy_expected() -> ToyExpected {
    // 0.50: envelope 1,1,.8,.8,.8 -> (51 * 1 + 50 * 0.8) / 101.
    let ap50 = 91.0 / 101.0;
    // 0.55..0.70: envelope 1,1,.75,.75,.6, recall stops at .75 -> (51 + 25 * .75) / 101.
    let ap_mid = 69.75 / 101.0;
    // 0.75: recall stops at .5 -> 51 / 101.
    let ap75 = 51.0 / 101.0;
    // 0.80..0.95: recall stops at .25 -> 26 / 101.
    let ap_high = 26.0 / 101.0;
    ToyExpected {
        ap: (ap50 + 4.0 * ap_mid + ap75 + 4.0 * ap_high) / 10.0,
        ap50,
        ap75,
        ar: (1.0 + 4.0 * 0.75 + 0.5 + 4.0 * 0.25) / 10.0,
        // Score >= 0.5 keeps p1..p4: 3 TP, 1 FP, 1 FN.
        precision: 0.75,
        recall: 0.75,
        f1: 0.75,
        miou: (1.0 + 20.0 / 26.0 + 12.0 / 17.0) / 3.0,
    }
}
