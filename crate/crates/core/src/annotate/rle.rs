//! COCO run-length encoding.
//!
//! Runs are taken over pixels in column-major order and alternate between
//! background and foreground, starting with a (possibly empty) background
//! run. The compressed string form stores each count as 5-bit groups with a
//! continuation bit; counts after the second are stored as the difference
//! to the count two positions earlier. Each group maps to the character
//! `48 + value`.

use thiserror::Error;

use crate::mask::{BBox, Mask};
use crate::render::InstanceMask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("run lengths sum to {sum}, expected {expected}")]
    LengthMismatch { sum: u64, expected: u64 },
    #[error("malformed compressed RLE at byte {0}")]
    Malformed(usize),
    #[error("mask sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((u32, u32), (u32, u32)),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rle {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

/// Appends alternating runs, merging neighbours of equal value.
struct RunBuilder {
    counts: Vec<u32>,
    len: u64,
}

impl RunBuilder {
    fn new() -> Self {
        Self {
            counts: Vec::new(),
            len: 0,
        }
    }

    fn push(&mut self, ones: bool, n: u64) {
        if n == 0 {
            return;
        }
        self.len += n;
        let n = n as u32;
        match self.counts.len() {
            0 if ones => self.counts.extend([0, n]),
            0 => self.counts.push(n),
            k if ((k - 1) % 2 == 1) == ones => self.counts[k - 1] += n,
            _ => self.counts.push(n),
        }
    }
}

impl Rle {
    pub fn from_counts(height: u32, width: u32, counts: Vec<u32>) -> Result<Self, RleError> {
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = height as u64 * width as u64;
        if sum != expected {
            return Err(RleError::LengthMismatch { sum, expected });
        }
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    pub fn empty(height: u32, width: u32) -> Self {
        let n = height as u64 * width as u64;
        Self {
            height,
            width,
            counts: if n > 0 { vec![n as u32] } else { Vec::new() },
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut b = RunBuilder::new();
        for x in 0..w {
            for y in 0..h {
                b.push(mask.get(x, y), 1);
            }
        }
        Self {
            height: h,
            width: w,
            counts: b.counts,
        }
    }

    /// Builds from foreground column segments `(column, row_start, row_end)`
    /// (end exclusive), given in column-major order without overlaps.
    pub fn from_column_segments(
        height: u32,
        width: u32,
        segments: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> Self {
        let h = height as u64;
        let mut b = RunBuilder::new();
        for (col, y0, y1) in segments {
            let start = col as u64 * h + y0 as u64;
            debug_assert!(start >= b.len, "segments out of order");
            b.push(false, start - b.len);
            b.push(true, (y1 - y0) as u64);
        }
        let total = h * width as u64;
        b.push(false, total - b.len);
        Self {
            height,
            width,
            counts: b.counts,
        }
    }

    /// Full-image RLE of an instance mask, built from its bounding box only.
    pub fn from_instance_mask(height: u32, width: u32, m: &InstanceMask) -> Self {
        let b = m.bbox;
        let mut segs = Vec::new();
        for dx in 0..b.w {
            let mut run: Option<u32> = None;
            for dy in 0..=b.h {
                let on = dy < b.h && m.mask.get(dx, dy);
                match (on, run) {
                    (true, None) => run = Some(dy),
                    (false, Some(s)) => {
                        segs.push((b.x + dx, b.y + s, b.y + dy));
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        Self::from_column_segments(height, width, segs)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn to_mask(&self) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for (col, y0, y1) in self.column_segments() {
            for y in y0..y1 {
                m.set(col, y, true);
            }
        }
        m
    }

    /// Foreground runs as `[start, end)` column-major pixel indices.
    fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1 && c > 0).then_some((start, pos))
        })
    }

    /// Foreground runs split at column boundaries.
    pub fn column_segments(&self) -> Vec<(u32, u32, u32)> {
        let h = self.height as u64;
        let mut out = Vec::new();
        for (mut s, e) in self.intervals() {
            while s < e {
                let col = s / h;
                let seg_end = e.min((col + 1) * h);
                out.push((col as u32, (s % h) as u32, (s % h + seg_end - s) as u32));
                s = seg_end;
            }
        }
        out
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let segs = self.column_segments();
        let (first, last) = (segs.first()?, segs.last()?);
        let y0 = segs.iter().map(|s| s.1).min()?;
        let y1 = segs.iter().map(|s| s.2).max()?;
        Some(BBox {
            x: first.0,
            y: y0,
            w: last.0 - first.0 + 1,
            h: y1 - y0,
        })
    }

    pub fn intersection_area(&self, other: &Rle) -> Result<u64, RleError> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(RleError::SizeMismatch(
                (self.height, self.width),
                (other.height, other.width),
            ));
        }
        let a: Vec<_> = self.intervals().collect();
        let b: Vec<_> = other.intervals().collect();
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                total += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(total)
    }

    /// Intersection over union; two empty masks give 0.
    pub fn iou(&self, other: &Rle) -> Result<f64, RleError> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    pub fn to_compressed(&self) -> String {
        encode_counts(&self.counts)
    }

    pub fn from_compressed(height: u32, width: u32, s: &str) -> Result<Self, RleError> {
        Self::from_counts(height, width, decode_counts(s)?)
    }
}

/// Compressed COCO string for a set of run lengths.
pub fn encode_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut ch = (x & 0x1f) as u8;
            x >>= 5;
            let more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                ch |= 0x20;
            }
            out.push((ch + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

pub fn decode_counts(s: &str) -> Result<Vec<u32>, RleError> {
    let bytes = s.as_bytes();
    let mut counts: Vec<u32> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let Some(&b) = bytes.get(p) else {
                return Err(RleError::Malformed(p));
            };
            if !(48..48 + 64).contains(&b) || k >= 12 {
                return Err(RleError::Malformed(p));
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2] as i64;
        }
        counts.push(u32::try_from(x).map_err(|_| RleError::Malformed(p))?);
    }
    Ok(counts)
}

/// Compressed COCO RLE of a binary mask.
pub fn encode_rle(mask: &Mask) -> String {
    Rle::from_mask(mask).to_compressed()
}

pub fn decode_rle(height: u32, width: u32, s: &str) -> Result<Mask, RleError> {
    Ok(Rle::from_compressed(height, width, s)?.to_mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_background() {
        let r = Rle::from_mask(&Mask::new(2, 2));
        assert_eq!(r.counts(), &[4]);
        assert_eq!(r.to_compressed(), "4");
    }

    #[test]
    fn single_column_runs() {
        let m = Mask::from_vec(1, 3, vec![false, true, false]);
        let r = Rle::from_mask(&m);
        assert_eq!(r.counts(), &[1, 1, 1]);
        assert_eq!(r.to_compressed(), "111");
    }

    #[test]
    fn column_major_order() {
        // 2x2 with only the top-right pixel set: column 0 is empty, then
        // (x=1, y=0) is the third pixel in column-major order.
        let m = Mask::from_vec(2, 2, vec![false, true, false, false]);
        assert_eq!(Rle::from_mask(&m).counts(), &[2, 1, 1]);
    }

    #[test]
    fn leading_foreground_has_empty_background_run() {
        let m = Mask::from_vec(1, 2, vec![true, false]);
        assert_eq!(Rle::from_mask(&m).counts(), &[0, 1, 1]);
    }

    // Fixture strings traced by hand through the encoder loop:
    //   100 -> groups 4 (+continuation) and 3 -> 'T' '3'
    //   [3,4,5,2]: fourth count is stored as 2 - 4 = -2 -> group 30 -> 'N'
    //   [0, 40]: 40 -> groups 8 (+cont) and 1 -> 'X' '1'
    //   [5, 16]: 16 has bit 4 set, so a zero group follows -> '`' '0'
    #[test]
    fn hand_traced_fixtures() {
        assert_eq!(encode_counts(&[100]), "T3");
        assert_eq!(encode_counts(&[3, 4, 5, 2]), "345N");
        assert_eq!(encode_counts(&[0, 40]), "0X1");
        assert_eq!(encode_counts(&[5, 16]), "5`0");
        assert_eq!(decode_counts("345N").unwrap(), vec![3, 4, 5, 2]);
        assert_eq!(decode_counts("T3").unwrap(), vec![100]);
        assert_eq!(decode_counts("5`0").unwrap(), vec![5, 16]);
    }

    #[test]
    fn malformed_strings() {
        assert!(decode_counts("T").is_err());
        assert!(decode_counts(" ").is_err());
        assert!(Rle::from_compressed(2, 2, "3").is_err());
    }

    #[test]
    fn segments_and_bbox() {
        let m = Mask::from_fn(5, 4, |x, y| (1..4).contains(&x) && (2..4).contains(&y));
        let r = Rle::from_mask(&m);
        assert_eq!(r.column_segments(), vec![(1, 2, 4), (2, 2, 4), (3, 2, 4)]);
        assert_eq!(r.bbox(), m.bbox());
        assert_eq!(r.area(), 6);
        assert_eq!(Rle::from_column_segments(4, 5, r.column_segments()), r);
    }

    #[test]
    fn iou_matches_pixel_count() {
        let a = Mask::from_fn(2, 2, |_, _| true);
        let b = Mask::from_fn(2, 2, |x, _| x == 0);
        let (ra, rb) = (Rle::from_mask(&a), Rle::from_mask(&b));
        assert_eq!(ra.intersection_area(&rb).unwrap(), 2);
        assert_eq!(ra.iou(&rb).unwrap(), 0.5);
        assert!(ra.iou(&Rle::empty(3, 2)).is_err());
    }

    fn mask_strategy() -> impl Strategy<Value = Mask> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            prop::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |d| Mask::from_vec(w, h, d))
        })
    }

    proptest! {
        #[test]
        fn compressed_round_trip(m in mask_strategy()) {
            let s = encode_rle(&m);
            prop_assert_eq!(decode_rle(m.height(), m.width(), &s).unwrap(), m.clone());
            let r = Rle::from_mask(&m);
            prop_assert_eq!(r.area(), m.area());
            prop_assert_eq!(r.bbox(), m.bbox());
        }

        #[test]
        fn large_counts_round_trip(counts in prop::collection::vec(0u32..5_000_000, 1..16)) {
            prop_assert_eq!(decode_counts(&encode_counts(&counts)).unwrap(), counts);
        }
    }
}
