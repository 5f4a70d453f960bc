use std::collections::BTreeMap;

use super::InstanceIdMap;
use crate::mask::{BBox, Mask};

/// Visible pixels of one instance. `mask` covers `bbox` only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub instance_id: u32,
    pub bbox: BBox,
    pub area: u64,
    pub mask: Mask,
}

impl InstanceMask {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.bbox.x
            && y >= self.bbox.y
            && x < self.bbox.x + self.bbox.w
            && y < self.bbox.y + self.bbox.h
            && self.mask.get(x - self.bbox.x, y - self.bbox.y)
    }

    /// Expands to a full-image mask.
    pub fn to_full(&self, width: u32, height: u32) -> Mask {
        Mask::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

/// Splits an id map into per-instance masks, ordered by id. Instances with
/// no visible pixel do not appear.
pub fn extract_masks(ids: &InstanceIdMap) -> Vec<InstanceMask> {
    let w = ids.width();
    let mut bounds: BTreeMap<u32, (u32, u32, u32, u32, u64)> = BTreeMap::new();
    for (i, &id) in ids.data().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let (x, y) = (i as u32 % w, i as u32 / w);
        bounds
            .entry(id)
            .and_modify(|b| {
                b.0 = b.0.min(x);
                b.1 = b.1.min(y);
                b.2 = b.2.max(x);
                b.3 = b.3.max(y);
                b.4 += 1;
            })
            .or_insert((x, y, x, y, 1));
    }
    bounds
        .into_iter()
        .map(|(id, (x0, y0, x1, y1, area))| {
            let bbox = BBox {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            };
            let mask = Mask::from_fn(bbox.w, bbox.h, |x, y| ids.get(x0 + x, y0 + y) == id);
            InstanceMask {
                instance_id: id,
                bbox,
                area,
                mask,
            }
        })
        .collect()
}
