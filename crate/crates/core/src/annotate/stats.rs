use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coco::AnnotationSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub image_count: usize,
    pub instance_count: usize,
    pub mean_instances_per_image: f64,
    pub median_instances_per_image: f64,
    pub min_instances_per_image: usize,
    pub max_instances_per_image: usize,
    pub mean_area: f64,
    /// Instance counts keyed by `floor(log2(area))`.
    pub area_histogram: BTreeMap<u32, usize>,
}

pub fn dataset_stats(set: &AnnotationSet) -> DatasetStats {
    let mut per_image: BTreeMap<u64, usize> = set.images.iter().map(|i| (i.id, 0)).collect();
    let mut area_histogram = BTreeMap::new();
    let mut area_sum = 0.0;
    for a in &set.annotations {
        *per_image.entry(a.image_id).or_default() += 1;
        area_sum += a.area;
        let bin = if a.area >= 1.0 { a.area.log2().floor() as u32 } else { 0 };
        *area_histogram.entry(bin).or_default() += 1;
    }
    let mut counts: Vec<usize> = per_image.into_values().collect();
    counts.sort_unstable();
    let n = counts.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => counts[n / 2] as f64,
        _ => (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0,
    };
    let instances = set.annotations.len();
    DatasetStats {
        image_count: set.images.len(),
        instance_count: instances,
        mean_instances_per_image: if n == 0 { 0.0 } else { instances as f64 / n as f64 },
        median_instances_per_image: median,
        min_instances_per_image: counts.first().copied().unwrap_or(0),
        max_instances_per_image: counts.last().copied().unwrap_or(0),
        mean_area: if instances == 0 { 0.0 } else { area_sum / instances as f64 },
        area_histogram,
    }
}
