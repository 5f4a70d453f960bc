use super::DepthMap;

/// 16-bit single-channel conditioning image, nearest surface brightest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

/// Inverted min-max normalisation of a depth map to `[0, 65535]`. A map of
/// constant depth becomes all zeros.
pub fn depth_to_control_image(depth: &DepthMap) -> ControlImage {
    let (lo, hi) = depth.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    let data = depth
        .data()
        .iter()
        .map(|&d| {
            if range > 0.0 {
                ((hi - d as f64) / range * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    ControlImage {
        width: depth.width(),
        height: depth.height(),
        data,
    }
}
