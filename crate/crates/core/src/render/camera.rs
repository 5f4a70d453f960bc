use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geom::{Mat3, Vec3};
use crate::num::Real;
use crate::scene::Rect;

/// Intrinsics shared by every scene of a project.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lens {
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Lens {
    fn default() -> Self {
        Self {
            focal_length_mm: 50.0,
            sensor_width_mm: 36.0,
            width: 1920,
            height: 1080,
        }
    }
}

impl Lens {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.focal_length_mm > 0.0 && self.sensor_width_mm > 0.0) {
            return Err(RenderError::InvalidCamera("focal length and sensor width must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("resolution must be positive".into()));
        }
        Ok(())
    }

    /// Focal length in pixels; the sensor width spans the image width.
    pub fn focal_px(&self) -> f64 {
        self.focal_length_mm / self.sensor_width_mm * self.width as f64
    }
}

/// Pinhole camera. The camera frame is x right, y down (image rows), z along
/// the optical axis; `rotation` maps camera axes to world axes and its
/// columns are those axes in world coordinates. The principal point is the
/// image centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub position: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub width: u32,
    pub height: u32,
}

/// Camera-to-world rotation looking straight down with image up = world +y.
pub const LOOK_DOWN: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];

impl CameraModel {
    pub fn look_down(center: [f64; 2], height: f64, lens: Lens) -> Self {
        Self {
            position: [center[0], center[1], height],
            rotation: LOOK_DOWN,
            focal_length_mm: lens.focal_length_mm,
            sensor_width_mm: lens.sensor_width_mm,
            width: lens.width,
            height: lens.height,
        }
    }

    pub fn lens(&self) -> Lens {
        Lens {
            focal_length_mm: self.focal_length_mm,
            sensor_width_mm: self.sensor_width_mm,
            width: self.width,
            height: self.height,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        self.lens().validate()?;
        let r = Mat3::from_rows(self.rotation);
        let p = r.mul(&r.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                if (p.rows[i][j] - e).abs() > 1e-9 {
                    return Err(RenderError::InvalidCamera("rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    pub fn focal_px(&self) -> f64 {
        self.lens().focal_px()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> [f64; 3] {
        [self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]]
    }

    pub(crate) fn world_to_camera<T: Real>(&self) -> (Mat3<T>, Vec3<T>) {
        let r = self.rotation.map(|row| row.map(T::lit));
        let c = Vec3::new(
            T::lit(self.position[0]),
            T::lit(self.position[1]),
            T::lit(self.position[2]),
        );
        (Mat3::from_rows(r).transpose(), c)
    }

    /// Projects a world point to continuous pixel coordinates and planar
    /// depth (distance along the optical axis).
    pub fn project<T: Real>(&self, point: Vec3<T>) -> Result<(T, T, T), RenderError> {
        let (rt, c) = self.world_to_camera::<T>();
        let p = rt.apply(point - c);
        if !(p.z > T::zero()) {
            return Err(RenderError::BehindCamera(p.z.to_f64_lossy()));
        }
        let f = T::lit(self.focal_px());
        let (cx, cy) = self.principal_point();
        Ok((T::lit(cx) + f * p.x / p.z, T::lit(cy) + f * p.y / p.z, p.z))
    }

    /// Ray through a continuous pixel position. The direction's component
    /// along the optical axis is 1, so a hit at parameter `t` has planar
    /// depth `t`.
    pub fn pixel_ray<T: Real>(&self, u: T, v: T) -> (Vec3<T>, Vec3<T>) {
        let f = T::lit(self.focal_px());
        let (cx, cy) = self.principal_point();
        let d = Vec3::new((u - T::lit(cx)) / f, (v - T::lit(cy)) / f, T::one());
        let r = Mat3::from_rows(self.rotation.map(|row| row.map(T::lit)));
        let c = Vec3::new(
            T::lit(self.position[0]),
            T::lit(self.position[1]),
            T::lit(self.position[2]),
        );
        (c, r.apply(d))
    }

    /// Ground-plane rectangle seen by a look-down camera.
    pub fn ground_footprint(&self) -> Rect {
        let h = self.position[2];
        let f = self.focal_px();
        Rect::centered(
            [self.position[0], self.position[1]],
            self.width as f64 * h / f,
            self.height as f64 * h / f,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel::look_down([0.0, 0.0], 1.0, Lens::default())
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let (u, v, d) = cam().project(Vec3::new(0.0f64, 0.0, 0.0)).unwrap();
        assert_eq!((u, v, d), (960.0, 540.0, 1.0));
    }

    #[test]
    fn pinhole_offset() {
        let (u, v, _) = cam().project(Vec3::new(0.1f64, 0.0, 0.0)).unwrap();
        let expected = 0.1 * (50.0 / 36.0 * 1920.0) / 1.0;
        assert!((u - 960.0 - expected).abs() < 1e-9);
        assert!((expected - 266.666_666_7).abs() < 1e-6);
        assert_eq!(v, 540.0);
        // World +y is image up.
        let (_, v, _) = cam().project(Vec3::new(0.0f64, 0.1, 0.0)).unwrap();
        assert!(v < 540.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(
            cam().project(Vec3::new(0.0f64, 0.0, 1.5)),
            Err(RenderError::BehindCamera(_))
        ));
        assert!(cam().project(Vec3::new(0.0f64, 0.0, 1.0)).is_err());
    }

    #[test]
    fn ray_and_projection_agree() {
        let c = cam();
        let (o, d) = c.pixel_ray(1200.25f64, 100.5);
        let hit = o + d * 0.7;
        let (u, v, z) = c.project(hit).unwrap();
        assert!((u - 1200.25).abs() < 1e-9 && (v - 100.5).abs() < 1e-9 && (z - 0.7).abs() < 1e-12);
    }

    #[test]
    fn footprint_at_one_metre() {
        let f = cam().ground_footprint();
        assert!((f.width() - 0.72).abs() < 1e-12);
        assert!((f.height() - 0.405).abs() < 1e-12);
    }
}
