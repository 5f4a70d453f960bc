//! Brute-force ray-casting reference renderer. Poses, camera rays and
//! intersections are computed here from scratch with nalgebra so that the
//! comparison does not reuse any rasterizer code path.

use nalgebra::{Matrix3, Rotation3, Vector3};
use shroomgen_core::procgen::MushroomMesh;
use shroomgen_core::scene::SceneDescriptor;

pub struct OracleImage {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub depth: Vec<f64>,
}

struct Posed {
    id: u32,
    tris: Vec<[Vector3<f64>; 3]>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

fn pose(scene: &SceneDescriptor, bank: &[MushroomMesh<f64>]) -> Vec<Posed> {
    scene
        .placements
        .iter()
        .map(|p| {
            let mesh = &bank[p.variant_index as usize];
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), p.yaw_deg.to_radians())
                * Rotation3::from_axis_angle(&Vector3::y_axis(), p.tilt_y_deg.to_radians())
                * Rotation3::from_axis_angle(&Vector3::x_axis(), p.tilt_x_deg.to_radians());
            let t = Vector3::new(p.position[0], p.position[1], 0.0);
            let verts: Vec<Vector3<f64>> = mesh
                .vertices
                .iter()
                .map(|v| rot * Vector3::new(v.x, v.y, v.z) + t)
                .collect();
            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            for v in &verts {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            let tris = mesh
                .triangles
                .iter()
                .map(|t| [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]])
                .collect();
            Posed { id: p.instance_id, tris, lo, hi }
        })
        .collect()
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return false;
            }
            continue;
        }
        let (a, b) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    t0 <= t1 + 1e-12
}

/// Moller-Trumbore, both faces.
fn intersect(o: &Vector3<f64>, d: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

pub fn raycast(scene: &SceneDescriptor, bank: &[MushroomMesh<f64>]) -> OracleImage {
    let cam = &scene.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let f = cam.focal_length_mm / cam.sensor_width_mm * cam.width as f64;
    let (cx, cy) = (cam.width as f64 / 2.0, cam.height as f64 / 2.0);
    let r = Matrix3::from_fn(|i, j| cam.rotation[i][j]);
    let origin = Vector3::from(cam.position);
    let forward = r * Vector3::new(0.0, 0.0, 1.0);
    let posed = pose(scene, bank);

    let mut ids = vec![0u32; w * h];
    let mut depth = vec![0.0f64; w * h];
    for py in 0..h {
        for px in 0..w {
            let dc = Vector3::new((px as f64 + 0.5 - cx) / f, (py as f64 + 0.5 - cy) / f, 1.0);
            let d = r * dc;
            // Ground plane z = 0; planar depth is the ray parameter because
            // the forward component of `d` is 1.
            let mut best = if d.z < 0.0 { -origin.z / d.z } else { 1000.0 };
            let mut id = 0u32;
            for inst in &posed {
                if !ray_box(&origin, &d, &inst.lo, &inst.hi) {
                    continue;
                }
                for tri in &inst.tris {
                    if let Some(t) = intersect(&origin, &d, tri) {
                        if t < best || (t == best && id != 0 && inst.id < id) {
                            best = t;
                            id = inst.id;
                        }
                    }
                }
            }
            debug_assert!((d.dot(&forward) - 1.0).abs() < 1e-12);
            ids[py * w + px] = id;
            depth[py * w + px] = best;
        }
    }
    OracleImage { width: w, height: h, ids, depth }
}

/// Pixels whose 8-neighbourhood in `ids` contains a different id.
pub fn silhouette_band(ids: &[u32], w: usize, h: usize) -> Vec<bool> {
    let mut band = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = ids[y * w + x];
            'n: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && ids[ny as usize * w + nx as usize] != c {
                        band[y * w + x] = true;
                        break 'n;
                    }
                }
            }
        }
    }
    band
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Comparison {
    pub pixels: usize,
    pub id_mismatches: usize,
    /// Mismatches outside the 1-pixel silhouette band of either image.
    pub interior_mismatches: usize,
    pub max_depth_error: f64,
}

impl Comparison {
    pub fn add(&mut self, o: Comparison) {
        self.pixels += o.pixels;
        self.id_mismatches += o.id_mismatches;
        self.interior_mismatches += o.interior_mismatches;
        self.max_depth_error = self.max_depth_error.max(o.max_depth_error);
    }

    pub fn agreement(&self) -> f64 {
        1.0 - self.id_mismatches as f64 / self.pixels as f64
    }
}

/// Compares ids everywhere and depth wherever the ids agree.
pub fn compare(oracle: &OracleImage, ids: &[u32], depth: &[f32]) -> Comparison {
    let (w, h) = (oracle.width, oracle.height);
    let band_o = silhouette_band(&oracle.ids, w, h);
    let band_r = silhouette_band(ids, w, h);
    let mut c = Comparison { pixels: w * h, ..Comparison::default() };
    for i in 0..w * h {
        if ids[i] != oracle.ids[i] {
            c.id_mismatches += 1;
            if !band_o[i] && !band_r[i] {
                c.interior_mismatches += 1;
            }
        } else {
            // Depth maps are stored as f32.
            c.max_depth_error = c.max_depth_error.max((depth[i] as f64 - oracle.depth[i]).abs());
        }
    }
    c
}
