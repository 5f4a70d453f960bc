//! Z-buffered triangle rasterization of a scene into depth and instance ids.
//!
//! Pixels are sampled at their centres. Coverage uses edge functions with a
//! consistent ownership rule for shared edges, and planar depth is
//! interpolated perspective-correctly through `1/z`. The image is processed
//! in horizontal bands that are rendered independently, so the parallel and
//! serial paths produce identical buffers.

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use super::{DepthMap, InstanceIdMap, RenderError};
use crate::geom::{Mat3, Vec3};
use crate::num::Real;
use crate::procgen::{variant_bank, MushroomMesh};
use crate::scene::SceneDescriptor;

/// Rows per independently rendered band.
const BAND_ROWS: usize = 16;
/// Depth reported for rays that never reach the ground plane.
pub const MAX_DEPTH: f64 = 1000.0;

const MUSHROOM_ALBEDO: [f32; 3] = [0.93, 0.91, 0.86];
const GROUND_ALBEDO: [f32; 3] = [0.24, 0.18, 0.14];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Also produce a flat-shaded RGB preview.
    pub preview: bool,
    /// Render bands on the rayon pool.
    pub parallel: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            preview: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub depth: DepthMap,
    pub ids: InstanceIdMap,
    pub preview: Option<RgbImage>,
}

/// One placed instance with world-space vertices.
#[derive(Debug, Clone)]
pub struct WorldInstance<'a, T> {
    pub instance_id: u32,
    pub vertices: Vec<Vec3<T>>,
    pub triangles: &'a [[u32; 3]],
}

/// Applies every placement's pose to its bank mesh.
pub fn world_instances<'a, T: Real>(
    scene: &SceneDescriptor,
    bank: &'a [MushroomMesh<T>],
) -> Result<Vec<WorldInstance<'a, T>>, RenderError> {
    scene
        .placements
        .iter()
        .map(|p| {
            let mesh = bank
                .get(p.variant_index as usize)
                .ok_or(RenderError::UnknownVariant(p.variant_index))?;
            let rot: Mat3<T> = p.rotation();
            let t = Vec3::new(T::lit(p.position[0]), T::lit(p.position[1]), T::zero());
            Ok(WorldInstance {
                instance_id: p.instance_id,
                vertices: mesh.vertices.iter().map(|&v| rot.apply(v) + t).collect(),
                triangles: &mesh.triangles,
            })
        })
        .collect()
}

/// Renders a scene, generating its variant bank at precision `T`.
pub fn rasterize<T: Real>(scene: &SceneDescriptor, opts: RenderOptions) -> Result<RenderOutput, RenderError> {
    let bank = variant_bank::<T>(&scene.bank)?;
    rasterize_with_bank(scene, &bank, opts)
}

/// Screen-space triangle, counter-clockwise in the edge-function sense.
struct ScreenTri<T> {
    p: [(T, T); 3],
    inv_z: [T; 3],
    area: T,
    owns_edge: [bool; 3],
    id: u32,
    shade: f32,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

#[inline]
fn edge<T: Real>(a: (T, T), b: (T, T), p: (T, T)) -> T {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Antisymmetric in the edge direction, so exactly one of two triangles
/// sharing an edge (in opposite directions) owns pixels lying on it.
#[inline]
fn owns<T: Real>(a: (T, T), b: (T, T)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy > T::zero() || (dy == T::zero() && dx < T::zero())
}

/// Renders a scene against a prebuilt variant bank.
pub fn rasterize_with_bank<T: Real>(
    scene: &SceneDescriptor,
    bank: &[MushroomMesh<T>],
    opts: RenderOptions,
) -> Result<RenderOutput, RenderError> {
    let cam = &scene.camera;
    cam.validate()?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let (rt, c) = cam.world_to_camera::<T>();
    let f = T::lit(cam.focal_px());
    let (cx, cy) = cam.principal_point();
    let (cx, cy) = (T::lit(cx), T::lit(cy));
    let half = T::lit(0.5);
    let eye = Vec3::new(
        T::lit(cam.position[0]),
        T::lit(cam.position[1]),
        T::lit(cam.position[2]),
    );

    let instances = world_instances(scene, bank)?;
    let mut tris: Vec<ScreenTri<T>> = Vec::new();
    for inst in &instances {
        let screen: Vec<Option<(T, T, T)>> = inst
            .vertices
            .iter()
            .map(|&v| {
                let p = rt.apply(v - c);
                (p.z > T::zero()).then(|| (cx + f * p.x / p.z, cy + f * p.y / p.z, p.z))
            })
            .collect();
        for t in inst.triangles {
            let (Some(a), Some(b), Some(d)) = (
                screen[t[0] as usize],
                screen[t[1] as usize],
                screen[t[2] as usize],
            ) else {
                continue;
            };
            let mut p = [(a.0, a.1), (b.0, b.1), (d.0, d.1)];
            let mut inv_z = [a.2.recip(), b.2.recip(), d.2.recip()];
            let mut area = edge(p[0], p[1], p[2]);
            if area == T::zero() || !area.is_finite() {
                continue;
            }
            if area < T::zero() {
                p.swap(1, 2);
                inv_z.swap(1, 2);
                area = -area;
            }
            let min_u = p[0].0.min(p[1].0).min(p[2].0);
            let max_u = p[0].0.max(p[1].0).max(p[2].0);
            let min_v = p[0].1.min(p[1].1).min(p[2].1);
            let max_v = p[0].1.max(p[1].1).max(p[2].1);
            // Pixel i is sampled at i + 0.5.
            let lo = |m: T| (m - half).ceil().max(T::zero());
            let hi = |m: T, n: usize| (m - half).floor().min(T::lit(n as f64 - 1.0));
            let (x0, x1, y0, y1) = (lo(min_u), hi(max_u, w), lo(min_v), hi(max_v, h));
            if x0 > x1 || y0 > y1 {
                continue;
            }
            let shade = if opts.preview {
                let (v0, v1, v2) = (
                    inst.vertices[t[0] as usize],
                    inst.vertices[t[1] as usize],
                    inst.vertices[t[2] as usize],
                );
                let n = (v1 - v0).cross(v2 - v0);
                let to_eye = eye - (v0 + v1 + v2) * T::lit(1.0 / 3.0);
                let denom = n.norm() * to_eye.norm();
                if denom > T::zero() {
                    (n.dot(to_eye) / denom).abs().to_f64_lossy() as f32
                } else {
                    0.0
                }
            } else {
                0.0
            };
            let idx = |v: T| v.to_f64_lossy() as usize;
            tris.push(ScreenTri {
                owns_edge: [owns(p[1], p[2]), owns(p[2], p[0]), owns(p[0], p[1])],
                p,
                inv_z,
                area,
                id: inst.instance_id,
                shade,
                x0: idx(x0),
                x1: idx(x1),
                y0: idx(y0),
                y1: idx(y1),
            });
        }
    }

    let n_bands = h.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_bands];
    for (i, t) in tris.iter().enumerate() {
        for bin in &mut bins[t.y0 / BAND_ROWS..=t.y1 / BAND_ROWS] {
            bin.push(i as u32);
        }
    }

    let ground_depth = |px: usize, py: usize| -> T {
        let (o, d) = cam.pixel_ray(T::lit(px as f64 + 0.5), T::lit(py as f64 + 0.5));
        if d.z < T::zero() {
            -o.z / d.z
        } else {
            T::lit(MAX_DEPTH)
        }
    };

    let render_band = |band: usize| -> Band<T> {
        let ys = band * BAND_ROWS;
        let ye = (ys + BAND_ROWS).min(h);
        let rows = ye - ys;
        let mut depth = Vec::with_capacity(rows * w);
        for y in ys..ye {
            for x in 0..w {
                depth.push(ground_depth(x, y));
            }
        }
        let mut ids = vec![0u32; rows * w];
        let mut shade = vec![1.0f32; rows * w];
        for &ti in &bins[band] {
            let t = &tris[ti as usize];
            for y in t.y0.max(ys)..=t.y1.min(ye - 1) {
                let py = T::lit(y as f64) + half;
                for x in t.x0..=t.x1 {
                    let pp = (T::lit(x as f64) + half, py);
                    let e = [
                        edge(t.p[1], t.p[2], pp),
                        edge(t.p[2], t.p[0], pp),
                        edge(t.p[0], t.p[1], pp),
                    ];
                    let inside = (0..3).all(|k| e[k] > T::zero() || (e[k] == T::zero() && t.owns_edge[k]));
                    if !inside {
                        continue;
                    }
                    let inv = (e[0] * t.inv_z[0] + e[1] * t.inv_z[1] + e[2] * t.inv_z[2]) / t.area;
                    let z = inv.recip();
                    let i = (y - ys) * w + x;
                    if z < depth[i] || (z == depth[i] && t.id < ids[i]) {
                        depth[i] = z;
                        ids[i] = t.id;
                        shade[i] = t.shade;
                    }
                }
            }
        }
        Band { depth, ids, shade }
    };

    let bands: Vec<Band<T>> = if opts.parallel {
        (0..n_bands).into_par_iter().map(render_band).collect()
    } else {
        (0..n_bands).map(render_band).collect()
    };

    let mut depth = Vec::with_capacity(w * h);
    let mut ids = Vec::with_capacity(w * h);
    let mut preview = opts.preview.then(|| RgbImage::new(w as u32, h as u32));
    let mut row0 = 0usize;
    for b in bands {
        if let Some(img) = preview.as_mut() {
            for (i, (&id, &s)) in b.ids.iter().zip(&b.shade).enumerate() {
                let albedo = if id == 0 { GROUND_ALBEDO } else { MUSHROOM_ALBEDO };
                let px = Rgb(albedo.map(|a| (255.0 * a * s).round().clamp(0.0, 255.0) as u8));
                img.put_pixel((i % w) as u32, (row0 + i / w) as u32, px);
            }
        }
        row0 += b.ids.len() / w;
        depth.extend(b.depth.into_iter().map(|z| z.to_f64_lossy() as f32));
        ids.extend(b.ids);
    }

    Ok(RenderOutput {
        depth: DepthMap::from_vec(w as u32, h as u32, depth),
        ids: InstanceIdMap::from_vec(w as u32, h as u32, ids),
        preview,
    })
}

struct Band<T> {
    depth: Vec<T>,
    ids: Vec<u32>,
    shade: Vec<f32>,
}
