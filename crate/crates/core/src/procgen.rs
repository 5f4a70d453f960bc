//! Parametric mushroom meshes.
//!
//! A mushroom is a closed surface of revolution around +Z: a tapered stem
//! standing on the origin, a flat closed underside (no gills) and a dome cap
//! whose profile blends a hemisphere with a paraboloid. All proportions are
//! fractions of the cap diameter, which grows linearly with age.
//!
//! Randomness perturbs three shape factors, each drawn from a counter-based
//! stream keyed only by the seed, so equal `(age, randomness, seed)` always
//! produce bit-identical meshes and a zero randomness ignores the seed.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::num::Real;
use crate::rng;

pub const MIN_AGE: f64 = 0.05;
pub const MAX_AGE: f64 = 1.0;
/// Cap diameter at age 1. Diameter is linear through the origin.
pub const CAP_DIAMETER_MM_PER_AGE: f64 = 30.0;

// Nominal profile, as fractions of the cap diameter.
pub const STEM_HEIGHT_RATIO: f64 = 0.35;
pub const STEM_BASE_RADIUS_RATIO: f64 = 0.18;
pub const STEM_TOP_RADIUS_RATIO: f64 = 0.15;
pub const UNDERSIDE_OUTER_RADIUS_RATIO: f64 = 0.46;
pub const RIM_THICKNESS_RATIO: f64 = 0.04;
pub const CAP_HEIGHT_RATIO: f64 = 0.30;
/// Weight of the hemisphere in the cap profile; the rest is paraboloid.
pub const NOMINAL_PROFILE_BLEND: f64 = 0.5;

// Maximum deviations at randomness = 1, scaled linearly with randomness.
pub const STEM_LENGTH_MAX_DEVIATION: f64 = 0.30;
pub const CAP_ECCENTRICITY_MAX_DEVIATION: f64 = 0.15;
pub const PROFILE_BLEND_MAX_DEVIATION: f64 = 0.20;

/// Upper bound on any vertex displacement relative to the zero-randomness
/// mesh, as a fraction of cap diameter per unit of randomness.
///
/// Stem length moves cap vertices by at most 0.35 * 0.30 = 0.105, the blend
/// by at most 0.30 * 0.20 * 0.25 = 0.015 and eccentricity moves vertices
/// horizontally by at most 0.5 * 0.15 = 0.075, which gives 0.1415 overall.
pub const MAX_VERTEX_DEVIATION: f64 = 0.15;

const KEY_STEM: u64 = 1;
const KEY_BLEND: u64 = 2;
const KEY_ECCENTRICITY: u64 = 3;
const KEY_ECCENTRICITY_AXIS: u64 = 4;
const KEY_BANK_ROW: u64 = 0xB0A2;

#[derive(Debug, Error, PartialEq)]
pub enum ProcgenError {
    #[error("age {0} outside [0.05, 1]")]
    AgeOutOfRange(f64),
    #[error("{name} = {value} outside [0, 1]")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("tessellation needs at least 8 radial and 6 axial segments, got {radial}x{axial}")]
    InvalidTessellation { radial: u32, axial: u32 },
    #[error("count must be at least 1")]
    EmptyCount,
}

/// Cap diameter in millimetres for an age in `[0.05, 1]`.
pub fn cap_diameter<T: Real>(age: T) -> Result<T, ProcgenError> {
    if !(age >= T::lit(MIN_AGE) && age <= T::lit(MAX_AGE)) {
        return Err(ProcgenError::AgeOutOfRange(age.to_f64_lossy()));
    }
    Ok(T::lit(CAP_DIAMETER_MM_PER_AGE) * age)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MushroomParams<T> {
    pub age: T,
    pub age_increment: T,
    pub randomness: T,
    pub seed: u64,
}

impl<T: Real> MushroomParams<T> {
    pub fn new(age: T, age_increment: T, randomness: T, seed: u64) -> Result<Self, ProcgenError> {
        let p = Self {
            age,
            age_increment,
            randomness,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProcgenError> {
        cap_diameter(self.age)?;
        let unit = |name, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(ProcgenError::ParameterOutOfRange {
                    name,
                    value: v.to_f64_lossy(),
                })
            }
        };
        unit("age_increment", self.age_increment)?;
        unit("randomness", self.randomness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tessellation {
    pub radial: u32,
    pub axial: u32,
}

impl Default for Tessellation {
    fn default() -> Self {
        Self {
            radial: 32,
            axial: 24,
        }
    }
}

impl Tessellation {
    pub fn validate(&self) -> Result<(), ProcgenError> {
        if self.radial < 8 || self.axial < 6 {
            return Err(ProcgenError::InvalidTessellation {
                radial: self.radial,
                axial: self.axial,
            });
        }
        Ok(())
    }

    /// Split of the axial segments into (stem, underside, cap) ring counts.
    fn split(&self) -> (u32, u32, u32) {
        let stem = (self.axial / 4).max(2);
        let under = (self.axial / 6).max(1);
        (stem, under, self.axial - stem - under)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MushroomMesh<T> {
    /// Model-local positions in metres; stem base at the origin, +Z up.
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[u32; 3]>,
    pub params: MushroomParams<T>,
    pub cap_diameter_mm: T,
}

impl<T: Real> MushroomMesh<T> {
    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        let inf = T::infinity();
        self.vertices.iter().fold(
            (Vec3::new(inf, inf, inf), Vec3::new(-inf, -inf, -inf)),
            |(lo, hi), v| {
                (
                    Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z)),
                    Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z)),
                )
            },
        )
    }

    /// Largest bounding-box extent in the ground plane, in metres.
    pub fn horizontal_extent(&self) -> T {
        let (lo, hi) = self.bounds();
        (hi.x - lo.x).max(hi.y - lo.y)
    }

    pub fn height(&self) -> T {
        self.bounds().1.z
    }

    /// Largest distance of any vertex from the Z axis, in metres.
    pub fn max_radius(&self) -> T {
        self.vertices
            .iter()
            .fold(T::zero(), |m, v| m.max((v.x * v.x + v.y * v.y).sqrt()))
    }

    /// True when every directed edge appears exactly once and its reverse
    /// exactly once, i.e. the surface is closed and consistently oriented.
    pub fn is_closed_orientable(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Writes the mesh as ASCII Wavefront OBJ.
    pub fn write_obj<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# mushroom age={:?} randomness={:?} seed={}",
            self.params.age, self.params.randomness, self.params.seed
        )?;
        for v in &self.vertices {
            writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// Seeded shape factors; all deviations are exactly zero at randomness 0.
struct ShapeFactors<T> {
    stem_scale: T,
    blend: T,
    eccentricity: T,
    axis: (T, T),
}

impl<T: Real> ShapeFactors<T> {
    fn draw(seed: u64, randomness: T) -> Self {
        let dev = |key, max: f64| T::lit(max) * randomness * T::lit(rng::signed_unit(seed, &[key]));
        let angle = T::lit(2.0 * PI * rng::unit(seed, &[KEY_ECCENTRICITY_AXIS]));
        let blend = (T::lit(NOMINAL_PROFILE_BLEND) + dev(KEY_BLEND, PROFILE_BLEND_MAX_DEVIATION))
            .max(T::zero())
            .min(T::one());
        Self {
            stem_scale: T::one() + dev(KEY_STEM, STEM_LENGTH_MAX_DEVIATION),
            blend,
            eccentricity: dev(KEY_ECCENTRICITY, CAP_ECCENTRICITY_MAX_DEVIATION),
            axis: (angle.cos(), angle.sin()),
        }
    }

    /// Stretches along the eccentricity axis and squeezes across it. Written
    /// as a displacement so that a zero eccentricity is an exact no-op.
    fn squash(&self, x: T, y: T) -> (T, T) {
        let (c, s) = self.axis;
        let along = x * c + y * s;
        let across = -x * s + y * c;
        let e = self.eccentricity;
        (
            x + e * (along * c + across * s),
            y + e * (along * s - across * c),
        )
    }
}

/// Meridian profile `(radius, height)` in units of cap diameter, bottom pole
/// first and top pole last.
fn profile<T: Real>(tess: &Tessellation, f: &ShapeFactors<T>) -> Vec<(T, T)> {
    let (stem_rings, under_rings, cap_rings) = tess.split();
    let lit = T::lit;
    let stem_h = lit(STEM_HEIGHT_RATIO) * f.stem_scale;
    let (rb, rt, ro) = (
        lit(STEM_BASE_RADIUS_RATIO),
        lit(STEM_TOP_RADIUS_RATIO),
        lit(UNDERSIDE_OUTER_RADIUS_RATIO),
    );
    let cap_base = stem_h + lit(RIM_THICKNESS_RATIO);
    let cap_h = lit(CAP_HEIGHT_RATIO);
    let radius = lit(0.5);

    let mut pts = vec![(T::zero(), T::zero())];
    for j in 0..=stem_rings {
        let t = lit(j as f64 / stem_rings as f64);
        pts.push((rb + (rt - rb) * t, stem_h * t));
    }
    for j in 1..=under_rings {
        let t = lit(j as f64 / under_rings as f64);
        pts.push((rt + (ro - rt) * t, stem_h));
    }
    for j in 0..cap_rings {
        let theta = lit(0.5 * PI * j as f64 / cap_rings as f64);
        let s = theta.cos();
        let q = T::one() - s * s;
        let dome = f.blend * q.sqrt() + (T::one() - f.blend) * q;
        pts.push((radius * s, cap_base + cap_h * dome));
    }
    pts.push((T::zero(), cap_base + cap_h));
    pts
}

/// Generates one mushroom mesh.
pub fn generate_mushroom<T: Real>(
    params: &MushroomParams<T>,
    tess: &Tessellation,
) -> Result<MushroomMesh<T>, ProcgenError> {
    params.validate()?;
    tess.validate()?;
    let diameter_mm = cap_diameter(params.age)?;
    let scale = diameter_mm * T::lit(1e-3);
    let factors = ShapeFactors::draw(params.seed, params.randomness);
    let prof = profile(tess, &factors);

    let radial = tess.radial as usize;
    let rings = &prof[1..prof.len() - 1];
    let mut vertices = Vec::with_capacity(rings.len() * radial + 2);
    vertices.push(Vec3::new(T::zero(), T::zero(), prof[0].1 * scale));
    for &(r, z) in rings {
        for k in 0..radial {
            let phi = T::lit(2.0 * PI * k as f64 / radial as f64);
            let (x, y) = factors.squash(r * phi.cos(), r * phi.sin());
            vertices.push(Vec3::new(x * scale, y * scale, z * scale));
        }
    }
    let top = prof[prof.len() - 1];
    vertices.push(Vec3::new(T::zero(), T::zero(), top.1 * scale));

    let ring_vertex = |ring: usize, k: usize| (1 + ring * radial + k % radial) as u32;
    let top_index = (vertices.len() - 1) as u32;
    let mut triangles = Vec::with_capacity(2 * radial * rings.len());
    for k in 0..radial {
        triangles.push([0, ring_vertex(0, k + 1), ring_vertex(0, k)]);
    }
    for ring in 0..rings.len() - 1 {
        for k in 0..radial {
            let (a0, a1) = (ring_vertex(ring, k), ring_vertex(ring, k + 1));
            let (b0, b1) = (ring_vertex(ring + 1, k), ring_vertex(ring + 1, k + 1));
            triangles.push([a0, a1, b1]);
            triangles.push([a0, b1, b0]);
        }
    }
    let last = rings.len() - 1;
    for k in 0..radial {
        triangles.push([ring_vertex(last, k), ring_vertex(last, k + 1), top_index]);
    }

    Ok(MushroomMesh {
        vertices,
        triangles,
        params: *params,
        cap_diameter_mm: diameter_mm,
    })
}

/// Ages produced by chaining `count` models from `base`, clamped to 1.
pub fn chained_ages<T: Real>(base: &MushroomParams<T>, count: usize) -> Vec<T> {
    (0..count)
        .map(|i| (base.age + base.age_increment * T::lit(i as f64)).min(T::lit(MAX_AGE)))
        .collect()
}

/// Generates `count` meshes at successive ages sharing seed and randomness.
pub fn chain_ages<T: Real>(
    base: &MushroomParams<T>,
    count: usize,
    tess: &Tessellation,
) -> Result<Vec<MushroomMesh<T>>, ProcgenError> {
    if count == 0 {
        return Err(ProcgenError::EmptyCount);
    }
    base.validate()?;
    chained_ages(base, count)
        .into_iter()
        .map(|age| generate_mushroom(&MushroomParams { age, ..*base }, tess))
        .collect()
}

/// Layout of the variant bank: `rows` growth series of `per_row` ages each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankConfig {
    pub rows: u32,
    pub per_row: u32,
    pub randomness: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub tessellation: Tessellation,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            per_row: 20,
            randomness: 0.25,
            master_seed: 0,
            tessellation: Tessellation::default(),
        }
    }
}

impl BankConfig {
    pub fn len(&self) -> usize {
        self.rows as usize * self.per_row as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_seed(&self, row: u32) -> u64 {
        rng::derive(self.master_seed, &[KEY_BANK_ROW, row as u64])
    }

    fn row_base(&self, row: u32) -> MushroomParams<f64> {
        let increment = if self.per_row > 1 {
            (MAX_AGE - MIN_AGE) / (self.per_row - 1) as f64
        } else {
            0.0
        };
        MushroomParams {
            age: MIN_AGE,
            age_increment: increment,
            randomness: self.randomness,
            seed: self.row_seed(row),
        }
    }

    /// Parameters of every variant in bank order (row-major).
    pub fn variant_params(&self) -> Vec<MushroomParams<f64>> {
        (0..self.rows)
            .flat_map(|row| {
                let base = self.row_base(row);
                chained_ages(&base, self.per_row as usize)
                    .into_iter()
                    .map(move |age| MushroomParams { age, ..base })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProcgenError> {
        if self.rows == 0 || self.per_row == 0 {
            return Err(ProcgenError::EmptyCount);
        }
        if !(0.0..=1.0).contains(&self.randomness) {
            return Err(ProcgenError::ParameterOutOfRange {
                name: "randomness",
                value: self.randomness,
            });
        }
        self.tessellation.validate()
    }
}

/// Generates the whole variant bank in row-major order.
pub fn variant_bank<T: Real>(config: &BankConfig) -> Result<Vec<MushroomMesh<T>>, ProcgenError> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.len());
    for row in 0..config.rows {
        let base = config.row_base(row);
        let base = MushroomParams {
            age: T::lit(base.age),
            age_increment: T::lit(base.age_increment),
            randomness: T::lit(base.randomness),
            seed: base.seed,
        };
        out.extend(chain_ages(&base, config.per_row as usize, &config.tessellation)?);
    }
    Ok(out)
}
