//! Bridson's grid-accelerated Poisson-disk sampling in a rectangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Rect, SceneError};

pub const DEFAULT_ATTEMPTS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub region: Rect,
    /// Minimum distance between any two samples, metres.
    pub min_distance: f64,
    pub seed: u64,
    pub max_attempts_per_point: u32,
}

impl SamplingConfig {
    pub fn new(region: Rect, min_distance: f64, seed: u64) -> Self {
        Self {
            region,
            min_distance,
            seed,
            max_attempts_per_point: DEFAULT_ATTEMPTS,
        }
    }
}

struct Grid {
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<u32>,
}

impl Grid {
    const EMPTY: u32 = u32::MAX;

    fn cell_of(&self, region: &Rect, p: [f64; 2]) -> (usize, usize) {
        let cx = ((p[0] - region.min[0]) / self.cell) as usize;
        let cy = ((p[1] - region.min[1]) / self.cell) as usize;
        (cx.min(self.cols - 1), cy.min(self.rows - 1))
    }
}

/// Samples points in `config.region` with pairwise distance at least
/// `min_distance`. An empty or degenerate region yields no points.
pub fn poisson_disk_sample(config: &SamplingConfig) -> Result<Vec<[f64; 2]>, SceneError> {
    let r = config.min_distance;
    if !(r.is_finite() && r > 0.0) {
        return Err(SceneError::InvalidConfig(format!(
            "min_distance must be positive, got {r}"
        )));
    }
    if config.max_attempts_per_point == 0 {
        return Err(SceneError::InvalidConfig(
            "max_attempts_per_point must be positive".into(),
        ));
    }
    let region = config.region;
    if !(region.width() > 0.0 && region.height() > 0.0) {
        return Ok(Vec::new());
    }

    let cell = r / std::f64::consts::SQRT_2;
    let cols = (region.width() / cell).ceil().max(1.0) as usize;
    let rows = (region.height() / cell).ceil().max(1.0) as usize;
    let mut grid = Grid {
        cell,
        cols,
        rows,
        cells: vec![Grid::EMPTY; cols * rows],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut active: Vec<u32> = Vec::new();
    let r2 = r * r;

    let insert = |p: [f64; 2], points: &mut Vec<[f64; 2]>, active: &mut Vec<u32>, grid: &mut Grid| {
        let idx = points.len() as u32;
        let (cx, cy) = grid.cell_of(&region, p);
        grid.cells[cy * grid.cols + cx] = idx;
        points.push(p);
        active.push(idx);
    };

    let first = [
        rng.random_range(region.min[0]..region.max[0]),
        rng.random_range(region.min[1]..region.max[1]),
    ];
    insert(first, &mut points, &mut active, &mut grid);

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let origin = points[active[slot] as usize];
        let mut found = false;
        for _ in 0..config.max_attempts_per_point {
            // Uniform by area over the annulus [r, 2r].
            let rad = (r2 + rng.random::<f64>() * 3.0 * r2).sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let cand = [origin[0] + rad * theta.cos(), origin[1] + rad * theta.sin()];
            if !region.contains(cand) {
                continue;
            }
            let (cx, cy) = grid.cell_of(&region, cand);
            let clear = (cy.saturating_sub(2)..(cy + 3).min(grid.rows)).all(|y| {
                (cx.saturating_sub(2)..(cx + 3).min(grid.cols)).all(|x| {
                    let i = grid.cells[y * grid.cols + x];
                    if i == Grid::EMPTY {
                        return true;
                    }
                    let q = points[i as usize];
                    let (dx, dy) = (q[0] - cand[0], q[1] - cand[1]);
                    dx * dx + dy * dy >= r2
                })
            });
            if clear {
                insert(cand, &mut points, &mut active, &mut grid);
                found = true;
                break;
            }
        }
        if !found {
            active.swap_remove(slot);
        }
    }
    Ok(points)
}
