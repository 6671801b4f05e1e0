//! Synthetic urban frames: grid-snapped rectangular buildings and thin walls
//! scattered over a square by rejection sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PerforatedDomain, Rect};

pub const MAX_REJECTIONS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrbanParams {
    pub seed: u64,
    /// Side length of the square frame (metres).
    pub extent: f64,
    pub n_buildings: usize,
    pub n_walls: usize,
    pub pitch: f64,
}

impl Default for UrbanParams {
    fn default() -> Self {
        Self {
            seed: 1,
            extent: 160.0,
            n_buildings: 60,
            n_walls: 80,
            pitch: 0.625,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrbanGeometry {
    pub params: UrbanParams,
    pub buildings: Vec<Rect>,
    pub walls: Vec<Rect>,
}

impl UrbanGeometry {
    pub fn domain(&self) -> PerforatedDomain {
        self.domain_with(true)
    }

    /// The frame with or without its walls.
    pub fn domain_with(&self, walls: bool) -> PerforatedDomain {
        let e = self.params.extent;
        let mut perforations: Vec<_> = self.buildings.iter().map(|r| r.polygon()).collect();
        if walls {
            perforations.extend(self.walls.iter().map(|r| r.polygon()));
        }
        PerforatedDomain {
            outer: Rect::new(0.0, 0.0, e, e).polygon(),
            perforations,
        }
    }
}

/// Occupancy of the `m × m` pitch squares.
struct Grid {
    m: usize,
    solid: Vec<bool>,
}

impl Grid {
    /// Whether the block grown by one square in every direction is free.
    fn clear(&self, i0: usize, j0: usize, w: usize, h: usize) -> bool {
        let (ilo, jlo) = (i0.saturating_sub(1), j0.saturating_sub(1));
        let (ihi, jhi) = ((i0 + w + 1).min(self.m), (j0 + h + 1).min(self.m));
        (jlo..jhi).all(|j| (ilo..ihi).all(|i| !self.solid[j * self.m + i]))
    }

    fn set(&mut self, i0: usize, j0: usize, w: usize, h: usize, v: bool) {
        for j in j0..j0 + h {
            for i in i0..i0 + w {
                self.solid[j * self.m + i] = v;
            }
        }
    }

    /// Edge-adjacent flood fill over free squares.
    fn connected(&self) -> bool {
        let m = self.m;
        let Some(start) = self.solid.iter().position(|s| !s) else {
            return false;
        };
        let mut seen = vec![false; m * m];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(k) = stack.pop() {
            let (i, j) = (k % m, k / m);
            let mut push = |n: usize| {
                if !self.solid[n] && !seen[n] {
                    seen[n] = true;
                    count += 1;
                    stack.push(n);
                }
            };
            if i > 0 {
                push(k - 1);
            }
            if i + 1 < m {
                push(k + 1);
            }
            if j > 0 {
                push(k - m);
            }
            if j + 1 < m {
                push(k + m);
            }
        }
        count == self.solid.iter().filter(|s| !**s).count()
    }
}

/// Places `n_buildings` buildings (4 to 12 pitches per side) and then
/// `n_walls` walls (one pitch thick, 8 to 40 pitches long) with at least one
/// pitch of clearance to each other and to the frame.
pub fn generate_urban_synthetic(params: &UrbanParams) -> Result<UrbanGeometry> {
    if !(params.pitch > 0.0 && params.extent > 0.0) {
        return Err(Error::InvalidParameter("extent and pitch must be positive".into()));
    }
    let mf = params.extent / params.pitch;
    if (mf - mf.round()).abs() > 1e-9 * mf {
        return Err(Error::PitchMismatch {
            pitch: params.pitch,
            what: "urban frame extent".into(),
        });
    }
    let m = mf.round() as usize;
    let mut grid = Grid {
        m,
        solid: vec![false; m * m],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (mut buildings, mut walls) = (Vec::new(), Vec::new());
    let mut rejections = 0usize;
    let to_rect = |i: usize, j: usize, w: usize, h: usize| {
        let p = params.pitch;
        Rect::new(i as f64 * p, j as f64 * p, (i + w) as f64 * p, (j + h) as f64 * p)
    };
    while buildings.len() < params.n_buildings || walls.len() < params.n_walls {
        let building = buildings.len() < params.n_buildings;
        let (w, h) = if building {
            (rng.random_range(4..=12usize), rng.random_range(4..=12usize))
        } else {
            let len = rng.random_range(8..=40usize);
            if rng.random_bool(0.5) {
                (len, 1)
            } else {
                (1, len)
            }
        };
        let fits = w + 2 <= m && h + 2 <= m;
        let placed = fits && {
            let i0 = rng.random_range(1..=m - w - 1);
            let j0 = rng.random_range(1..=m - h - 1);
            if grid.clear(i0, j0, w, h) {
                grid.set(i0, j0, w, h, true);
                if grid.connected() {
                    if building {
                        buildings.push(to_rect(i0, j0, w, h));
                    } else {
                        walls.push(to_rect(i0, j0, w, h));
                    }
                    true
                } else {
                    grid.set(i0, j0, w, h, false);
                    false
                }
            } else {
                false
            }
        };
        if !placed {
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::PlacementFailure {
                    attempts: rejections,
                    buildings: buildings.len(),
                    walls: walls.len(),
                });
            }
        }
    }
    Ok(UrbanGeometry {
        params: params.clone(),
        buildings,
        walls,
    })
}
