//! Deterministic synthetic scenes: a walled room with boxes and a ramp.
//!
//! Surfaces are sampled on slightly jittered lattices. With spacing `s`, any
//! axis-aligned square of side `1.1 s` contains a sample, so floors sampled
//! below 0.045 m hit every cell of a 0.05 m grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::GridSpec;
use crate::geom::{Point3, PointCloud};

/// Axis-aligned box resting on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub height: f64,
}

/// Ramp rising along +x from the floor at `x0` to `height` at `x0 + length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub x0: f64,
    pub y0: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Room interior spans `[-half_extent, half_extent]` in x and y.
    pub half_extent: f64,
    pub wall_height: f64,
    pub floor_spacing: f64,
    pub wall_spacing: f64,
    pub boxes: Vec<BoxSpec>,
    pub ramp: Option<RampSpec>,
    pub seed: u64,
}

impl SceneSpec {
    /// About 50k points in a 6 m room.
    pub fn room() -> Self {
        Self {
            half_extent: 3.0,
            wall_height: 2.0,
            floor_spacing: 0.035,
            wall_spacing: 0.05,
            boxes: vec![
                BoxSpec {
                    center: [1.6, 1.5],
                    size: [0.6, 0.6],
                    height: 0.4,
                },
                BoxSpec {
                    center: [-1.5, 1.8],
                    size: [1.0, 0.5],
                    height: 0.25,
                },
                BoxSpec {
                    center: [-1.9, -1.7],
                    size: [0.4, 0.4],
                    height: 0.8,
                },
            ],
            ramp: Some(RampSpec {
                x0: 0.2,
                y0: -2.4,
                length: 1.6,
                width: 1.0,
                height: 0.3,
            }),
            seed: 7,
        }
    }

    /// About 10k points in a 4 m room.
    pub fn toy() -> Self {
        Self {
            half_extent: 2.0,
            wall_height: 0.8,
            floor_spacing: 0.045,
            wall_spacing: 0.07,
            boxes: vec![BoxSpec {
                center: [1.0, 1.0],
                size: [0.5, 0.5],
                height: 0.3,
            }],
            ramp: Some(RampSpec {
                x0: -1.2,
                y0: -1.6,
                length: 1.0,
                width: 0.6,
                height: 0.2,
            }),
            seed: 11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.half_extent, self.wall_height, self.floor_spacing, self.wall_spacing];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::contract("scene extents and spacings must be positive"));
        }
        Ok(())
    }

    /// Global grid covering the room plus a margin of `margin` meters.
    pub fn global_grid(&self, resolution: f64, margin: f64) -> GridSpec {
        let side = 2.0 * (self.half_extent + margin);
        let n = (side / resolution).ceil() as usize;
        let lo = -(self.half_extent + margin);
        GridSpec::with_origin(n, n, resolution, [lo, lo])
    }

    pub fn build(&self) -> Result<PointCloud> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut pts = Vec::new();
        let h = self.half_extent;
        let fs = self.floor_spacing;

        let covered = |x: f64, y: f64| {
            self.boxes.iter().any(|b| (x - b.center[0]).abs() < 0.5 * b.size[0] && (y - b.center[1]).abs() < 0.5 * b.size[1])
                || self.ramp.is_some_and(|r| x >= r.x0 && x <= r.x0 + r.length && y >= r.y0 && y <= r.y0 + r.width)
        };
        lattice(&mut rng, [-h, h], [-h, h], fs, |x, y| {
            if !covered(x, y) {
                pts.push(Point3::new(x, y, 0.0));
            }
        });

        let ws = self.wall_spacing;
        for (fixed, along_x) in [(-h, true), (h, true), (-h, false), (h, false)] {
            lattice(&mut rng, [-h, h], [0.0, self.wall_height], ws, |s, z| {
                pts.push(if along_x { Point3::new(s, fixed, z) } else { Point3::new(fixed, s, z) });
            });
        }

        for b in &self.boxes {
            let [cx, cy] = b.center;
            let (hx, hy) = (0.5 * b.size[0], 0.5 * b.size[1]);
            lattice(&mut rng, [cx - hx, cx + hx], [cy - hy, cy + hy], fs, |x, y| pts.push(Point3::new(x, y, b.height)));
            for (fixed, along_x) in [(cy - hy, true), (cy + hy, true), (cx - hx, false), (cx + hx, false)] {
                let span = if along_x { [cx - hx, cx + hx] } else { [cy - hy, cy + hy] };
                lattice(&mut rng, span, [0.0, b.height], ws, |s, z| {
                    pts.push(if along_x { Point3::new(s, fixed, z) } else { Point3::new(fixed, s, z) });
                });
            }
        }

        if let Some(r) = self.ramp {
            let grade = r.height / r.length;
            lattice(&mut rng, [r.x0, r.x0 + r.length], [r.y0, r.y0 + r.width], fs, |x, y| {
                pts.push(Point3::new(x, y, (x - r.x0) * grade));
            });
            let x1 = r.x0 + r.length;
            lattice(&mut rng, [r.y0, r.y0 + r.width], [0.0, r.height], ws, |y, z| pts.push(Point3::new(x1, y, z)));
        }
        PointCloud::from_points(pts)
    }
}

/// Calls `f` on a lattice over `[a0, a1] x [b0, b1]` with per-point jitter of
/// up to 5% of the spacing.
fn lattice(rng: &mut ChaCha8Rng, a: [f64; 2], b: [f64; 2], spacing: f64, mut f: impl FnMut(f64, f64)) {
    let na = ((a[1] - a[0]) / spacing).round().max(1.0) as usize;
    let nb = ((b[1] - b[0]) / spacing).round().max(1.0) as usize;
    let (da, db) = ((a[1] - a[0]) / na as f64, (b[1] - b[0]) / nb as f64);
    for ia in 0..na {
        for ib in 0..nb {
            let ja = rng.random_range(-0.05..0.05) * da;
            let jb = rng.random_range(-0.05..0.05) * db;
            f(a[0] + (ia as f64 + 0.5) * da + ja, b[0] + (ib as f64 + 0.5) * db + jb);
        }
    }
}
