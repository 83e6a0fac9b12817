//! Bird's-eye-view grids: rasterization, the seven terrain features, ego crops
//! and freespace extraction.
//!
//! Cell `(i, j)` spans `[origin.x + i*res, origin.x + (i+1)*res) x [origin.y + j*res, ...)`,
//! so `i` runs along x over `width` cells and `j` along y over `height` cells.
//! Values are stored channel-major, then by `i`, then by `j`.

mod crop;
mod features;
mod grid_file;

pub use crop::crop_and_align;
pub use features::{compute_features, percentile_sorted, FeatureParams};
pub use grid_file::{read_grid, write_grid, RawGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Pose};

/// Channel order of the canonical feature set.
pub const CANONICAL_CHANNELS: [&str; 7] = ["terrain", "elevation", "step", "local_slope", "local_rough", "slope", "rough"];

/// Channels holding absolute heights; crops re-reference them to the pose height.
pub const HEIGHT_CHANNELS: [&str; 2] = ["terrain", "elevation"];

pub fn canonical_channels() -> Vec<String> {
    CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    #[serde(default)]
    pub ego_centered: bool,
}

impl Default for GridSpec {
    /// 7 m x 7 m at 5 cm, centered on the sensor.
    fn default() -> Self {
        Self::ego_centered(140, 140, 0.05)
    }
}

impl GridSpec {
    pub fn ego_centered(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin: [-(width as f64) * resolution / 2.0, -(height as f64) * resolution / 2.0],
            ego_centered: true,
        }
    }

    pub fn with_origin(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Self {
        Self {
            width,
            height,
            resolution,
            origin,
            ego_centered: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::contract("grid needs width, height >= 1"));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::contract("grid resolution must be finite and > 0"));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::contract("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.height + j
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.height, cell % self.height)
    }

    /// Cell containing `(x, y)`; lower edges are inclusive.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin[0]) / self.resolution).floor();
        let fj = ((y - self.origin[1]) / self.resolution).floor();
        if fi >= 0.0 && fj >= 0.0 && fi < self.width as f64 && fj < self.height as f64 {
            Some((fi as usize, fj as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        )
    }
}

/// C x W x H feature grid with a per-cell observed mask. Unobserved cells hold
/// NaN in every channel; an observed cell may still carry NaN in a channel
/// that could not be estimated there (a degenerate slope fit).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: GridSpec,
    channels: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
    pose: Option<Pose>,
}

impl FeatureMap {
    pub fn unobserved(spec: GridSpec, channels: Vec<String>) -> Self {
        let n = spec.cell_count();
        Self {
            values: vec![f64::NAN; channels.len() * n],
            observed: vec![false; n],
            spec,
            channels,
            pose: None,
        }
    }

    /// Assembles a map; values of unobserved cells are reset to NaN.
    pub fn from_parts(spec: GridSpec, channels: Vec<String>, mut values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        let n = spec.cell_count();
        if observed.len() != n || values.len() != channels.len() * n {
            return Err(Error::contract("feature map buffers do not match the grid"));
        }
        for c in 0..channels.len() {
            for (cell, obs) in observed.iter().enumerate() {
                if !obs {
                    values[c * n + cell] = f64::NAN;
                }
            }
        }
        Ok(Self {
            spec,
            channels,
            values,
            observed,
            pose: None,
        })
    }

    pub fn with_pose(mut self, pose: Option<Pose>) -> Self {
        self.pose = pose;
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn pose(&self) -> Option<&Pose> {
        self.pose.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn require_channel(&self, name: &str) -> Result<usize> {
        self.channel_index(name)
            .ok_or_else(|| Error::contract(format!("map has no channel {name:?}")))
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.spec.cell_count();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.spec.cell_count();
        &mut self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, cell: usize) -> f64 {
        self.values[c * self.spec.cell_count() + cell]
    }

    /// Whether the channel/cell entry carries a usable value.
    #[inline]
    pub fn is_valid(&self, c: usize, cell: usize) -> bool {
        self.observed[cell] && self.get(c, cell).is_finite()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }

    /// Sets every entry of a cell and marks it observed.
    pub fn set_cell(&mut self, cell: usize, values: &[f64]) {
        let n = self.spec.cell_count();
        for (c, v) in values.iter().enumerate() {
            self.values[c * n + cell] = *v;
        }
        self.observed[cell] = true;
    }

    pub fn mark_observed(&mut self, cell: usize, observed: bool) {
        self.observed[cell] = observed;
        if !observed {
            let n = self.spec.cell_count();
            for c in 0..self.channels.len() {
                self.values[c * n + cell] = f64::NAN;
            }
        }
    }

    /// Maps two grids channel-by-name onto each other; errors if they are not comparable.
    pub fn check_compatible(&self, other: &FeatureMap) -> Result<()> {
        if self.spec.width != other.spec.width || self.spec.height != other.spec.height {
            return Err(Error::contract("grid dimensions differ"));
        }
        if self.channels != other.channels {
            return Err(Error::contract("channel lists differ"));
        }
        Ok(())
    }

    pub fn to_raw(&self) -> RawGrid {
        RawGrid {
            spec: self.spec,
            channels: self.channels.clone(),
            values: self.values.clone(),
            pose: self.pose,
        }
    }

    /// Cells are observed when any channel is finite.
    pub fn from_raw(raw: RawGrid) -> Result<Self> {
        let observed = raw.observed();
        Ok(Self::from_parts(raw.spec, raw.channels, raw.values, observed)?.with_pose(raw.pose))
    }

    /// Rasterizes `cloud` and computes the canonical features.
    pub fn from_cloud(cloud: &PointCloud, spec: GridSpec, params: &FeatureParams) -> Result<Self> {
        compute_features(&rasterize(cloud, &spec)?, params)
    }
}

/// Per-cell z values, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellHeights {
    spec: GridSpec,
    cells: Vec<Vec<f64>>,
}

impl CellHeights {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        &self.cells[self.spec.index(i, j)]
    }

    pub fn cells(&self) -> &[Vec<f64>] {
        &self.cells
    }
}

/// Bins each point by its (x, y); points outside the grid are dropped.
pub fn rasterize(cloud: &PointCloud, spec: &GridSpec) -> Result<CellHeights> {
    spec.validate()?;
    let mut cells = vec![Vec::new(); spec.cell_count()];
    for p in cloud {
        if let Some((i, j)) = spec.cell_of(p.x, p.y) {
            cells[spec.index(i, j)].push(p.z);
        }
    }
    Ok(CellHeights { spec: *spec, cells })
}

/// Thresholds deciding where a robot pose may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreespaceRule {
    pub step_max: f64,
    pub slope_max: f64,
    /// Every cell within this radius must be observed.
    pub footprint_radius: f64,
}

impl Default for FreespaceRule {
    fn default() -> Self {
        Self {
            step_max: 0.2,
            slope_max: 0.35,
            footprint_radius: 0.5,
        }
    }
}

/// Offsets `(di, dj)` of cells whose centers lie within `radius` of a cell center.
pub(crate) fn disk_offsets(radius: f64, resolution: f64) -> Vec<(isize, isize)> {
    let r = (radius / resolution).floor() as isize + 1;
    let lim = (radius / resolution).powi(2) * (1.0 + 1e-9);
    let mut out = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            if ((di * di + dj * dj) as f64) <= lim {
                out.push((di, dj));
            }
        }
    }
    out
}

pub(crate) fn offset_cell(spec: &GridSpec, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
    let ni = i as isize + di;
    let nj = j as isize + dj;
    (ni >= 0 && nj >= 0 && (ni as usize) < spec.width && (nj as usize) < spec.height).then(|| spec.index(ni as usize, nj as usize))
}

/// Observed cells with low step and slope whose whole footprint is observed.
pub fn freespace_cells(map: &FeatureMap, rule: &FreespaceRule) -> Result<Vec<bool>> {
    let step = map.require_channel("step")?;
    let slope = map.require_channel("slope")?;
    let spec = *map.spec();
    let offsets = disk_offsets(rule.footprint_radius, spec.resolution);
    let free = (0..spec.cell_count())
        .map(|cell| {
            if !map.observed()[cell] {
                return false;
            }
            let (s, a) = (map.get(step, cell), map.get(slope, cell));
            if !(s < rule.step_max && a < rule.slope_max) {
                return false;
            }
            let (i, j) = spec.coords(cell);
            offsets
                .iter()
                .all(|&(di, dj)| offset_cell(&spec, i, j, di, dj).is_some_and(|n| map.observed()[n]))
        })
        .collect();
    Ok(free)
}
