//! Single-frame lidar simulation by projecting a dense cloud into a range image.
//!
//! Beam layout: row `r` is an elevation bin (ascending, row 0 lowest), column
//! `c` is an azimuth bin centered on `c * 2π / n_azimuth`. A point exactly on a
//! bin boundary goes to the lower-index bin. Each cell keeps its nearest return.

mod format;

pub use format::{read_depth_image, write_depth_image};

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, Pose};

/// Range value of a cell without a return.
pub const NO_RETURN: f32 = f32::NAN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub n_azimuth: usize,
    pub n_elevation: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for SensorModel {
    /// 128 x 1024 beams over +-0.393 rad, 10 m range.
    fn default() -> Self {
        Self {
            n_azimuth: 1024,
            n_elevation: 128,
            elevation_min: -0.393,
            elevation_max: 0.393,
            min_range: 0.0,
            max_range: 10.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_azimuth == 0 || self.n_elevation == 0 {
            return Err(Error::contract("sensor needs at least one azimuth and one elevation bin"));
        }
        if !(self.elevation_min < self.elevation_max) || self.elevation_min < -PI / 2.0 || self.elevation_max > PI / 2.0 {
            return Err(Error::contract("sensor elevation span must satisfy -pi/2 <= min < max <= pi/2"));
        }
        if !(0.0 <= self.min_range && self.min_range < self.max_range) || !self.max_range.is_finite() {
            return Err(Error::contract("sensor ranges must satisfy 0 <= min_range < max_range < inf"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n_azimuth * self.n_elevation
    }

    pub fn azimuth_step(&self) -> f64 {
        TAU / self.n_azimuth as f64
    }

    pub fn elevation_step(&self) -> f64 {
        (self.elevation_max - self.elevation_min) / self.n_elevation as f64
    }

    pub fn azimuth_center(&self, col: usize) -> f64 {
        let a = col as f64 * self.azimuth_step();
        if a > PI {
            a - TAU
        } else {
            a
        }
    }

    pub fn elevation_center(&self, row: usize) -> f64 {
        self.elevation_min + (row as f64 + 0.5) * self.elevation_step()
    }

    pub fn azimuth_bin(&self, azimuth: f64) -> usize {
        let u = azimuth / self.azimuth_step() + 0.5;
        (u.ceil() as i64 - 1).rem_euclid(self.n_azimuth as i64) as usize
    }

    /// `None` outside the vertical field of view.
    pub fn elevation_bin(&self, elevation: f64) -> Option<usize> {
        if !(self.elevation_min..=self.elevation_max).contains(&elevation) {
            return None;
        }
        let v = (elevation - self.elevation_min) / self.elevation_step();
        Some((v.ceil() as i64 - 1).clamp(0, self.n_elevation as i64 - 1) as usize)
    }

    /// Unit vector through the center of a beam cell, sensor frame.
    pub fn beam_direction(&self, row: usize, col: usize) -> Point3 {
        let (se, ce) = self.elevation_center(row).sin_cos();
        let (sa, ca) = self.azimuth_center(col).sin_cos();
        Point3::new(ce * ca, ce * sa, se)
    }

    /// Cell index and stored range for a sensor-frame point, if it produces a return.
    pub fn project(&self, p: Point3) -> Option<(usize, f32)> {
        let horizontal = p.x.hypot(p.y);
        let range = p.norm();
        if range == 0.0 {
            return None;
        }
        let stored = range as f32;
        let r = stored as f64;
        if r < self.min_range || r > self.max_range {
            return None;
        }
        let row = self.elevation_bin(p.z.atan2(horizontal))?;
        let col = self.azimuth_bin(p.y.atan2(p.x));
        Some((row * self.n_azimuth + col, stored))
    }
}

/// Range image of one simulated frame. Ranges are row-major, rows are elevation bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    sensor: SensorModel,
    pose: Pose,
    ranges: Vec<f32>,
}

impl DepthImage {
    pub fn empty(sensor: SensorModel, pose: Pose) -> Self {
        Self {
            sensor,
            pose,
            ranges: vec![NO_RETURN; sensor.cell_count()],
        }
    }

    /// Checks dimensions and that every finite range is inside the sensor limits.
    pub fn from_ranges(sensor: SensorModel, pose: Pose, ranges: Vec<f32>) -> Result<Self> {
        sensor.validate()?;
        if ranges.len() != sensor.cell_count() {
            return Err(Error::contract(format!(
                "depth image has {} cells, sensor expects {}",
                ranges.len(),
                sensor.cell_count()
            )));
        }
        if let Some(i) = ranges
            .iter()
            .position(|r| r.is_infinite() || (r.is_finite() && !(sensor.min_range..=sensor.max_range).contains(&(*r as f64))))
        {
            return Err(Error::Data(format!("range {} at cell {i} is outside sensor limits", ranges[i])));
        }
        Ok(Self { sensor, pose, ranges })
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn ranges(&self) -> &[f32] {
        &self.ranges
    }

    pub(crate) fn ranges_mut(&mut self) -> &mut [f32] {
        &mut self.ranges
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let r = self.ranges[row * self.sensor.n_azimuth + col];
        r.is_finite().then_some(r)
    }

    pub fn returns(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_finite()).count()
    }

    /// Sensor-frame point of a cell's return.
    pub fn point_at(&self, row: usize, col: usize) -> Option<Point3> {
        let r = self.get(row, col)? as f64;
        let d = self.sensor.beam_direction(row, col);
        Some(Point3::new(d.x * r, d.y * r, d.z * r))
    }
}

/// Projects `gt_cloud` into the sensor at `pose`, keeping the nearest point per beam cell.
pub fn simulate_scan(gt_cloud: &PointCloud, pose: &Pose, sensor: &SensorModel) -> Result<DepthImage> {
    sensor.validate()?;
    pose.validate()?;
    let hits: Vec<(usize, f32)> = gt_cloud
        .points()
        .par_iter()
        .filter_map(|p| sensor.project(pose.world_to_sensor(*p)))
        .collect();
    let mut img = DepthImage::empty(*sensor, *pose);
    for (idx, r) in hits {
        let cell = &mut img.ranges[idx];
        // NaN compares false, so the first hit always lands.
        if !(*cell <= r) {
            *cell = r;
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFrame {
    Sensor,
    World,
}

/// One point per finite cell along the bin-center direction.
pub fn depth_to_cloud(img: &DepthImage, frame: CloudFrame) -> PointCloud {
    let n_az = img.sensor.n_azimuth;
    let points = img
        .ranges
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_finite())
        .map(|(idx, _)| {
            let p = img.point_at(idx / n_az, idx % n_az).expect("finite cell");
            match frame {
                CloudFrame::Sensor => p,
                CloudFrame::World => img.pose.sensor_to_world(p),
            }
        })
        .collect();
    PointCloud::from_points_unchecked(points)
}
