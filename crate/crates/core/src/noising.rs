//! Four-stage corruption of simulated range images: ceiling crop, robot
//! self-occlusion masks, salt-and-pepper returns, and range-proportional noise.
//!
//! Stages run in that fixed order. Each fires with its own probability and
//! draws its parameters uniformly from the configured ranges. All randomness
//! comes from the caller's generator; per-row streams are split off a drawn
//! seed so the result does not depend on thread count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan_sim::{DepthImage, SensorModel, NO_RETURN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeilingCropConfig {
    pub p: f64,
    /// Uniform range for the height above the sensor beyond which returns are cut.
    pub dz_max: [f64; 2],
}

/// Boolean beam mask stored sparsely as the list of masked cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamMask {
    pub n_elevation: usize,
    pub n_azimuth: usize,
    pub cells: Vec<usize>,
}

impl BeamMask {
    pub fn from_dense(sensor: &SensorModel, dense: &[bool]) -> Result<Self> {
        if dense.len() != sensor.cell_count() {
            return Err(Error::contract("mask size does not match sensor"));
        }
        Ok(Self {
            n_elevation: sensor.n_elevation,
            n_azimuth: sensor.n_azimuth,
            cells: dense.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect(),
        })
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.n_elevation * self.n_azimuth];
        for &i in &self.cells {
            if let Some(m) = dense.get_mut(i) {
                *m = true;
            }
        }
        dense
    }

    fn matches(&self, sensor: &SensorModel) -> bool {
        self.n_elevation == sensor.n_elevation && self.n_azimuth == sensor.n_azimuth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMaskConfig {
    pub p: f64,
    /// Number of procedural masks generated when `masks` is absent.
    pub n_masks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<BeamMask>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaltPepperConfig {
    pub p: f64,
    /// Probability that a return is kept unchanged.
    pub p_r: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeNoiseConfig {
    pub p: f64,
    /// Uniform range for the slope of the noise standard deviation in range.
    pub m: [f64; 2],
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisingConfig {
    pub ceiling_crop: CeilingCropConfig,
    pub robot_mask: RobotMaskConfig,
    pub salt_pepper: SaltPepperConfig,
    pub range_noise: RangeNoiseConfig,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for NoisingConfig {
    fn default() -> Self {
        Self {
            ceiling_crop: CeilingCropConfig {
                p: 0.5,
                dz_max: [0.5, 1.0],
            },
            robot_mask: RobotMaskConfig {
                p: 0.8,
                n_masks: 4,
                masks: None,
            },
            salt_pepper: SaltPepperConfig {
                p: 1.0,
                p_r: 0.999,
                r_max: 10.0,
            },
            range_noise: RangeNoiseConfig {
                p: 1.0,
                m: [0.001, 0.01],
                c: 0.0,
            },
            rng_seed: 0,
        }
    }
}

impl NoisingConfig {
    /// A configuration under which the pipeline is the identity.
    pub fn disabled() -> Self {
        let mut cfg = Self::default();
        cfg.ceiling_crop.p = 0.0;
        cfg.robot_mask.p = 0.0;
        cfg.salt_pepper.p = 0.0;
        cfg.range_noise.p = 0.0;
        cfg
    }

    pub fn validate(&self, sensor: &SensorModel) -> Result<()> {
        let probs = [
            ("ceiling_crop.p", self.ceiling_crop.p),
            ("robot_mask.p", self.robot_mask.p),
            ("salt_pepper.p", self.salt_pepper.p),
            ("salt_pepper.p_r", self.salt_pepper.p_r),
            ("range_noise.p", self.range_noise.p),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::contract(format!("{name} = {p} is not a probability")));
            }
        }
        check_range("ceiling_crop.dz_max", self.ceiling_crop.dz_max)?;
        check_range("range_noise.m", self.range_noise.m)?;
        if !(self.range_noise.c >= 0.0 && self.range_noise.c.is_finite()) {
            return Err(Error::contract("range_noise.c must be finite and >= 0"));
        }
        if !(self.salt_pepper.r_max > 0.0 && self.salt_pepper.r_max.is_finite()) {
            return Err(Error::contract("salt_pepper.r_max must be finite and > 0"));
        }
        match &self.robot_mask.masks {
            Some(masks) => {
                if masks.is_empty() && self.robot_mask.p > 0.0 {
                    return Err(Error::contract("robot_mask.masks is empty"));
                }
                if masks.iter().any(|m| !m.matches(sensor)) {
                    return Err(Error::contract("robot mask dimensions differ from the sensor"));
                }
            }
            None => {
                if self.robot_mask.n_masks == 0 && self.robot_mask.p > 0.0 {
                    return Err(Error::contract("robot_mask.n_masks must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Dense masks for `sensor`: the configured ones, or procedural defaults.
    pub fn masks_for(&self, sensor: &SensorModel) -> Vec<Vec<bool>> {
        match &self.robot_mask.masks {
            Some(masks) => masks.iter().map(BeamMask::to_dense).collect(),
            None => procedural_masks(sensor, self.robot_mask.n_masks),
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(0.0 <= r[0] && r[0] <= r[1] && r[1].is_finite()) {
        return Err(Error::contract(format!("{name} must be an interval [lo, hi] with 0 <= lo <= hi")));
    }
    Ok(())
}

/// Stand-in robot body masks: elliptical blobs over the lowest beam rows,
/// one more leg-like blob and a little taller for each successive mask.
pub fn procedural_masks(sensor: &SensorModel, count: usize) -> Vec<Vec<bool>> {
    let (n_el, n_az) = (sensor.n_elevation, sensor.n_azimuth);
    (0..count)
        .map(|k| {
            let blobs = 2 + k;
            let half_width = TAU * (0.035 + 0.01 * k as f64);
            let height = (n_el as f64 * (0.10 + 0.04 * k as f64)).max(1.0);
            let offset = 0.3 * k as f64;
            let mut mask = vec![false; n_el * n_az];
            for row in 0..n_el {
                let dv = (row as f64 + 0.5) / height;
                if dv > 1.0 {
                    break;
                }
                for col in 0..n_az {
                    let az = sensor.azimuth_center(col);
                    let hit = (0..blobs).any(|j| {
                        let center = (j as f64 + 0.5) / blobs as f64 * TAU + offset;
                        let d = (az - center + TAU * 1.5).rem_euclid(TAU) - TAU / 2.0;
                        let du = d / half_width;
                        du * du + dv * dv <= 1.0
                    });
                    mask[row * n_az + col] = hit;
                }
            }
            mask
        })
        .collect()
}

/// Clamps into the sensor limits and narrows to the stored precision, staying inside them.
fn store_range(r: f64, sensor: &SensorModel) -> f32 {
    let mut v = r.clamp(sensor.min_range, sensor.max_range) as f32;
    while (v as f64) > sensor.max_range {
        v = v.next_down();
    }
    while (v as f64) < sensor.min_range {
        v = v.next_up();
    }
    v
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Removes returns more than `dz_max` above the sensor origin.
pub fn ceiling_crop(img: &DepthImage, dz_max: f64) -> Result<DepthImage> {
    if !(dz_max >= 0.0) {
        return Err(Error::contract("dz_max must be >= 0"));
    }
    let mut out = img.clone();
    let sensor = *img.sensor();
    for (row, ranges) in out.ranges_mut().chunks_mut(sensor.n_azimuth).enumerate() {
        let sin_el = sensor.elevation_center(row).sin();
        for r in ranges.iter_mut().filter(|r| r.is_finite()) {
            if *r as f64 * sin_el > dz_max {
                *r = NO_RETURN;
            }
        }
    }
    Ok(out)
}

/// Drops every return under a masked beam cell.
pub fn robot_mask(img: &DepthImage, mask: &[bool]) -> Result<DepthImage> {
    if mask.len() != img.ranges().len() {
        return Err(Error::contract("mask size does not match the depth image"));
    }
    let mut out = img.clone();
    for (r, &m) in out.ranges_mut().iter_mut().zip(mask) {
        if m {
            *r = NO_RETURN;
        }
    }
    Ok(out)
}

/// Keeps each return with probability `p_r`, otherwise replaces it with a
/// uniform draw on the open interval `(0, r_max)`.
pub fn salt_pepper<R: Rng + ?Sized>(img: &DepthImage, p_r: f64, r_max: f64, rng: &mut R) -> Result<DepthImage> {
    if !(0.0..=1.0).contains(&p_r) {
        return Err(Error::contract("p_r must be in [0, 1]"));
    }
    if !(r_max > 0.0) {
        return Err(Error::contract("r_max must be > 0"));
    }
    let seed: u64 = rng.random();
    let mut out = img.clone();
    let sensor = *img.sensor();
    out.ranges_mut()
        .par_chunks_mut(sensor.n_azimuth)
        .enumerate()
        .for_each(|(row, ranges)| {
            let mut rng = row_rng(seed, row);
            for r in ranges.iter_mut().filter(|r| r.is_finite()) {
                if rng.random::<f64>() >= p_r {
                    let v = loop {
                        let v = rng.random::<f64>() * r_max;
                        if v > 0.0 {
                            break v;
                        }
                    };
                    *r = store_range(v, &sensor);
                }
            }
        });
    Ok(out)
}

/// Adds zero-mean Gaussian noise with standard deviation `m * r + c`.
pub fn range_noise<R: Rng + ?Sized>(img: &DepthImage, m: f64, c: f64, rng: &mut R) -> Result<DepthImage> {
    if !(m >= 0.0 && c >= 0.0) {
        return Err(Error::contract("range noise needs m >= 0 and c >= 0"));
    }
    let seed: u64 = rng.random();
    let mut out = img.clone();
    if m == 0.0 && c == 0.0 {
        return Ok(out);
    }
    let sensor = *img.sensor();
    out.ranges_mut()
        .par_chunks_mut(sensor.n_azimuth)
        .enumerate()
        .for_each(|(row, ranges)| {
            let mut rng = row_rng(seed, row);
            for r in ranges.iter_mut().filter(|r| r.is_finite()) {
                let range = *r as f64;
                let z: f64 = rng.sample(StandardNormal);
                *r = store_range(range + z * (m * range + c), &sensor);
            }
        });
    Ok(out)
}

/// What [`apply_pipeline`] did, for dataset metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub ceiling_dz_max: Option<f64>,
    pub robot_mask_index: Option<usize>,
    pub salt_pepper_p_r: Option<f64>,
    pub range_noise_m: Option<f64>,
}

fn draw<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

pub fn apply_pipeline<R: Rng + ?Sized>(img: &DepthImage, cfg: &NoisingConfig, rng: &mut R) -> Result<(DepthImage, NoiseReport)> {
    cfg.validate(img.sensor())?;
    let mut report = NoiseReport::default();
    let mut out = img.clone();

    if rng.random_bool(cfg.ceiling_crop.p) {
        let dz = draw(rng, cfg.ceiling_crop.dz_max);
        out = ceiling_crop(&out, dz)?;
        report.ceiling_dz_max = Some(dz);
    }
    if rng.random_bool(cfg.robot_mask.p) {
        let masks = cfg.masks_for(img.sensor());
        let k = rng.random_range(0..masks.len());
        out = robot_mask(&out, &masks[k])?;
        report.robot_mask_index = Some(k);
    }
    if rng.random_bool(cfg.salt_pepper.p) {
        out = salt_pepper(&out, cfg.salt_pepper.p_r, cfg.salt_pepper.r_max, rng)?;
        report.salt_pepper_p_r = Some(cfg.salt_pepper.p_r);
    }
    if rng.random_bool(cfg.range_noise.p) {
        let m = draw(rng, cfg.range_noise.m);
        out = range_noise(&out, m, cfg.range_noise.c, rng)?;
        report.range_noise_m = Some(m);
    }
    Ok((out, report))
}
