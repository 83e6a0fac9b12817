//! Temporal fusion of Gaussian feature maps with independent per-cell,
//! per-channel 1-D Kalman measurement updates:
//!
//! ```text
//! mu'    = (mu_hat * sigma^2 + mu * sigma_hat^2) / (sigma_hat^2 + sigma^2)
//! sigma' = sqrt(sigma_hat^2 * sigma^2 / (sigma_hat^2 + sigma^2))
//! ```
//!
//! The state grid is ego-attached; callers shift it by whole cells for ego
//! motion before each update ([`FusedState::shift`]).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature_map::{GridSpec, RawGrid};
use crate::geom::Pose;
use crate::traversability::FeatureDistMap;

#[derive(Debug, Clone, PartialEq)]
pub struct FusedState {
    spec: GridSpec,
    channels: Vec<String>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    update_count: Vec<u32>,
    /// Variance added to every valid entry before each update. Zero is a pure
    /// measurement update.
    pub variance_inflation: f64,
    pose: Option<Pose>,
}

/// Fuses one entry. Returns the posterior `(mu, sigma)`.
#[inline]
pub fn fuse_entry(mu_hat: f64, sigma_hat: f64, mu: f64, sigma: f64) -> (f64, f64) {
    let vh = sigma_hat * sigma_hat;
    let vm = sigma * sigma;
    let denom = vh + vm;
    ((mu_hat * vm + mu * vh) / denom, (vh * vm / denom).sqrt())
}

impl FusedState {
    /// Empty state: nothing observed yet.
    pub fn new(spec: GridSpec, channels: Vec<String>) -> Self {
        let n = spec.cell_count() * channels.len();
        Self {
            spec,
            mu: vec![f64::NAN; n],
            sigma: vec![f64::NAN; n],
            update_count: vec![0; spec.cell_count()],
            channels,
            variance_inflation: 0.0,
            pose: None,
        }
    }

    pub fn from_measurement(meas: &FeatureDistMap) -> Self {
        let mut state = Self::new(*meas.spec(), meas.channels().to_vec());
        state.update(meas).expect("same grid");
        state
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn update_count(&self) -> &[u32] {
        &self.update_count
    }

    pub fn pose(&self) -> Option<&Pose> {
        self.pose.as_ref()
    }

    #[inline]
    fn valid(&self, k: usize) -> bool {
        self.mu[k].is_finite() && self.sigma[k] > 0.0 && self.sigma[k].is_finite()
    }

    /// Applies one measurement in place (single writer).
    pub fn update(&mut self, meas: &FeatureDistMap) -> Result<()> {
        if meas.spec().width != self.spec.width || meas.spec().height != self.spec.height || meas.spec().resolution != self.spec.resolution {
            return Err(Error::contract("measurement grid differs from the fused state grid"));
        }
        if meas.channels() != self.channels.as_slice() {
            return Err(Error::contract("measurement channels differ from the fused state"));
        }
        let n = self.spec.cell_count();
        let q = self.variance_inflation;
        let mu_m = meas.mu();
        let sigma_m = meas.sigma();
        let observed = meas.observed();
        let updates: Vec<Option<(f64, f64)>> = (0..self.mu.len())
            .into_par_iter()
            .map(|k| {
                let cell = k % n;
                let m_ok = observed[cell] && mu_m[k].is_finite() && sigma_m[k] > 0.0 && sigma_m[k].is_finite();
                if !m_ok {
                    return None;
                }
                if self.valid(k) {
                    let sh = (self.sigma[k] * self.sigma[k] + q).sqrt();
                    Some(fuse_entry(self.mu[k], sh, mu_m[k], sigma_m[k]))
                } else {
                    Some((mu_m[k], sigma_m[k]))
                }
            })
            .collect();
        let mut touched = vec![false; n];
        for (k, u) in updates.into_iter().enumerate() {
            if let Some((m, s)) = u {
                self.mu[k] = m;
                self.sigma[k] = s;
                touched[k % n] = true;
            } else if q > 0.0 && self.valid(k) {
                self.sigma[k] = (self.sigma[k] * self.sigma[k] + q).sqrt();
            }
        }
        for (count, t) in self.update_count.iter_mut().zip(touched) {
            *count += t as u32;
        }
        if meas.pose().is_some() {
            self.pose = meas.pose().copied();
        }
        Ok(())
    }

    /// Re-centers the grid: the new cell `(i, j)` holds the old `(i + di, j + dj)`.
    pub fn shift(&mut self, di: isize, dj: isize) {
        let spec = self.spec;
        let n = spec.cell_count();
        let src = |cell: usize| -> Option<usize> {
            let (i, j) = spec.coords(cell);
            let (si, sj) = (i as isize + di, j as isize + dj);
            (si >= 0 && sj >= 0 && (si as usize) < spec.width && (sj as usize) < spec.height).then(|| spec.index(si as usize, sj as usize))
        };
        let mut mu = vec![f64::NAN; self.mu.len()];
        let mut sigma = vec![f64::NAN; self.sigma.len()];
        let mut count = vec![0; n];
        for cell in 0..n {
            if let Some(s) = src(cell) {
                count[cell] = self.update_count[s];
                for c in 0..self.channels.len() {
                    mu[c * n + cell] = self.mu[c * n + s];
                    sigma[c * n + cell] = self.sigma[c * n + s];
                }
            }
        }
        self.mu = mu;
        self.sigma = sigma;
        self.update_count = count;
    }

    /// Shift for a planar ego translation in meters, rounded to the nearest cell.
    pub fn shift_by(&mut self, dx: f64, dy: f64) {
        let r = self.spec.resolution;
        self.shift((dx / r).round() as isize, (dy / r).round() as isize);
    }

    pub fn to_dist(&self) -> FeatureDistMap {
        let n = self.spec.cell_count();
        let observed: Vec<bool> = (0..n).map(|cell| (0..self.channels.len()).any(|c| self.valid(c * n + cell))).collect();
        FeatureDistMap::from_parts(self.spec, self.channels.clone(), self.mu.clone(), self.sigma.clone(), observed)
            .expect("fused state keeps sigma > 0")
            .with_pose(self.pose)
    }

    /// 2C-channel grid: means then standard deviations.
    pub fn to_raw(&self) -> RawGrid {
        self.to_dist().to_raw()
    }

    /// Restores a state from a stored distribution grid; update counts restart at 1.
    pub fn from_raw(raw: RawGrid) -> Result<Self> {
        let dist = FeatureDistMap::from_raw(raw)?;
        Ok(Self::from_measurement(&dist))
    }
}

/// Pure form of [`FusedState::update`].
pub fn kalman_update(state: &FusedState, meas: &FeatureDistMap) -> Result<FusedState> {
    let mut next = state.clone();
    next.update(meas)?;
    Ok(next)
}
