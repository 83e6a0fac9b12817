//! Feature maps to traversability maps.
//!
//! Two conventions live side by side:
//! * [`det_cost`] is a weighted *cost*, `sum_f alpha_f * f / f_crit`, clamped to
//!   `[0, 1]` (0 is best).
//! * [`prob_trav`] is a *probability of being traversable*: the product over
//!   features of `P(f < f_crit)` under independent Gaussians (1 is best).
//!
//! To compare them against [`gt_trav`] (1 = traversable), use
//! `det_cost(..).inverted()`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::{FeatureMap, GridSpec, RawGrid};
use crate::geom::Pose;

/// Features a traversability threshold may reasonably refer to (heights excluded).
pub const TRAV_FEATURES: [&str; 5] = ["step", "local_slope", "local_rough", "slope", "rough"];

/// Normalized weights are snapped to multiples of this so that uniformly
/// rescaling the raw weights yields bit-identical weights.
const WEIGHT_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureThreshold {
    pub name: String,
    pub f_crit: f64,
    #[serde(default = "unit_weight")]
    pub alpha: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct ThresholdsDoc {
    features: Vec<FeatureThreshold>,
}

/// Critical values and (normalized) weights for a chosen subset of features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdsDoc")]
pub struct TravThresholds {
    features: Vec<FeatureThreshold>,
}

impl TryFrom<ThresholdsDoc> for TravThresholds {
    type Error = Error;

    fn try_from(doc: ThresholdsDoc) -> Result<Self> {
        TravThresholds::new(doc.features)
    }
}

impl TravThresholds {
    /// Validates `f_crit > 0`, `alpha >= 0` and normalizes the weights to sum to one.
    pub fn new(mut features: Vec<FeatureThreshold>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::contract("thresholds need at least one feature"));
        }
        for f in &features {
            if !(f.f_crit > 0.0 && f.f_crit.is_finite()) {
                return Err(Error::contract(format!("f_crit of {:?} must be finite and > 0", f.name)));
            }
            if !(f.alpha >= 0.0 && f.alpha.is_finite()) {
                return Err(Error::contract(format!("alpha of {:?} must be finite and >= 0", f.name)));
            }
        }
        for (k, f) in features.iter().enumerate() {
            if features[..k].iter().any(|g| g.name == f.name) {
                return Err(Error::contract(format!("feature {:?} listed twice", f.name)));
            }
        }
        let total: f64 = features.iter().map(|f| f.alpha).sum();
        if !(total > 0.0) {
            return Err(Error::contract("at least one alpha must be positive"));
        }
        for f in &mut features {
            f.alpha = ((f.alpha / total) / WEIGHT_QUANTUM).round() * WEIGHT_QUANTUM;
        }
        // The largest weight absorbs the rounding residual so the weights sum
        // to exactly one (all partial sums are exact on this lattice).
        let largest = (0..features.len()).fold(0, |best, k| if features[k].alpha > features[best].alpha { k } else { best });
        let rest: f64 = features.iter().enumerate().filter(|(k, _)| *k != largest).map(|(_, f)| f.alpha).sum();
        features[largest].alpha = 1.0 - rest;
        Ok(Self { features })
    }

    /// Equal weights over the given `(name, f_crit)` pairs.
    pub fn uniform(pairs: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(name, f_crit)| FeatureThreshold {
                    name: name.to_string(),
                    f_crit: *f_crit,
                    alpha: 1.0,
                })
                .collect(),
        )
    }

    pub fn features(&self) -> &[FeatureThreshold] {
        &self.features
    }

    /// Copy without one feature; weights are renormalized.
    pub fn without(&self, name: &str) -> Result<Self> {
        Self::new(self.features.iter().filter(|f| f.name != name).cloned().collect())
    }

    fn resolve(&self, channels: &[String]) -> Result<Vec<usize>> {
        self.features
            .iter()
            .map(|f| {
                channels
                    .iter()
                    .position(|c| *c == f.name)
                    .ok_or_else(|| Error::contract(format!("map has no channel {:?}", f.name)))
            })
            .collect()
    }
}

/// Standard normal CDF of `(x - mu) / sigma`, via `erfc` (absolute error below 1e-15).
pub fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    0.5 * libm::erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2))
}

/// Per-cell, per-channel Gaussian feature estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistMap {
    spec: GridSpec,
    channels: Vec<String>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    observed: Vec<bool>,
    pose: Option<Pose>,
}

/// Suffix of the sigma channels in a stored distribution grid.
pub const SIGMA_SUFFIX: &str = ".sigma";

impl FeatureDistMap {
    /// Requires `sigma > 0` and finite `mu` wherever an entry is used; unobserved
    /// cells are reset to NaN. Entries with NaN `mu` in observed cells are allowed
    /// and treated as missing.
    pub fn from_parts(spec: GridSpec, channels: Vec<String>, mut mu: Vec<f64>, mut sigma: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        let n = spec.cell_count();
        if mu.len() != channels.len() * n || sigma.len() != mu.len() || observed.len() != n {
            return Err(Error::contract("distribution buffers do not match the grid"));
        }
        for c in 0..channels.len() {
            for cell in 0..n {
                let k = c * n + cell;
                if !observed[cell] {
                    mu[k] = f64::NAN;
                    sigma[k] = f64::NAN;
                } else if mu[k].is_finite() && !(sigma[k] > 0.0) {
                    return Err(Error::contract(format!(
                        "sigma must be > 0 where observed (channel {}, cell {cell})",
                        channels[c]
                    )));
                }
            }
        }
        Ok(Self {
            spec,
            channels,
            mu,
            sigma,
            observed,
            pose: None,
        })
    }

    /// Wraps a deterministic map with one standard deviation per channel.
    pub fn from_feature_map(map: &FeatureMap, sigma_per_channel: &[f64]) -> Result<Self> {
        if sigma_per_channel.len() != map.channels().len() {
            return Err(Error::contract("one sigma per channel is required"));
        }
        let n = map.spec().cell_count();
        let sigma = (0..map.values().len()).map(|k| sigma_per_channel[k / n]).collect();
        Ok(Self::from_parts(*map.spec(), map.channels().to_vec(), map.values().to_vec(), sigma, map.observed().to_vec())?.with_pose(map.pose().copied()))
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

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    #[inline]
    pub fn get(&self, c: usize, cell: usize) -> (f64, f64) {
        let k = c * self.spec.cell_count() + cell;
        (self.mu[k], self.sigma[k])
    }

    #[inline]
    pub fn is_valid(&self, c: usize, cell: usize) -> bool {
        let (mu, sigma) = self.get(c, cell);
        self.observed[cell] && mu.is_finite() && sigma > 0.0 && sigma.is_finite()
    }

    /// The mean as a plain feature map.
    pub fn mean_map(&self) -> FeatureMap {
        FeatureMap::from_parts(self.spec, self.channels.clone(), self.mu.clone(), self.observed.clone())
            .expect("consistent buffers")
            .with_pose(self.pose)
    }

    /// Stored as 2C channels: the means under the feature names, then the
    /// standard deviations under `<name>.sigma`.
    pub fn to_raw(&self) -> RawGrid {
        let mut channels = self.channels.clone();
        channels.extend(self.channels.iter().map(|c| format!("{c}{SIGMA_SUFFIX}")));
        let mut values = self.mu.clone();
        values.extend_from_slice(&self.sigma);
        RawGrid {
            spec: self.spec,
            channels,
            values,
            pose: self.pose,
        }
    }

    pub fn is_dist_grid(raw: &RawGrid) -> bool {
        let c = raw.channels.len();
        c > 0
            && c % 2 == 0
            && raw.channels[..c / 2]
                .iter()
                .zip(&raw.channels[c / 2..])
                .all(|(m, s)| *s == format!("{m}{SIGMA_SUFFIX}"))
    }

    pub fn from_raw(raw: RawGrid) -> Result<Self> {
        if !Self::is_dist_grid(&raw) {
            return Err(Error::contract("grid is not a mean/sigma distribution map"));
        }
        let half = raw.channels.len() / 2;
        let n = raw.spec.cell_count();
        let observed = (0..n)
            .map(|cell| (0..half).any(|c| raw.values[c * n + cell].is_finite()))
            .collect();
        let (mu, sigma) = raw.values.split_at(half * n);
        Ok(Self::from_parts(raw.spec, raw.channels[..half].to_vec(), mu.to_vec(), sigma.to_vec(), observed)?.with_pose(raw.pose))
    }
}

/// Per-cell traversability (or cost) in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TravMap {
    spec: GridSpec,
    values: Vec<f64>,
    observed: Vec<bool>,
    pose: Option<Pose>,
}

pub const TRAV_CHANNEL: &str = "traversability";

impl TravMap {
    pub fn from_parts(spec: GridSpec, mut values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if values.len() != spec.cell_count() || observed.len() != values.len() {
            return Err(Error::contract("traversability buffers do not match the grid"));
        }
        for (v, o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = f64::NAN;
            } else if !(0.0..=1.0).contains(v) {
                return Err(Error::contract(format!("traversability value {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            spec,
            values,
            observed,
            pose: None,
        })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Result<Self> {
        Self::from_parts(spec, vec![value; spec.cell_count()], vec![true; spec.cell_count()])
    }

    pub fn with_pose(mut self, pose: Option<Pose>) -> Self {
        self.pose = pose;
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    /// `1 - v` on observed cells; turns a clamped cost into a traversability score.
    pub fn inverted(&self) -> TravMap {
        let values = self.values.iter().map(|v| 1.0 - v).collect();
        TravMap {
            spec: self.spec,
            values,
            observed: self.observed.clone(),
            pose: self.pose,
        }
    }

    pub fn to_raw(&self) -> RawGrid {
        RawGrid {
            spec: self.spec,
            channels: vec![TRAV_CHANNEL.to_string()],
            values: self.values.clone(),
            pose: self.pose,
        }
    }

    pub fn from_raw(raw: RawGrid) -> Result<Self> {
        if raw.channels != [TRAV_CHANNEL] {
            return Err(Error::contract("grid is not a single-channel traversability map"));
        }
        let observed = raw.observed();
        Ok(Self::from_parts(raw.spec, raw.values, observed)?.with_pose(raw.pose))
    }
}

/// Unclamped weighted cost per cell; NaN where any included feature is missing.
pub fn det_cost_raw(map: &FeatureMap, th: &TravThresholds) -> Result<Vec<f64>> {
    let idx = th.resolve(map.channels())?;
    let n = map.spec().cell_count();
    Ok((0..n)
        .into_par_iter()
        .map(|cell| {
            let mut cost = 0.0;
            for (f, &c) in th.features().iter().zip(&idx) {
                if !map.is_valid(c, cell) {
                    return f64::NAN;
                }
                cost += f.alpha * (map.get(c, cell) / f.f_crit);
            }
            cost
        })
        .collect())
}

/// Weighted feature cost clamped to `[0, 1]`.
pub fn det_cost(map: &FeatureMap, th: &TravThresholds) -> Result<TravMap> {
    let raw = det_cost_raw(map, th)?;
    let observed: Vec<bool> = raw.iter().map(|v| v.is_finite()).collect();
    let values = raw.into_iter().map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { v }).collect();
    Ok(TravMap::from_parts(*map.spec(), values, observed)?.with_pose(map.pose().copied()))
}

/// Probability that every included feature lies below its critical value.
pub fn prob_trav(dist: &FeatureDistMap, th: &TravThresholds) -> Result<TravMap> {
    let idx = th.resolve(dist.channels())?;
    let n = dist.spec().cell_count();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let mut p = 1.0;
            for (f, &c) in th.features().iter().zip(&idx) {
                if !dist.is_valid(c, cell) {
                    return f64::NAN;
                }
                let (mu, sigma) = dist.get(c, cell);
                p *= gaussian_cdf(f.f_crit, mu, sigma);
            }
            p
        })
        .collect();
    let observed = values.iter().map(|v| v.is_finite()).collect();
    Ok(TravMap::from_parts(*dist.spec(), values, observed)?.with_pose(dist.pose().copied()))
}

/// 1 where every included feature is strictly below its critical value, else 0.
pub fn gt_trav(map: &FeatureMap, th: &TravThresholds) -> Result<TravMap> {
    let idx = th.resolve(map.channels())?;
    let n = map.spec().cell_count();
    let mut values = vec![f64::NAN; n];
    let mut observed = vec![false; n];
    for cell in 0..n {
        if idx.iter().all(|&c| map.is_valid(c, cell)) {
            observed[cell] = true;
            let ok = th.features().iter().zip(&idx).all(|(f, &c)| map.get(c, cell) < f.f_crit);
            values[cell] = if ok { 1.0 } else { 0.0 };
        }
    }
    Ok(TravMap::from_parts(*map.spec(), values, observed)?.with_pose(map.pose().copied()))
}
