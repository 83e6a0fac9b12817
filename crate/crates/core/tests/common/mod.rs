#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use travkit_core::feature_map::{FeatureMap, GridSpec};
use travkit_core::geom::{Point3, PointCloud};
use travkit_core::scan_sim::SensorModel;
use travkit_core::traversability::FeatureDistMap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(channels: &[&str]) -> Vec<String> {
    channels.iter().map(|s| s.to_string()).collect()
}

pub fn random_map(rng: &mut ChaCha8Rng, spec: GridSpec, channels: &[&str], lo: f64, hi: f64, p_obs: f64) -> FeatureMap {
    let n = spec.cell_count();
    let values = (0..n * channels.len()).map(|_| rng.random_range(lo..hi)).collect();
    let observed = (0..n).map(|_| rng.random_bool(p_obs)).collect();
    FeatureMap::from_parts(spec, names(channels), values, observed).unwrap()
}

pub fn random_dist(rng: &mut ChaCha8Rng, spec: GridSpec, channels: &[&str], mu: (f64, f64), sigma: (f64, f64)) -> FeatureDistMap {
    let n = spec.cell_count() * channels.len();
    let m = (0..n).map(|_| rng.random_range(mu.0..mu.1)).collect();
    let s = (0..n).map(|_| rng.random_range(sigma.0..sigma.1)).collect();
    FeatureDistMap::from_parts(spec, names(channels), m, s, vec![true; spec.cell_count()]).unwrap()
}

/// Points uniformly distributed in a shell around the origin.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, r_min: f64, r_max: f64) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            let r = rng.random_range(r_min..r_max);
            let az = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let el: f64 = rng.random_range(-0.5..0.5);
            Point3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
        })
        .collect();
    PointCloud::from_points(pts).unwrap()
}

pub fn small_sensor() -> SensorModel {
    SensorModel {
        n_azimuth: 256,
        n_elevation: 32,
        elevation_min: -0.4,
        elevation_max: 0.4,
        min_range: 0.2,
        max_range: 10.0,
    }
}
