//! Shared fixtures for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use travkit_core::dataset::{DatasetSpec, PoseSampler};
use travkit_core::feature_map::canonical_channels;
use travkit_core::scene::SceneSpec;
use travkit_core::{FeatureDistMap, FeatureMap, FeatureParams, GridSpec, PointCloud, Pose, TravThresholds};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Room scene with its global map and one sampled free pose.
pub struct RoomFixture {
    pub cloud: PointCloud,
    pub global: FeatureMap,
    pub spec: DatasetSpec,
    pub pose: Pose,
}

impl RoomFixture {
    pub fn new() -> Self {
        let scene = SceneSpec::room();
        let cloud = scene.build().expect("room scene");
        let global = FeatureMap::from_cloud(&cloud, scene.global_grid(0.05, 0.5), &FeatureParams::default()).expect("global map");
        let spec = DatasetSpec::default();
        let pose = PoseSampler::new(&global, &spec.pose_rule).expect("free cells").sample(&mut rng(0));
        Self { cloud, global, spec, pose }
    }
}

impl Default for RoomFixture {
    fn default() -> Self {
        Self::new()
    }
}

/// Dense random distribution map over the canonical channels.
pub fn random_dist(spec: GridSpec, seed: u64) -> FeatureDistMap {
    let mut r = rng(seed);
    let channels = canonical_channels();
    let len = channels.len() * spec.cell_count();
    let mu = (0..len).map(|_| r.random_range(0.0..0.5)).collect();
    let sigma = (0..len).map(|_| r.random_range(0.01..0.2)).collect();
    FeatureDistMap::from_parts(spec, channels, mu, sigma, vec![true; spec.cell_count()]).expect("consistent shapes")
}

pub fn thresholds() -> TravThresholds {
    let channels = canonical_channels();
    TravThresholds::uniform(&channels.iter().map(|c| (c.as_str(), 0.3)).collect::<Vec<_>>()).expect("valid thresholds")
}
