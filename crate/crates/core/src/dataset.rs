//! Generation of (noised scan, feature label) training pairs from a
//! ground-truth cloud and its global feature map.
//!
//! Layout of a generated directory:
//!
//! ```text
//! manifest.json
//! pair_000000/scan.ply      noised scan, sensor frame
//! pair_000000/label.unrg    label crop in the pose frame
//! pair_000000/meta.json
//! ```
//!
//! Pair `i` is drawn from its own seed, derived from the master seed and `i`
//! only, so any subset of pairs can be regenerated independently.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::{crop_and_align, freespace_cells, write_grid, FeatureMap, FreespaceRule, GridSpec};
use crate::geom::{write_ply, PointCloud, Pose};
use crate::noising::{apply_pipeline, NoiseReport, NoisingConfig};
use crate::scan_sim::{depth_to_cloud, simulate_scan, CloudFrame, DepthImage, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRule {
    pub freespace: FreespaceRule,
    /// Sensor height above the terrain of the sampled cell, meters.
    pub sensor_height: f64,
}

impl Default for PoseRule {
    fn default() -> Self {
        Self {
            freespace: FreespaceRule::default(),
            sensor_height: 0.7,
        }
    }
}

/// Axis-aligned world rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_samples: usize,
    pub grid: GridSpec,
    pub sensor: SensorModel,
    pub noising: NoisingConfig,
    #[serde(default)]
    pub pose_rule: PoseRule,
    /// Poses inside any of these regions go to the test split.
    #[serde(default)]
    pub test_regions: Vec<Region>,
    pub rng_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_samples: 1,
            grid: GridSpec::default(),
            sensor: SensorModel::default(),
            noising: NoisingConfig::default(),
            pose_rule: PoseRule::default(),
            test_regions: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::contract("n_samples must be >= 1"));
        }
        if !(self.pose_rule.sensor_height > 0.0 && self.pose_rule.sensor_height.is_finite()) {
            return Err(Error::contract("sensor_height must be > 0"));
        }
        self.grid.validate()?;
        self.sensor.validate()?;
        self.noising.validate(&self.sensor)
    }

    /// Seed of pair `index`.
    pub fn pair_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index as u64);
        rng.next_u64()
    }

    pub fn split_of(&self, pose: &Pose) -> &'static str {
        let [x, y, _] = pose.translation();
        if self.test_regions.iter().any(|r| r.contains(x, y)) {
            "test"
        } else {
            "train"
        }
    }
}

/// Uniform sampler over the free cells of a global map.
#[derive(Debug, Clone)]
pub struct PoseSampler {
    spec: GridSpec,
    free: Vec<usize>,
    terrain: Vec<f64>,
    sensor_height: f64,
}

impl PoseSampler {
    pub fn new(global: &FeatureMap, rule: &PoseRule) -> Result<Self> {
        let t = global.require_channel("terrain")?;
        let free: Vec<usize> = freespace_cells(global, &rule.freespace)?
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(k, _)| k)
            .collect();
        if free.is_empty() {
            return Err(Error::Generation("no free cells to place a pose in".into()));
        }
        Ok(Self {
            spec: *global.spec(),
            terrain: free.iter().map(|&k| global.get(t, k)).collect(),
            free,
            sensor_height: rule.sensor_height,
        })
    }

    pub fn free_cells(&self) -> &[usize] {
        &self.free
    }

    /// Cell center at terrain plus sensor height, yaw uniform in `[0, 2pi)`, level.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let k = rng.random_range(0..self.free.len());
        let (i, j) = self.spec.coords(self.free[k]);
        let (x, y) = self.spec.cell_center(i, j);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        Pose::from_ypr([x, y, self.terrain[k] + self.sensor_height], yaw, 0.0, 0.0)
    }
}

pub fn sample_pose<R: Rng + ?Sized>(global: &FeatureMap, rule: &PoseRule, rng: &mut R) -> Result<Pose> {
    Ok(PoseSampler::new(global, rule)?.sample(rng))
}

#[derive(Debug, Clone)]
pub struct Pair {
    pub clean: DepthImage,
    pub noised: DepthImage,
    /// Noised returns in the sensor frame.
    pub input: PointCloud,
    pub label: FeatureMap,
    pub report: NoiseReport,
}

pub fn make_pair<R: Rng + ?Sized>(gt_cloud: &PointCloud, global: &FeatureMap, pose: &Pose, spec: &DatasetSpec, rng: &mut R) -> Result<Pair> {
    let clean = simulate_scan(gt_cloud, pose, &spec.sensor)?;
    let (noised, report) = apply_pipeline(&clean, &spec.noising, rng)?;
    let input = depth_to_cloud(&noised, CloudFrame::Sensor);
    let label = crop_and_align(global, pose, &spec.grid)?;
    Ok(Pair {
        clean,
        noised,
        input,
        label,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPaths {
    pub scan: String,
    pub label: String,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: String,
    pub index: usize,
    pub pose: Pose,
    pub seed: u64,
    pub split: String,
    pub paths: PairPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub id: String,
    pub pose: Pose,
    pub seed: u64,
    pub split: String,
    pub noise: NoiseReport,
    pub scan_points: usize,
    pub label_observed_cells: usize,
    pub sensor: SensorModel,
    pub grid: GridSpec,
    pub noising: NoisingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_spec: DatasetSpec,
    pub pairs: Vec<PairEntry>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(dir.as_ref().join(MANIFEST))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

pub const MANIFEST: &str = "manifest.json";

pub fn pair_id(index: usize) -> String {
    format!("pair_{index:06}")
}

/// Generates and writes pair `index` under `out`.
pub fn generate_pair(gt_cloud: &PointCloud, global: &FeatureMap, sampler: &PoseSampler, spec: &DatasetSpec, index: usize, out: &Path) -> Result<PairEntry> {
    let seed = spec.pair_seed(index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = sampler.sample(&mut rng);
    let pair = make_pair(gt_cloud, global, &pose, spec, &mut rng)?;
    let id = pair_id(index);
    let split = spec.split_of(&pose).to_string();
    let dir = out.join(&id);
    fs::create_dir_all(&dir)?;

    let mut scan = Vec::new();
    write_ply(&pair.input, &mut scan)?;
    fs::write(dir.join("scan.ply"), scan)?;
    let mut label = Vec::new();
    write_grid(&pair.label.to_raw(), &mut label)?;
    fs::write(dir.join("label.unrg"), label)?;
    let meta = PairMeta {
        id: id.clone(),
        pose,
        seed,
        split: split.clone(),
        noise: pair.report,
        scan_points: pair.input.len(),
        label_observed_cells: pair.label.observed_count(),
        sensor: spec.sensor,
        grid: spec.grid,
        noising: spec.noising.clone(),
    };
    fs::write(dir.join("meta.json"), to_json(&meta)?)?;

    Ok(PairEntry {
        paths: PairPaths {
            scan: format!("{id}/scan.ply"),
            label: format!("{id}/label.unrg"),
            meta: format!("{id}/meta.json"),
        },
        id,
        index,
        pose,
        seed,
        split,
    })
}

/// Writes `spec.n_samples` pairs and the manifest into `out`. Pairs are
/// generated in parallel; output bytes do not depend on the thread count.
pub fn generate(gt_cloud: &PointCloud, global: &FeatureMap, spec: &DatasetSpec, out: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out: PathBuf = out.as_ref().to_path_buf();
    fs::create_dir_all(&out)?;
    let sampler = PoseSampler::new(global, &spec.pose_rule)?;
    let pairs = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| generate_pair(gt_cloud, global, &sampler, spec, i, &out))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        dataset_spec: spec.clone(),
        pairs,
    };
    fs::write(out.join(MANIFEST), to_json(&manifest)?)?;
    Ok(manifest)
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
