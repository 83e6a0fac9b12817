//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use travkit_core::dataset::{make_pair, DatasetSpec, PoseSampler};
use travkit_core::eval::{masked_nll, rmse_triptych, PartitionScore, RmseTriptych};
use travkit_core::feature_map::{canonical_channels, compute_features, rasterize, FeatureMap, FeatureParams, GridSpec};
use travkit_core::fusion::FusedState;
use travkit_core::geom::{transform_cloud, Direction, Point3, PointCloud, Pose};
use travkit_core::inpaint::{fill_constant, fill_diffusion, oracle_constant, DiffusionParams};
use travkit_core::noising::{apply_pipeline, range_noise, salt_pepper, NoisingConfig};
use travkit_core::scan_sim::{depth_to_cloud, simulate_scan, CloudFrame, DepthImage, SensorModel};
use travkit_core::scan_sim::write_depth_image;
use travkit_core::scene::{BoxSpec, SceneSpec};
use travkit_core::traversability::{det_cost_raw, gt_trav, prob_trav, FeatureDistMap, FeatureThreshold, TravThresholds};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn dist_map(spec: GridSpec, channels: &[&str], mu: Vec<f64>, sigma: Vec<f64>) -> FeatureDistMap {
    let n = spec.cell_count();
    FeatureDistMap::from_parts(spec, names(channels), mu, sigma, vec![true; n]).unwrap()
}

// 1. Kalman fusion.
fn fusion_suite() -> Outcome {
    let spec = GridSpec::ego_centered(3, 2, 0.1);
    let n = spec.cell_count();
    let mut state = FusedState::from_measurement(&dist_map(spec, &["a"], vec![0.0; n], vec![1.0; n]));
    state.update(&dist_map(spec, &["a"], vec![2.0; n], vec![1.0; n])).unwrap();
    let sym_err = state
        .mu()
        .iter()
        .map(|m| (m - 1.0).abs())
        .chain(state.sigma().iter().map(|s| (s - 0.5f64.sqrt()).abs()))
        .fold(0.0, f64::max);
    ensure!(sym_err <= 1e-12, "symmetric case off by {sym_err:e}");

    let mut r = rng(1);
    let (mut batch_err, mut perm_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let meas: Vec<FeatureDistMap> = (0..5)
            .map(|_| {
                let mu = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
                let sigma = (0..n).map(|_| r.random_range(0.05..3.0)).collect();
                dist_map(spec, &["a"], mu, sigma)
            })
            .collect();
        let run = |order: &[usize]| {
            let mut s = FusedState::new(spec, names(&["a"]));
            let mut prev: Option<Vec<f64>> = None;
            for &k in order {
                s.update(&meas[k]).unwrap();
                if let Some(p) = &prev {
                    for (new, old) in s.sigma().iter().zip(p) {
                        assert!(new < old, "sigma did not decrease");
                    }
                }
                prev = Some(s.sigma().to_vec());
            }
            s
        };
        let seq = run(&[0, 1, 2, 3, 4]);
        for cell in 0..n {
            let precision: f64 = meas.iter().map(|m| m.sigma()[cell].powi(-2)).sum();
            let mean = meas.iter().map(|m| m.mu()[cell] * m.sigma()[cell].powi(-2)).sum::<f64>() / precision;
            batch_err = batch_err.max((seq.mu()[cell] - mean).abs()).max((seq.sigma()[cell] - precision.powf(-0.5)).abs());
        }
        let mut order = [0usize, 1, 2, 3, 4];
        for k in (1..5).rev() {
            order.swap(k, r.random_range(0..=k));
        }
        let perm = run(&order);
        for (a, b) in seq.mu().iter().zip(perm.mu()).chain(seq.sigma().iter().zip(perm.sigma())) {
            perm_err = perm_err.max((a - b).abs());
        }
    }
    ensure!(batch_err <= 1e-9, "sequential vs batch off by {batch_err:e}");
    ensure!(perm_err <= 1e-9, "permutation changed result by {perm_err:e}");
    Ok(format!("symmetric err {sym_err:.1e}, batch err {batch_err:.1e}, permutation err {perm_err:.1e}, sigma strictly decreasing"))
}

// 2. Probabilistic traversability.
fn prob_trav_suite() -> Outcome {
    let one = GridSpec::ego_centered(1, 1, 0.1);
    let feats = ["f0", "f1", "f2", "f3", "f4"];
    for k in 1..=5 {
        let crit: Vec<(&str, f64)> = feats[..k].iter().enumerate().map(|(i, f)| (*f, 0.1 + 0.2 * i as f64)).collect();
        let th = TravThresholds::uniform(&crit).unwrap();
        let mu: Vec<f64> = crit.iter().map(|c| c.1).collect();
        let p = prob_trav(&dist_map(one, &feats[..k], mu, vec![0.37; k]), &th).unwrap().values()[0];
        ensure!((p - 0.5f64.powi(k as i32)).abs() <= 1e-9, "{k} features at critical: {p}");
    }

    let spec = GridSpec::ego_centered(100, 100, 0.1);
    let n = spec.cell_count();
    let mut r = rng(2);
    let chans = ["step", "slope", "rough"];
    let mu: Vec<f64> = (0..3 * n).map(|_| r.random_range(0.0..1.0)).collect();
    let sigma: Vec<f64> = (0..3 * n).map(|_| r.random_range(0.01..0.5)).collect();
    let th = TravThresholds::uniform(&[("step", 0.3), ("slope", 0.5), ("rough", 0.7)]).unwrap();
    let base = prob_trav(&dist_map(spec, &chans, mu.clone(), sigma.clone()), &th).unwrap();
    let raised: Vec<f64> = mu.iter().map(|m| m + r.random_range(0.0..0.3)).collect();
    let higher_mu = prob_trav(&dist_map(spec, &chans, raised, sigma.clone()), &th).unwrap();
    let looser = TravThresholds::uniform(&[("step", 0.35), ("slope", 0.5), ("rough", 0.9)]).unwrap();
    let higher_crit = prob_trav(&dist_map(spec, &chans, mu.clone(), sigma.clone()), &looser).unwrap();
    for k in 0..n {
        ensure!(higher_mu.values()[k] <= base.values()[k], "raising mu raised traversability at cell {k}");
        ensure!(higher_crit.values()[k] >= base.values()[k], "raising f_crit lowered traversability at cell {k}");
    }

    let sharp = prob_trav(&dist_map(spec, &chans, mu.clone(), vec![1e-6; 3 * n]), &th).unwrap();
    let means = FeatureMap::from_parts(spec, names(&chans), mu.clone(), vec![true; n]).unwrap();
    let truth = gt_trav(&means, &th).unwrap();
    let crit = [0.3, 0.5, 0.7];
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for k in 0..n {
        if (0..3).all(|c| (mu[c * n + k] - crit[c]).abs() > 1e-2) {
            worst = worst.max((sharp.values()[k] - truth.values()[k]).abs());
            checked += 1;
        }
    }
    ensure!(worst < 1e-3, "sigma=1e-6 limit off by {worst:e}");
    Ok(format!("0.5^k for k=1..5, monotone on {n} cells, sharp-limit err {worst:.1e} over {checked} off-boundary cells"))
}

// 3. Deterministic cost.
fn det_cost_suite() -> Outcome {
    let one = GridSpec::ego_centered(1, 1, 0.1);
    let mut r = rng(3);
    for k in 1..=7 {
        let crit: Vec<f64> = (0..k).map(|_| r.random_range(0.01..2.0)).collect();
        let th = TravThresholds::new(
            (0..k)
                .map(|i| FeatureThreshold {
                    name: format!("f{i}"),
                    f_crit: crit[i],
                    alpha: r.random_range(0.1..3.0),
                })
                .collect(),
        )
        .unwrap();
        let chans: Vec<String> = (0..k).map(|i| format!("f{i}")).collect();
        let map = FeatureMap::from_parts(one, chans, crit.clone(), vec![true]).unwrap();
        let cost = det_cost_raw(&map, &th).unwrap()[0];
        ensure!(cost == 1.0, "{k} features at critical gave {cost:e}");
    }

    let spec = GridSpec::ego_centered(50, 50, 0.1);
    let chans = ["step", "slope", "rough", "local_slope"];
    let map = FeatureMap::from_parts(spec, names(&chans), (0..4 * 2500).map(|_| r.random_range(0.0..1.0)).collect(), vec![true; 2500]).unwrap();
    let mut trials = 0;
    for _ in 0..200 {
        let alphas: Vec<f64> = (0..4).map(|_| r.random_range(0.0..5.0)).collect();
        let crit: Vec<f64> = (0..4).map(|_| r.random_range(0.05..1.0)).collect();
        let make = |s: f64| {
            TravThresholds::new(
                chans
                    .iter()
                    .enumerate()
                    .map(|(i, c)| FeatureThreshold {
                        name: c.to_string(),
                        f_crit: crit[i],
                        alpha: alphas[i] * s,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let reference = det_cost_raw(&map, &make(1.0)).unwrap();
        for s in [1e-6, 0.37, 3.0, 1e4, 2f64.sqrt()] {
            let scaled = det_cost_raw(&map, &make(s)).unwrap();
            ensure!(
                reference.iter().zip(&scaled).all(|(a, b)| a.to_bits() == b.to_bits()),
                "scaling alpha by {s} changed the cost map"
            );
            trials += 1;
        }
    }
    Ok(format!("cost at critical == 1.0 for k=1..7, alpha scaling bit-exact in {trials} trials"))
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

// 4. Feature oracles.
fn feature_suite() -> Outcome {
    let spec = GridSpec::with_origin(40, 40, 0.05, [0.0, 0.0]);
    let params = FeatureParams::default();
    let lattice = |z: &dyn Fn(f64) -> f64| {
        let mut pts = Vec::new();
        for a in 0..160 {
            for b in 0..160 {
                let (x, y) = ((a as f64 + 0.5) * 0.0125, (b as f64 + 0.5) * 0.0125);
                pts.push(Point3::new(x, y, z(x)));
            }
        }
        PointCloud::from_points(pts).unwrap()
    };
    let flat = FeatureMap::from_cloud(&lattice(&|_| 0.0), spec, &params).unwrap();
    let mut flat_worst = 0.0f64;
    for name in ["step", "local_slope", "local_rough", "slope", "rough"] {
        let c = flat.require_channel(name).unwrap();
        for cell in 0..spec.cell_count() {
            if flat.is_valid(c, cell) {
                flat_worst = flat_worst.max(flat.get(c, cell).abs());
            }
        }
    }
    ensure!(flat_worst < 1e-9, "flat floor feature reached {flat_worst:e}");

    let plane = FeatureMap::from_cloud(&lattice(&|x| 0.1 * x), spec, &params).unwrap();
    let slope = plane.require_channel("slope").unwrap();
    let reach = (params.footprint_radius / spec.resolution).ceil() as usize;
    let mut plane_worst = 0.0f64;
    for i in reach..spec.width - reach {
        for j in reach..spec.height - reach {
            plane_worst = plane_worst.max((plane.get(slope, spec.index(i, j)) - 0.1f64.atan()).abs());
        }
    }
    ensure!(plane_worst <= 1e-6, "plane slope off by {plane_worst:e}");

    let grid = GridSpec::with_origin(40, 25, 0.1, [-2.0, -1.0]);
    let mut r = rng(4);
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); grid.cell_count()];
    let mut pts = Vec::new();
    for i in 0..grid.width {
        for j in 0..grid.height {
            let (cx, cy) = grid.cell_center(i, j);
            let count = r.random_range(1..60);
            for _ in 0..count {
                let z = r.random_range(-1.0..1.0f64).powi(3) * 2.0;
                pts.push(Point3::new(cx + r.random_range(-0.04..0.04), cy + r.random_range(-0.04..0.04), z));
                per_cell[grid.index(i, j)].push(z);
            }
        }
    }
    let map = compute_features(&rasterize(&PointCloud::from_points(pts).unwrap(), &grid).unwrap(), &params).unwrap();
    let (t, e, s) = (map.require_channel("terrain").unwrap(), map.require_channel("elevation").unwrap(), map.require_channel("step").unwrap());
    for (cell, zs) in per_cell.iter_mut().enumerate() {
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let terrain = percentile(zs, 1.0);
        let kept: Vec<f64> = zs.iter().copied().filter(|z| *z <= terrain + params.overhang_clearance).collect();
        let elevation = if kept.is_empty() { terrain } else { percentile(&kept, 99.0).max(terrain) };
        ensure!(map.get(t, cell) == terrain, "terrain mismatch in cell {cell}");
        ensure!(map.get(e, cell) == elevation, "elevation mismatch in cell {cell}");
        ensure!(map.get(s, cell) == elevation - terrain, "step mismatch in cell {cell}");
    }
    Ok(format!("flat max {flat_worst:.1e}, plane slope err {plane_worst:.1e}, percentiles exact on {} cells", grid.cell_count()))
}

fn constant_image(sensor: SensorModel, r: f32) -> DepthImage {
    DepthImage::from_ranges(sensor, Pose::identity(), vec![r; sensor.cell_count()]).unwrap()
}

fn undi_bytes(img: &DepthImage) -> Vec<u8> {
    let mut buf = Vec::new();
    write_depth_image(img, &mut buf).unwrap();
    buf
}

// 5. Noising statistics.
fn noising_suite() -> Outcome {
    let sensor = SensorModel {
        n_azimuth: 1000,
        n_elevation: 1000,
        elevation_min: -0.4,
        elevation_max: 0.4,
        min_range: 0.0,
        max_range: 10.0,
    };
    let cfg = NoisingConfig::default();
    let img = constant_image(sensor, 5.0);
    let sp = salt_pepper(&img, cfg.salt_pepper.p_r, cfg.salt_pepper.r_max, &mut rng(5)).unwrap();
    let replaced = sp.ranges().iter().filter(|r| r.to_bits() != 5.0f32.to_bits()).count() as f64;
    let n = 1e6;
    let q = 1.0 - cfg.salt_pepper.p_r;
    let bound = 3.0 * (n * q * (1.0 - q)).sqrt();
    ensure!((replaced - n * q).abs() <= bound, "replaced {replaced}, expected {} +- {bound:.1}", n * q);

    let noisy = range_noise(&img, 0.01, 0.0, &mut rng(6)).unwrap();
    let vals: Vec<f64> = noisy.ranges().iter().map(|r| *r as f64).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let rel = (std / 0.05 - 1.0).abs();
    ensure!(rel < 0.01, "range noise std {std} vs 0.05");

    let scene = SceneSpec::room().build().unwrap();
    let scan = simulate_scan(&scene, &Pose::from_ypr([0.3, -0.5, 0.7], 0.8, 0.0, 0.0), &SensorModel::default()).unwrap();
    let a = apply_pipeline(&scan, &cfg, &mut rng(7)).unwrap().0;
    let b = apply_pipeline(&scan, &cfg, &mut rng(7)).unwrap().0;
    let c = apply_pipeline(&scan, &cfg, &mut rng(8)).unwrap().0;
    ensure!(undi_bytes(&a) == undi_bytes(&b), "same seed gave different images");
    ensure!(undi_bytes(&a) != undi_bytes(&c), "different seeds gave identical images");
    Ok(format!("replacement count {replaced} (expected {:.0} +- {bound:.1}), std rel err {:.3}%, seeded pipeline byte-identical", n * q, rel * 100.0))
}

// 6. Projection round trip.
fn projection_suite() -> Outcome {
    let sensor = SensorModel::default();
    let pose = Pose::from_ypr([1.0, -2.0, 0.5], 0.7, 0.02, -0.01);
    let mut r = rng(9);
    let local: Vec<Point3> = (0..100_000)
        .map(|_| {
            let range = r.random_range(0.3..9.9);
            let az = r.random_range(-PI..PI);
            let el: f64 = r.random_range(-0.39..0.39);
            Point3::new(range * el.cos() * az.cos(), range * el.cos() * az.sin(), range * el.sin())
        })
        .collect();
    let world = PointCloud::from_points(local.iter().map(|p| pose.sensor_to_world(*p)).collect()).unwrap();
    let first = simulate_scan(&world, &pose, &sensor).unwrap();
    let second = simulate_scan(&depth_to_cloud(&first, CloudFrame::World), &pose, &sensor).unwrap();
    let third = simulate_scan(&depth_to_cloud(&second, CloudFrame::World), &pose, &sensor).unwrap();
    let bits = |img: &DepthImage| img.ranges().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&first) == bits(&second), "second scan differs from the first");
    ensure!(bits(&second) == bits(&third), "third scan differs from the second");

    // Independent binning of the original points.
    let (az_step, el_step) = (2.0 * PI / sensor.n_azimuth as f64, (sensor.elevation_max - sensor.elevation_min) / sensor.n_elevation as f64);
    let mut nearest: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
    for p in &local {
        let range = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
        let az = p.y.atan2(p.x);
        let el = p.z.atan2(p.x.hypot(p.y));
        let col = ((az / az_step + 0.5).floor() as i64).rem_euclid(sensor.n_azimuth as i64) as usize;
        let row = (((el - sensor.elevation_min) / el_step).floor() as usize).min(sensor.n_elevation - 1);
        let slot = nearest.entry(row * sensor.n_azimuth + col).or_insert((f64::INFINITY, 0.0, 0.0));
        if range < slot.0 {
            *slot = (range, az, el);
        }
    }
    ensure!(nearest.len() == first.returns(), "oracle found {} cells, scan has {}", nearest.len(), first.returns());
    let (mut ang, mut rng_err) = (0.0f64, 0.0f64);
    for (&cell, &(range, az, el)) in &nearest {
        let (row, col) = (cell / sensor.n_azimuth, cell % sensor.n_azimuth);
        let stored = first.get(row, col).ok_or_else(|| format!("cell {cell} has no return"))? as f64;
        let q = first.point_at(row, col).unwrap();
        let (qaz, qel) = (q.y.atan2(q.x), q.z.atan2(q.x.hypot(q.y)));
        let daz = (az - qaz + PI).rem_euclid(2.0 * PI) - PI;
        ang = ang.max(daz.abs() / (az_step / 2.0)).max((el - qel).abs() / (el_step / 2.0));
        rng_err = rng_err.max((stored - range).abs());
    }
    ensure!(ang <= 1.0 + 1e-9, "angular error {ang} half-bins");
    ensure!(rng_err <= 1e-6, "range error {rng_err:e}");
    Ok(format!("{} returns, scans bit-identical, max angular err {ang:.4} half-bins, max range err {rng_err:.1e} m", first.returns()))
}

fn random_feature_map(r: &mut ChaCha8Rng, spec: GridSpec, channels: &[&str], p_obs: f64) -> FeatureMap {
    let n = spec.cell_count();
    let values = (0..n * channels.len()).map(|_| r.random_range(-2.0..2.0)).collect();
    let observed = (0..n).map(|_| r.random_bool(p_obs)).collect();
    FeatureMap::from_parts(spec, names(channels), values, observed).unwrap()
}

fn sq(p: &PartitionScore) -> f64 {
    p.rmse().map_or(0.0, |v| v * v * p.count as f64)
}

// 7. Metric identities.
fn metric_suite() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let spec = GridSpec::ego_centered(r.random_range(1..20), r.random_range(1..20), 0.1);
        let chans = ["a", "b", "c"];
        let p_obs = r.random_range(0.0..1.0);
        let gt = random_feature_map(&mut r, spec, &chans, p_obs);
        let pred = random_feature_map(&mut r, spec, &chans, 1.0);
        let mask: Vec<bool> = (0..spec.cell_count()).map(|_| r.random_bool(0.5)).collect();
        let t = rmse_triptych(&pred, &gt, &mask).unwrap();
        worst = worst.max((sq(&t.both) - sq(&t.observed) - sq(&t.inpaint)).abs());
    }
    ensure!(worst <= 1e-9, "partition identity off by {worst:e}");

    let spec = GridSpec::ego_centered(30, 30, 0.1);
    let gt = random_feature_map(&mut r, spec, &["a", "b"], 0.6);
    let nll = masked_nll(&gt, &FeatureDistMap::from_feature_map(&gt, &[1.0, 1.0]).unwrap()).unwrap().unwrap();
    let expected = 0.5 * (2.0 * PI).ln();
    ensure!((nll - expected).abs() <= 1e-9, "nll at mode {nll} vs {expected}");

    // Random box scenes seen from a random free pose.
    let grid = GridSpec::ego_centered(60, 60, 0.05);
    let sensor = SensorModel {
        n_azimuth: 512,
        n_elevation: 64,
        ..SensorModel::default()
    };
    let (mut wins, mut margin) = (0, f64::INFINITY);
    for seed in 0..100u64 {
        let mut sr = rng(1000 + seed);
        let mut scene = SceneSpec::toy();
        scene.seed = seed;
        scene.boxes = (0..sr.random_range(1..4))
            .map(|_| BoxSpec {
                center: [sr.random_range(-1.4..1.4), sr.random_range(-1.4..1.4)],
                size: [sr.random_range(0.2..0.6), sr.random_range(0.2..0.6)],
                height: sr.random_range(0.1..0.9),
            })
            .collect();
        let cloud = scene.build().unwrap();
        let global = FeatureMap::from_cloud(&cloud, scene.global_grid(0.05, 0.25), &FeatureParams::default()).unwrap();
        let pose = PoseSampler::new(&global, &Default::default()).unwrap().sample(&mut sr);
        let label = travkit_core::feature_map::crop_and_align(&global, &pose, &grid).unwrap();
        let scan = depth_to_cloud(&simulate_scan(&cloud, &pose, &sensor).unwrap(), CloudFrame::Sensor);
        let mapped = FeatureMap::from_cloud(&scan, grid, &FeatureParams::default()).unwrap();
        let zero = fill_constant(&mapped, &[0.0; 7]).unwrap();
        let oracle = fill_constant(&mapped, &oracle_constant(mapped.observed(), &label).unwrap().values).unwrap();
        let (tz, to) = (rmse_triptych(&zero, &label, mapped.observed()).unwrap(), rmse_triptych(&oracle, &label, mapped.observed()).unwrap());
        match (tz.inpaint.rmse(), to.inpaint.rmse()) {
            (Some(z), Some(o)) => {
                ensure!(o <= z + 1e-12, "scene {seed}: oracle {o} lost to zero {z}");
                margin = margin.min(z - o);
                wins += 1;
            }
            (None, None) => {}
            _ => return Err(format!("scene {seed}: inconsistent inpaint partitions")),
        }
    }
    Ok(format!("partition identity err {worst:.1e}, nll at mode {nll:.12}, oracle <= zero on {wins}/100 scenes (min margin {margin:.3})"))
}

// 8. Baseline ordering on the room scene.
fn ordering_suite() -> Outcome {
    let scene = SceneSpec::room();
    let cloud = scene.build().unwrap();
    let global = FeatureMap::from_cloud(&cloud, scene.global_grid(0.05, 0.5), &FeatureParams::default()).unwrap();
    let spec = DatasetSpec::default();
    let sampler = PoseSampler::new(&global, &spec.pose_rule).unwrap();
    let mut r = rng(11);
    let zeros = vec![0.0; canonical_channels().len()];
    let mut totals = [RmseTriptych::default(); 4];
    for _ in 0..10 {
        let pose = sampler.sample(&mut r);
        let label = travkit_core::feature_map::crop_and_align(&global, &pose, &spec.grid).unwrap();
        let scan = depth_to_cloud(&simulate_scan(&cloud, &pose, &spec.sensor).unwrap(), CloudFrame::Sensor);
        let mapped = FeatureMap::from_cloud(&scan, spec.grid, &FeatureParams::default()).unwrap();
        let dense = FeatureMap::from_cloud(&transform_cloud(&cloud, &pose, Direction::WorldToSensor).unwrap(), spec.grid, &FeatureParams::default()).unwrap();
        let preds = [
            fill_constant(&dense, &zeros).unwrap(),
            fill_diffusion(&mapped, &DiffusionParams::default()).unwrap(),
            fill_constant(&mapped, &zeros).unwrap(),
            fill_constant(&mapped, &oracle_constant(mapped.observed(), &label).unwrap().values).unwrap(),
        ];
        for (total, pred) in totals.iter_mut().zip(&preds) {
            total.merge(&rmse_triptych(pred, &label, mapped.observed()).unwrap());
        }
    }
    let [clean, diffusion, zero, oracle] = totals.map(|t| t.both.rmse().unwrap());
    let gap = |better: f64, worse: f64| (worse - better) / worse;
    let line = format!(
        "RMSE(both) clean mapping {clean:.4} < diffusion {diffusion:.4} < zero {zero:.4} (gaps {:.1}%, {:.1}%; oracle constant {oracle:.4})",
        100.0 * gap(clean, diffusion),
        100.0 * gap(diffusion, zero)
    );
    ensure!(gap(clean, diffusion) > 0.05 && gap(diffusion, zero) > 0.05, "ordering not met: {line}");
    Ok(line)
}

fn median_ms(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

// 9. Runtime.
fn timing_suite() -> Outcome {
    let spec = GridSpec::default();
    let n = spec.cell_count();
    let chans = canonical_channels();
    let mut r = rng(12);
    let mu = (0..7 * n).map(|_| r.random_range(0.0..0.5)).collect();
    let sigma = (0..7 * n).map(|_| r.random_range(0.01..0.2)).collect();
    let dist = FeatureDistMap::from_parts(spec, chans.clone(), mu, sigma, vec![true; n]).unwrap();
    let th = TravThresholds::uniform(&chans.iter().map(|c| (c.as_str(), 0.3)).collect::<Vec<_>>()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let trav_ms = median_ms(
        (0..9)
            .map(|_| {
                pool.install(|| {
                    let t = Instant::now();
                    prob_trav(&dist, &th).unwrap();
                    t.elapsed().as_secs_f64() * 1e3
                })
            })
            .collect(),
    );
    ensure!(trav_ms < 50.0, "prob_trav took {trav_ms:.2} ms");

    let scene = SceneSpec::room();
    let cloud = scene.build().unwrap();
    let global = FeatureMap::from_cloud(&cloud, scene.global_grid(0.05, 0.5), &FeatureParams::default()).unwrap();
    let dspec = DatasetSpec::default();
    let pose = PoseSampler::new(&global, &dspec.pose_rule).unwrap().sample(&mut r);
    let pair_ms = median_ms(
        (0..5)
            .map(|k| {
                let t = Instant::now();
                make_pair(&cloud, &global, &pose, &dspec, &mut rng(k)).unwrap();
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect(),
    );
    ensure!(pair_ms < 2000.0, "make_pair took {pair_ms:.1} ms");
    Ok(format!("prob_trav 7x140x140 single-thread median {trav_ms:.2} ms, make_pair median {pair_ms:.1} ms"))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

// 10. gen-dataset determinism through the binary.
fn determinism_suite() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let exe = env!("CARGO_BIN_EXE_travkit");
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let status = Command::new(exe)
        .args(["make-scene", "--kind", "room", "--out"])
        .arg(d.join("room.ply"))
        .arg("--map-out")
        .arg(d.join("room.unrg"))
        .status()
        .unwrap();
    ensure!(status.success(), "make-scene failed");
    let mut spec: serde_json::Value = serde_json::from_slice(&fs::read(cfg.join("dataset_default.json")).unwrap()).unwrap();
    spec["n_samples"] = 6.into();
    fs::write(d.join("spec.json"), serde_json::to_vec(&spec).unwrap()).unwrap();

    let runs = [("1", "a"), ("4", "b"), ("1", "c")];
    for (threads, name) in runs {
        let out = Command::new(exe)
            .env("RAYON_NUM_THREADS", threads)
            .args(["gen-dataset", "--seed", "2024", "--cloud"])
            .arg(d.join("room.ply"))
            .arg("--map")
            .arg(d.join("room.unrg"))
            .arg("--spec")
            .arg(d.join("spec.json"))
            .arg("--out")
            .arg(d.join(name))
            .output()
            .unwrap();
        ensure!(out.status.success(), "gen-dataset failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    let trees: Vec<_> = runs.iter().map(|(_, name)| tree(&d.join(name))).collect();
    ensure!(trees[0].len() == 6 * 3 + 1, "unexpected file count {}", trees[0].len());
    ensure!(trees[0] == trees[2], "two single-thread runs differ");
    ensure!(trees[0] == trees[1], "1-thread and 4-thread runs differ");
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    Ok(format!("{} files ({bytes} bytes) identical across 2 runs and 1 vs 4 threads", trees[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("fusion update", fusion_suite),
        ("probabilistic traversability", prob_trav_suite),
        ("deterministic cost", det_cost_suite),
        ("feature oracles", feature_suite),
        ("noising statistics", noising_suite),
        ("projection round trip", projection_suite),
        ("metric identities", metric_suite),
        ("baseline ordering", ordering_suite),
        ("performance", timing_suite),
        ("dataset determinism", determinism_suite),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
