//! `travkit`: batch front-end for scan simulation, feature mapping,
//! traversability, fusion, inpainting, dataset generation and evaluation.
//!
//! Failures print one JSON line on stderr and exit with 2 (usage), 3 (parse),
//! 4 (contract) or 5 (i/o).

mod io;
mod png;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use travkit_core::dataset::{self, DatasetSpec, Manifest};
use travkit_core::eval::{self, MeanStd, MetricRecord, RmseTriptych};
use travkit_core::feature_map::{FeatureMap, FeatureParams, GridSpec, RawGrid};
use travkit_core::fusion::FusedState;
use travkit_core::inpaint::{self, DiffusionParams, SweepOrder};
use travkit_core::noising::{apply_pipeline, NoisingConfig};
use travkit_core::scan_sim::{depth_to_cloud, simulate_scan, CloudFrame};
use travkit_core::scene::SceneSpec;
use travkit_core::traversability::{self, FeatureDistMap, TravThresholds, TRAV_FEATURES};
use travkit_core::{Error, Pose, Result, SensorModel};

#[derive(Parser)]
#[command(name = "travkit", version, about = "Lidar scan simulation, terrain features and traversability maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a depth image of a point cloud from a pose.
    SimulateScan {
        /// Ground-truth cloud (.ply or .xyz), world frame.
        #[arg(long)]
        cloud: PathBuf,
        /// Sensor pose JSON.
        #[arg(long)]
        pose: PathBuf,
        /// Sensor model JSON.
        #[arg(long)]
        sensor: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the scan degradation pipeline to a depth image.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        /// Noising config JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize a cloud or depth image into a feature map.
    MapFeatures {
        /// Cloud (.ply/.xyz) in the grid frame, or a depth image (.undi).
        #[arg(long)]
        cloud: PathBuf,
        /// Grid JSON.
        #[arg(long)]
        grid: PathBuf,
        /// Feature parameter JSON; defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Frame in which depth-image returns are placed.
        #[arg(long, value_enum, default_value_t = Frame::Sensor)]
        frame: Frame,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a traversability map.
    Trav {
        /// Feature map, or mean/sigma map for prob mode.
        #[arg(long)]
        features: PathBuf,
        /// Threshold JSON.
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, value_enum)]
        mode: TravMode,
        /// Uniform sigma used when prob mode gets a plain feature map.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Optional grayscale PNG of the result.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Fuse a mean/sigma measurement into a running state.
    Fuse {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        meas: PathBuf,
        /// Variance added to the state before the update.
        #[arg(long, default_value_t = 0.0)]
        inflation: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill unobserved cells of a feature map.
    Inpaint {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: FillMethod,
        /// Fill value(s) for the constant method, one or one per channel.
        #[arg(long, value_delimiter = ',')]
        value: Vec<f64>,
        /// Ground-truth map for the oracle method.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Order::Jacobi)]
        order: Order,
        /// Write a mean/sigma grid with this sigma on every entry.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate training pairs from a ground-truth cloud and its global map.
    GenDataset {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Dataset spec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a generated dataset.
    Eval {
        /// Directory holding `<pair id>/pred.unrg` for every pair.
        #[arg(long)]
        pred_dir: PathBuf,
        /// Dataset directory with manifest.json.
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Optional aggregate CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Row label in the CSV.
        #[arg(long, default_value = "pred")]
        method_name: String,
        /// Threshold draws per pair for the traversability MAE.
        #[arg(long, default_value_t = 10)]
        trav_draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the pipeline stages on one generated pair.
    Bench {
        #[arg(long)]
        pair: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Ground-truth cloud; with --map also times pair generation.
        #[arg(long, requires = "map")]
        cloud: Option<PathBuf>,
        #[arg(long, requires = "cloud")]
        map: Option<PathBuf>,
        /// Write the timings here as JSON as well as to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write one of the bundled synthetic scenes.
    MakeScene {
        #[arg(long, value_enum, default_value_t = SceneKind::Room)]
        kind: SceneKind,
        #[arg(long)]
        out: PathBuf,
        /// Also write the scene's global feature map.
        #[arg(long)]
        map_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Frame {
    Sensor,
    World,
}

#[derive(Clone, Copy, ValueEnum)]
enum TravMode {
    Det,
    Prob,
}

#[derive(Clone, Copy, ValueEnum)]
enum FillMethod {
    Zero,
    Constant,
    Oracle,
    Diffusion,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Jacobi,
    GaussSeidel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Room,
    Toy,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({"error": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(match e.kind() {
                "parse" => 3,
                "contract" => 4,
                _ => 5,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SimulateScan { cloud, pose, sensor, out } => {
            io::guard_output(&out, &[&cloud, &pose, &sensor])?;
            let pose: Pose = io::read_json(&pose)?;
            pose.validate()?;
            let sensor: SensorModel = io::read_json(&sensor)?;
            let img = simulate_scan(&io::read_cloud(&cloud)?, &pose, &sensor)?;
            io::write_undi(&out, &img)
        }
        Command::Noise { input, config, seed, out } => {
            io::guard_output(&out, &[&input, &config])?;
            let cfg: NoisingConfig = io::read_json(&config)?;
            let img = io::read_undi(&input)?;
            let (noised, _) = apply_pipeline(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
            io::write_undi(&out, &noised)
        }
        Command::MapFeatures { cloud, grid, params, frame, out } => {
            let mut inputs = vec![cloud.as_path(), grid.as_path()];
            inputs.extend(params.as_deref());
            io::guard_output(&out, &inputs)?;
            let spec: GridSpec = io::read_json(&grid)?;
            let params: FeatureParams = match &params {
                Some(p) => io::read_json(p)?,
                None => FeatureParams::default(),
            };
            let points = if has_extension(&cloud, "undi") {
                let frame = match frame {
                    Frame::Sensor => CloudFrame::Sensor,
                    Frame::World => CloudFrame::World,
                };
                depth_to_cloud(&io::read_undi(&cloud)?, frame)
            } else {
                io::read_cloud(&cloud)?
            };
            io::write_unrg(&out, &FeatureMap::from_cloud(&points, spec, &params)?.to_raw())
        }
        Command::Trav {
            features,
            thresholds,
            mode,
            sigma,
            out,
            png,
        } => {
            let mut inputs = vec![features.as_path(), thresholds.as_path()];
            io::guard_output(&out, &inputs)?;
            if let Some(p) = &png {
                inputs.push(&out);
                io::guard_output(p, &inputs)?;
            }
            let th: TravThresholds = io::read_json(&thresholds)?;
            let raw = io::read_unrg(&features)?;
            let map = match mode {
                TravMode::Det => traversability::det_cost(&feature_means(raw)?, &th)?,
                TravMode::Prob => traversability::prob_trav(&feature_dist(raw, sigma)?, &th)?,
            };
            io::write_unrg(&out, &map.to_raw())?;
            match png {
                Some(p) => png::save(&p, map.spec(), map.values()),
                None => Ok(()),
            }
        }
        Command::Fuse { state, meas, inflation, out } => {
            io::guard_output(&out, &[&state, &meas])?;
            if !(inflation >= 0.0 && inflation.is_finite()) {
                return Err(Error::Contract("inflation must be finite and >= 0".into()));
            }
            let mut fused = FusedState::from_raw(io::read_unrg(&state)?)?;
            fused.variance_inflation = inflation;
            fused.update(&FeatureDistMap::from_raw(io::read_unrg(&meas)?)?)?;
            io::write_unrg(&out, &fused.to_raw())
        }
        Command::Inpaint {
            input,
            method,
            value,
            gt,
            iters,
            tol,
            order,
            sigma,
            out,
        } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(gt.as_deref());
            io::guard_output(&out, &inputs)?;
            let map = FeatureMap::from_raw(io::read_unrg(&input)?)?;
            let c = map.channels().len();
            let filled = match method {
                FillMethod::Zero => inpaint::fill_constant(&map, &vec![0.0; c])?,
                FillMethod::Constant => {
                    let values = match value.len() {
                        1 => vec![value[0]; c],
                        n if n == c => value,
                        _ => return Err(Error::Contract(format!("--value needs 1 or {c} numbers"))),
                    };
                    inpaint::fill_constant(&map, &values)?
                }
                FillMethod::Oracle => {
                    let gt = gt.ok_or_else(|| Error::Contract("--method oracle needs --gt".into()))?;
                    let gt = FeatureMap::from_raw(io::read_unrg(&gt)?)?;
                    map.check_compatible(&gt)?;
                    let fill = inpaint::oracle_constant(map.observed(), &gt)?;
                    inpaint::fill_constant(&map, &fill.values)?
                }
                FillMethod::Diffusion => {
                    let order = match order {
                        Order::Jacobi => SweepOrder::Jacobi,
                        Order::GaussSeidel => SweepOrder::GaussSeidel,
                    };
                    inpaint::fill_diffusion(&map, &DiffusionParams { iters, tol, order })?
                }
            };
            match sigma {
                Some(s) => io::write_unrg(&out, &FeatureDistMap::from_feature_map(&filled, &vec![s; c])?.to_raw()),
                None => io::write_unrg(&out, &filled.to_raw()),
            }
        }
        Command::GenDataset { cloud, map, spec, seed, out } => {
            if [&cloud, &map, &spec].iter().any(|p| p.starts_with(&out)) {
                return Err(Error::Contract("inputs must not live inside the output directory".into()));
            }
            let mut dspec: DatasetSpec = io::read_json(&spec)?;
            if let Some(seed) = seed {
                dspec.rng_seed = seed;
            }
            let global = FeatureMap::from_raw(io::read_unrg(&map)?)?;
            dataset::generate(&io::read_cloud(&cloud)?, &global, &dspec, &out)?;
            Ok(())
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            report,
            csv,
            method_name,
            trav_draws,
            seed,
        } => evaluate(&pred_dir, &gt_dir, &report, csv.as_deref(), &method_name, trav_draws, seed),
        Command::Bench {
            pair,
            iters,
            cloud,
            map,
            report,
        } => bench(&pair, iters, cloud.as_deref().zip(map.as_deref()), report.as_deref()),
        Command::MakeScene {
            kind,
            out,
            map_out,
            resolution,
        } => {
            let spec = match kind {
                SceneKind::Room => SceneSpec::room(),
                SceneKind::Toy => SceneSpec::toy(),
            };
            let cloud = spec.build()?;
            io::write_cloud(&out, &cloud)?;
            if let Some(path) = map_out {
                let global = FeatureMap::from_cloud(&cloud, spec.global_grid(resolution, 0.25), &FeatureParams::default())?;
                io::write_unrg(&path, &global.to_raw())?;
            }
            Ok(())
        }
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Mean features of either a plain or a mean/sigma grid.
fn feature_means(raw: RawGrid) -> Result<FeatureMap> {
    if FeatureDistMap::is_dist_grid(&raw) {
        Ok(FeatureDistMap::from_raw(raw)?.mean_map())
    } else {
        FeatureMap::from_raw(raw)
    }
}

fn feature_dist(raw: RawGrid, sigma: Option<f64>) -> Result<FeatureDistMap> {
    if FeatureDistMap::is_dist_grid(&raw) {
        return FeatureDistMap::from_raw(raw);
    }
    let sigma = sigma.ok_or_else(|| Error::Contract("prob mode needs a mean/sigma map or --sigma".into()))?;
    let map = FeatureMap::from_raw(raw)?;
    FeatureDistMap::from_feature_map(&map, &vec![sigma; map.channels().len()])
}

#[derive(Serialize)]
struct EvalReport {
    pairs: usize,
    records: Vec<MetricRecord>,
    rmse: RmseTriptych,
    nll: Option<f64>,
    trav_mae_prob: Option<MeanStd>,
    trav_mae_det: Option<MeanStd>,
}

struct PairScore {
    records: Vec<MetricRecord>,
    rmse: RmseTriptych,
    nll: Option<(f64, usize)>,
    trav: Vec<(f64, f64)>,
}

fn evaluate(pred_dir: &Path, gt_dir: &Path, report: &Path, csv: Option<&Path>, method: &str, draws: usize, seed: u64) -> Result<()> {
    let manifest = Manifest::load(gt_dir)?;
    io::guard_output(report, &[&gt_dir.join(dataset::MANIFEST)])?;
    let scores = manifest
        .pairs
        .par_iter()
        .map(|entry| {
            let gt = FeatureMap::from_raw(io::read_unrg(&gt_dir.join(&entry.paths.label))?)?;
            let scan = io::read_cloud(&gt_dir.join(&entry.paths.scan))?;
            let input_mask = eval::input_observed_mask(&scan, gt.spec())?;
            let raw = io::read_unrg(&pred_dir.join(&entry.id).join("pred.unrg"))?;
            let dist = if FeatureDistMap::is_dist_grid(&raw) { Some(FeatureDistMap::from_raw(raw.clone())?) } else { None };
            let pred = feature_means(raw)?;
            let rmse = eval::rmse_triptych(&pred, &gt, &input_mask)?;
            let mut records = eval::triptych_records(&entry.id, "rmse", &rmse);
            let mut nll = None;
            let mut trav = Vec::new();
            if let Some(dist) = &dist {
                let value = eval::masked_nll(&gt, dist)?;
                let count = (0..gt.channels().len())
                    .map(|c| (0..gt.spec().cell_count()).filter(|&k| gt.is_valid(c, k)).count())
                    .sum();
                nll = value.map(|v| (v, count));
                records.push(MetricRecord {
                    pair_id: entry.id.clone(),
                    metric: "nll".into(),
                    partition: None,
                    value,
                });
                let features: Vec<&str> = TRAV_FEATURES.iter().copied().filter(|f| gt.channel_index(f).is_some() && dist.channels().iter().any(|c| c == f)).collect();
                if draws > 0 && !features.is_empty() {
                    let ranges = eval::threshold_ranges(&gt, &features)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(entry.index as u64);
                    let rep = eval::trav_mae_experiment(dist, &pred, &gt, &ranges, draws, &mut rng)?;
                    for (name, stat) in [("trav_mae_prob", rep.mae_prob), ("trav_mae_det", rep.mae_det)] {
                        records.push(MetricRecord {
                            pair_id: entry.id.clone(),
                            metric: name.into(),
                            partition: None,
                            value: stat.map(|s| s.mean),
                        });
                    }
                    trav = rep.draws;
                }
            }
            Ok(PairScore { records, rmse, nll, trav })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rmse = RmseTriptych::default();
    let (mut nll_sum, mut nll_count) = (0.0, 0usize);
    let mut records = Vec::new();
    let mut trav = Vec::new();
    for s in scores {
        rmse.merge(&s.rmse);
        if let Some((v, n)) = s.nll {
            nll_sum += v * n as f64;
            nll_count += n;
        }
        records.extend(s.records);
        trav.extend(s.trav);
    }
    let out = EvalReport {
        pairs: manifest.pairs.len(),
        records,
        rmse,
        nll: (nll_count > 0).then(|| nll_sum / nll_count as f64),
        trav_mae_prob: MeanStd::of(&trav.iter().map(|t| t.0).collect::<Vec<_>>()),
        trav_mae_det: MeanStd::of(&trav.iter().map(|t| t.1).collect::<Vec<_>>()),
    };
    io::write_json(report, &out)?;
    if let Some(path) = csv {
        io::write_bytes(path, eval::aggregate_csv(&[(method.to_string(), rmse)]).as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StageTiming {
    stage: &'static str,
    mean_ms: f64,
    std_ms: f64,
}

fn time_stage(stage: &'static str, iters: usize, mut f: impl FnMut() -> Result<()>) -> Result<StageTiming> {
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let stat = MeanStd::of(&samples).ok_or_else(|| Error::Contract("--iters must be >= 1".into()))?;
    Ok(StageTiming {
        stage,
        mean_ms: stat.mean,
        std_ms: stat.std,
    })
}

fn bench(pair: &Path, iters: usize, generation: Option<(&Path, &Path)>, report: Option<&Path>) -> Result<()> {
    let scan = io::read_cloud(&pair.join("scan.ply"))?;
    let label = FeatureMap::from_raw(io::read_unrg(&pair.join("label.unrg"))?)?;
    let spec = *label.spec();
    let params = FeatureParams::default();
    let present: Vec<(&str, f64)> = TRAV_FEATURES.iter().filter(|f| label.channel_index(f).is_some()).map(|f| (*f, 0.3)).collect();
    let th = TravThresholds::uniform(&present)?;

    let mapped = FeatureMap::from_cloud(&scan, spec, &params)?;
    let filled = inpaint::fill_diffusion(&mapped, &DiffusionParams::default())?;
    let dist = FeatureDistMap::from_feature_map(&filled, &vec![0.05; filled.channels().len()])?;
    let mut state = FusedState::from_measurement(&dist);

    let mut timings = Vec::new();
    if let Some((cloud, map)) = generation {
        let gt = io::read_cloud(cloud)?;
        let global = FeatureMap::from_raw(io::read_unrg(map)?)?;
        let meta: serde_json::Value = io::read_json(&pair.join("meta.json"))?;
        let pose: Pose = serde_json::from_value(meta["pose"].clone())?;
        let dspec = DatasetSpec {
            grid: spec,
            sensor: serde_json::from_value(meta["sensor"].clone())?,
            noising: serde_json::from_value(meta["noising"].clone())?,
            ..DatasetSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        timings.push(time_stage("make_pair", iters, || dataset::make_pair(&gt, &global, &pose, &dspec, &mut rng).map(drop))?);
    }
    timings.push(time_stage("map_features", iters, || FeatureMap::from_cloud(&scan, spec, &params).map(drop))?);
    timings.push(time_stage("inpaint_diffusion", iters, || inpaint::fill_diffusion(&mapped, &DiffusionParams::default()).map(drop))?);
    timings.push(time_stage("trav_det", iters, || traversability::det_cost(&filled, &th).map(drop))?);
    timings.push(time_stage("trav_prob", iters, || traversability::prob_trav(&dist, &th).map(drop))?);
    timings.push(time_stage("fuse", iters, || state.update(&dist))?);

    let json = serde_json::to_string_pretty(&timings)?;
    println!("{json}");
    if let Some(path) = report {
        io::write_bytes(path, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}
