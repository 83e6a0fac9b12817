//! Scoring of predicted feature maps and traversability maps against labels.
//!
//! RMSE is taken jointly over channel-cell pairs (not averaged per channel
//! first). Channels are matched by name, so metrics do not depend on channel
//! order.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::{rasterize, FeatureMap, GridSpec};
use crate::geom::PointCloud;
use crate::traversability::{det_cost, gt_trav, prob_trav, FeatureDistMap, FeatureThreshold, TravMap, TravThresholds};

/// Squared-error accumulator for one partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    pub sse: f64,
    pub count: usize,
}

impl PartitionScore {
    /// `None` for an empty partition.
    pub fn rmse(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.sse / self.count as f64).sqrt())
    }

    pub fn merge(&mut self, other: &PartitionScore) {
        self.sse += other.sse;
        self.count += other.count;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RmseTriptych {
    pub observed: PartitionScore,
    pub inpaint: PartitionScore,
    pub both: PartitionScore,
}

impl RmseTriptych {
    pub fn merge(&mut self, other: &RmseTriptych) {
        self.observed.merge(&other.observed);
        self.inpaint.merge(&other.inpaint);
        self.both.merge(&other.both);
    }

    pub fn partitions(&self) -> [(&'static str, &PartitionScore); 3] {
        [("observed", &self.observed), ("inpaint", &self.inpaint), ("both", &self.both)]
    }
}

fn match_channels(wanted: &[String], available: &[String]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|name| {
            available
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::contract(format!("prediction lacks channel {name:?}")))
        })
        .collect()
}

fn check_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::contract("grid dimensions differ"));
    }
    Ok(())
}

/// Cells of `spec` containing at least one point of `cloud` (already in the grid frame).
pub fn input_observed_mask(cloud: &PointCloud, spec: &GridSpec) -> Result<Vec<bool>> {
    Ok(rasterize(cloud, spec)?.cells().iter().map(|c| !c.is_empty()).collect())
}

/// RMSE over gt-observed entries, split by whether the cell was observed in
/// the input. Every evaluated prediction entry must be finite.
pub fn rmse_triptych(pred: &FeatureMap, gt: &FeatureMap, input_observed: &[bool]) -> Result<RmseTriptych> {
    check_grid(pred.spec(), gt.spec())?;
    let n = gt.spec().cell_count();
    if input_observed.len() != n {
        return Err(Error::contract("input mask does not match the grid"));
    }
    let idx = match_channels(gt.channels(), pred.channels())?;
    let mut out = RmseTriptych::default();
    for (c, &pc) in idx.iter().enumerate() {
        for cell in 0..n {
            if !gt.is_valid(c, cell) {
                continue;
            }
            let p = pred.get(pc, cell);
            if !p.is_finite() {
                return Err(Error::contract("prediction has missing entries inside the gt mask; fill it first"));
            }
            let e = (p - gt.get(c, cell)).powi(2);
            let part = if input_observed[cell] { &mut out.observed } else { &mut out.inpaint };
            part.sse += e;
            part.count += 1;
            out.both.sse += e;
            out.both.count += 1;
        }
    }
    Ok(out)
}

/// Mean Gaussian negative log-likelihood over gt-observed entries.
/// `None` when the gt mask is empty.
pub fn masked_nll(gt: &FeatureMap, dist: &FeatureDistMap) -> Result<Option<f64>> {
    check_grid(gt.spec(), dist.spec())?;
    let idx = match_channels(gt.channels(), dist.channels())?;
    let n = gt.spec().cell_count();
    let half_log_tau = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let (mut total, mut count) = (0.0, 0usize);
    for (c, &dc) in idx.iter().enumerate() {
        for cell in 0..n {
            if !gt.is_valid(c, cell) {
                continue;
            }
            if !dist.is_valid(dc, cell) {
                return Err(Error::contract("distribution is missing inside the gt mask"));
            }
            let (mu, sigma) = dist.get(dc, cell);
            let z = (gt.get(c, cell) - mu) / sigma;
            total += half_log_tau + sigma.ln() + 0.5 * z * z;
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Mean absolute error over gt-observed cells; unobserved predictions count as 0.
pub fn trav_mae(pred: &TravMap, gt: &TravMap) -> Result<Option<f64>> {
    check_grid(pred.spec(), gt.spec())?;
    let (mut total, mut count) = (0.0, 0usize);
    for cell in 0..gt.spec().cell_count() {
        if !gt.observed()[cell] {
            continue;
        }
        let p = if pred.observed()[cell] { pred.values()[cell] } else { 0.0 };
        total += (p - gt.values()[cell]).abs();
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Interval from which a feature's critical value is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// `[median/2, 2*median]` of each feature's observed gt values. Non-positive
/// medians fall back to the median of the positive values, then to 1e-3.
pub fn threshold_ranges(gt: &FeatureMap, features: &[&str]) -> Result<Vec<ThresholdRange>> {
    features
        .iter()
        .map(|name| {
            let c = gt.require_channel(name)?;
            let mut vals: Vec<f64> = (0..gt.spec().cell_count()).filter(|&k| gt.is_valid(c, k)).map(|k| gt.get(c, k)).collect();
            vals.sort_by(f64::total_cmp);
            let mut m = median(&vals);
            if !(m > 0.0) {
                let pos: Vec<f64> = vals.iter().copied().filter(|v| *v > 0.0).collect();
                m = median(&pos);
            }
            if !(m > 0.0) {
                m = 1e-3;
            }
            Ok(ThresholdRange {
                name: name.to_string(),
                lo: 0.5 * m,
                hi: 2.0 * m,
            })
        })
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single draw.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravMaeReport {
    pub mae_prob: Option<MeanStd>,
    pub mae_det: Option<MeanStd>,
    /// Per-draw `(prob, det)` errors, for draws with a non-empty gt mask.
    pub draws: Vec<(f64, f64)>,
}

/// Draws one threshold set, equal weights, each `f_crit ~ U[lo, hi]`.
pub fn sample_thresholds<R: Rng + ?Sized>(ranges: &[ThresholdRange], rng: &mut R) -> Result<TravThresholds> {
    TravThresholds::new(
        ranges
            .iter()
            .map(|r| FeatureThreshold {
                name: r.name.clone(),
                f_crit: if r.hi > r.lo { rng.random_range(r.lo..r.hi) } else { r.lo },
                alpha: 1.0,
            })
            .collect(),
    )
}

/// Compares the probabilistic and deterministic traversability of a
/// prediction against labels over `n_draws` random threshold sets.
pub fn trav_mae_experiment<R: Rng + ?Sized>(
    dist: &FeatureDistMap,
    det_features: &FeatureMap,
    gt: &FeatureMap,
    ranges: &[ThresholdRange],
    n_draws: usize,
    rng: &mut R,
) -> Result<TravMaeReport> {
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let th = sample_thresholds(ranges, rng)?;
        let truth = gt_trav(gt, &th)?;
        let prob = prob_trav(dist, &th)?;
        let det = det_cost(det_features, &th)?.inverted();
        if let (Some(p), Some(d)) = (trav_mae(&prob, &truth)?, trav_mae(&det, &truth)?) {
            draws.push((p, d));
        }
    }
    let probs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let dets: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok(TravMaeReport {
        mae_prob: MeanStd::of(&probs),
        mae_det: MeanStd::of(&dets),
        draws,
    })
}

/// One line of the per-pair JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub pair_id: String,
    pub metric: String,
    pub partition: Option<String>,
    pub value: Option<f64>,
}

pub fn triptych_records(pair_id: &str, metric: &str, t: &RmseTriptych) -> Vec<MetricRecord> {
    t.partitions()
        .iter()
        .map(|(name, score)| MetricRecord {
            pair_id: pair_id.to_string(),
            metric: metric.to_string(),
            partition: Some(name.to_string()),
            value: score.rmse(),
        })
        .collect()
}

/// CSV with one row per method and one RMSE column per partition; empty
/// partitions are written as `nan`.
pub fn aggregate_csv(rows: &[(String, RmseTriptych)]) -> String {
    let mut out = String::from("method,observed,inpaint,both,n_observed,n_inpaint,n_both\n");
    let fmt = |s: &PartitionScore| s.rmse().map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
    for (method, t) in rows {
        let _ = writeln!(
            out,
            "{method},{},{},{},{},{},{}",
            fmt(&t.observed),
            fmt(&t.inpaint),
            fmt(&t.both),
            t.observed.count,
            t.inpaint.count,
            t.both.count
        );
    }
    out
}
