//! Non-learned fills for unobserved feature cells: a constant, the
//! RMSE-optimal constant given ground truth, and harmonic (Laplace) diffusion.
//!
//! Every fill leaves finite observed entries bit-identical and returns a fully
//! observed map. Entries that are NaN inside observed cells are filled too.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;

pub fn fill_constant(map: &FeatureMap, values: &[f64]) -> Result<FeatureMap> {
    if values.len() != map.channels().len() {
        return Err(Error::contract("one fill value per channel is required"));
    }
    let n = map.spec().cell_count();
    let filled = map
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| if map.observed()[k % n] && v.is_finite() { *v } else { values[k / n] })
        .collect();
    FeatureMap::from_parts(*map.spec(), map.channels().to_vec(), filled, vec![true; n]).map(|m| m.with_pose(map.pose().copied()))
}

/// Per-channel fill constants chosen with knowledge of the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFill {
    pub values: Vec<f64>,
    /// Channels whose fill region was empty; their value defaults to 0.
    pub empty: Vec<bool>,
}

/// Mean of ground-truth values over cells the prediction misses; the mean is
/// the constant minimizing RMSE over that region.
pub fn oracle_constant(pred_observed: &[bool], gt: &FeatureMap) -> Result<OracleFill> {
    let n = gt.spec().cell_count();
    if pred_observed.len() != n {
        return Err(Error::contract("prediction mask does not match the ground-truth grid"));
    }
    let mut values = Vec::with_capacity(gt.channels().len());
    let mut empty = Vec::with_capacity(gt.channels().len());
    for c in 0..gt.channels().len() {
        let (sum, count) = (0..n)
            .filter(|&cell| !pred_observed[cell] && gt.is_valid(c, cell))
            .fold((0.0, 0usize), |(s, k), cell| (s + gt.get(c, cell), k + 1));
        empty.push(count == 0);
        values.push(if count == 0 { 0.0 } else { sum / count as f64 });
    }
    Ok(OracleFill { values, empty })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Simultaneous updates from the previous iterate; cell-parallel.
    Jacobi,
    /// In-place lexicographic sweeps.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub iters: usize,
    pub tol: f64,
    pub order: SweepOrder,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            iters: 2000,
            tol: 1e-5,
            order: SweepOrder::Jacobi,
        }
    }
}

/// Solves the discrete Laplace equation over missing entries with the known
/// entries as Dirichlet data (4-neighborhood, reflecting grid border).
/// Iteration starts from a nearest-known-value fill and stops when the largest
/// per-cell change falls below `tol` or after `iters` sweeps.
pub fn fill_diffusion(map: &FeatureMap, params: &DiffusionParams) -> Result<FeatureMap> {
    if map.observed_count() == 0 {
        return Err(Error::contract("diffusion fill needs at least one observed cell"));
    }
    let spec = *map.spec();
    let n = spec.cell_count();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|cell| {
            let (i, j) = spec.coords(cell);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(spec.index(i - 1, j));
            }
            if i + 1 < spec.width {
                nb.push(spec.index(i + 1, j));
            }
            if j > 0 {
                nb.push(spec.index(i, j - 1));
            }
            if j + 1 < spec.height {
                nb.push(spec.index(i, j + 1));
            }
            nb
        })
        .collect();

    let channels: Vec<Vec<f64>> = (0..map.channels().len())
        .into_par_iter()
        .map(|c| {
            let known: Vec<bool> = (0..n).map(|cell| map.is_valid(c, cell)).collect();
            if !known.iter().any(|k| *k) {
                return Err(Error::contract(format!("channel {:?} has no observed values to diffuse", map.channels()[c])));
            }
            let mut values = nearest_fill(map.channel(c), &known, &neighbors);
            relax(&mut values, &known, &neighbors, params);
            Ok(values)
        })
        .collect::<Result<_>>()?;

    FeatureMap::from_parts(spec, map.channels().to_vec(), channels.concat(), vec![true; n]).map(|m| m.with_pose(map.pose().copied()))
}

/// Breadth-first propagation of known values into missing cells.
fn nearest_fill(channel: &[f64], known: &[bool], neighbors: &[Vec<usize>]) -> Vec<f64> {
    let mut values = channel.to_vec();
    let mut seen = known.to_vec();
    let mut queue: VecDeque<usize> = (0..values.len()).filter(|&c| known[c]).collect();
    while let Some(cell) = queue.pop_front() {
        for &nb in &neighbors[cell] {
            if !seen[nb] {
                seen[nb] = true;
                values[nb] = values[cell];
                queue.push_back(nb);
            }
        }
    }
    values
}

fn relax(values: &mut [f64], known: &[bool], neighbors: &[Vec<usize>], params: &DiffusionParams) {
    let unknown: Vec<usize> = (0..values.len()).filter(|&c| !known[c]).collect();
    if unknown.is_empty() {
        return;
    }
    // Flattened neighbor lists of the unknown cells.
    let mut start = Vec::with_capacity(unknown.len() + 1);
    let mut flat = Vec::with_capacity(4 * unknown.len());
    start.push(0);
    for &cell in &unknown {
        flat.extend_from_slice(&neighbors[cell]);
        start.push(flat.len());
    }
    let average = |v: &[f64], k: usize| {
        let nb = &flat[start[k]..start[k + 1]];
        nb.iter().map(|&c| v[c]).sum::<f64>() / nb.len() as f64
    };
    match params.order {
        SweepOrder::Jacobi => {
            let mut updates = vec![0.0; unknown.len()];
            for _ in 0..params.iters {
                updates.par_iter_mut().with_min_len(4096).enumerate().for_each(|(k, u)| *u = average(values, k));
                let mut change = 0.0f64;
                for (&cell, &v) in unknown.iter().zip(&updates) {
                    change = change.max((v - values[cell]).abs());
                    values[cell] = v;
                }
                if change < params.tol {
                    break;
                }
            }
        }
        SweepOrder::GaussSeidel => {
            for _ in 0..params.iters {
                let mut change = 0.0f64;
                for (k, &cell) in unknown.iter().enumerate() {
                    let v = average(values, k);
                    change = change.max((v - values[cell]).abs());
                    values[cell] = v;
                }
                if change < params.tol {
                    break;
                }
            }
        }
    }
}
