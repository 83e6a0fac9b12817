use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{canonical_channels, disk_offsets, offset_cell, CellHeights, FeatureMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Neighborhood radius for `local_slope` / `local_rough`, meters.
    pub foothold_radius: f64,
    /// Neighborhood radius for `slope` / `rough`, meters.
    pub footprint_radius: f64,
    /// Points higher than this above the terrain level are ignored for `elevation`.
    pub overhang_clearance: f64,
    pub min_points_per_cell: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            foothold_radius: 0.10,
            footprint_radius: 0.50,
            overhang_clearance: 0.8,
            min_points_per_cell: 1,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.foothold_radius && self.foothold_radius <= self.footprint_radius) {
            return Err(Error::contract("need 0 < foothold_radius <= footprint_radius"));
        }
        if !(self.overhang_clearance > 0.0) {
            return Err(Error::contract("overhang_clearance must be > 0"));
        }
        if self.min_points_per_cell == 0 {
            return Err(Error::contract("min_points_per_cell must be >= 1"));
        }
        Ok(())
    }
}

/// Percentile of ascending data with linear interpolation between closest ranks:
/// position `pct/100 * (n-1)`.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// terrain / elevation / step of one cell.
fn column_stats(heights: &[f64], clearance: f64) -> [f64; 3] {
    let mut sorted = heights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let terrain = percentile_sorted(&sorted, 1.0);
    let keep = sorted.partition_point(|z| *z <= terrain + clearance);
    let elevation = if keep == 0 {
        terrain
    } else {
        // A cell whose points jump from just below the 1st percentile to far
        // above the clearance can put the 99th percentile of the remainder
        // below the terrain level; step stays non-negative.
        percentile_sorted(&sorted[..keep], 99.0).max(terrain)
    };
    [terrain, elevation, elevation - terrain]
}

/// Slope and roughness of the elevation surface around one cell.
struct Neighborhood {
    slope: f64,
    rough: f64,
}

/// Least-squares plane through neighbor elevations; roughness is the population
/// variance of the residuals. With fewer than three neighbors or collinear
/// centers the slope is undefined and roughness falls back to the plain variance.
fn fit_neighborhood(samples: &[(f64, f64, f64)]) -> Neighborhood {
    let n = samples.len() as f64;
    let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
    for &(x, y, z) in samples {
        mx += x;
        my += y;
        mz += z;
    }
    mx /= n;
    my /= n;
    mz /= n;
    let (mut cxx, mut cyy, mut cxy, mut cxz, mut cyz, mut czz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in samples {
        let (dx, dy, dz) = (x - mx, y - my, z - mz);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
        cxz += dx * dz;
        cyz += dy * dz;
        czz += dz * dz;
    }
    let det = cxx * cyy - cxy * cxy;
    let scale = (cxx + cyy).powi(2);
    if samples.len() < 3 || !(det > 1e-10 * scale) {
        return Neighborhood {
            slope: f64::NAN,
            rough: czz / n,
        };
    }
    let gx = (cyy * cxz - cxy * cyz) / det;
    let gy = (cxx * cyz - cxy * cxz) / det;
    let rough = samples
        .iter()
        .map(|&(x, y, z)| {
            let r = (z - mz) - gx * (x - mx) - gy * (y - my);
            r * r
        })
        .sum::<f64>()
        / n;
    Neighborhood {
        slope: gx.hypot(gy).atan(),
        rough,
    }
}

/// Computes terrain, elevation, step, local_slope, local_rough, slope and rough.
pub fn compute_features(cells: &CellHeights, params: &FeatureParams) -> Result<FeatureMap> {
    params.validate()?;
    let spec = *cells.spec();
    let n = spec.cell_count();

    let columns: Vec<Option<[f64; 3]>> = cells
        .cells()
        .par_iter()
        .map(|h| (h.len() >= params.min_points_per_cell).then(|| column_stats(h, params.overhang_clearance)))
        .collect();

    let foothold = disk_offsets(params.foothold_radius, spec.resolution);
    let footprint = disk_offsets(params.footprint_radius, spec.resolution);
    let res = spec.resolution;

    let neighborhoods: Vec<Option<(Neighborhood, Neighborhood)>> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let center = columns[cell]?;
            let (i, j) = spec.coords(cell);
            let gather = |offsets: &[(isize, isize)]| -> Vec<(f64, f64, f64)> {
                offsets
                    .iter()
                    .filter_map(|&(di, dj)| {
                        let nb = offset_cell(&spec, i, j, di, dj)?;
                        let col = columns[nb]?;
                        // Relative to the center cell, which keeps the fit shift-invariant.
                        Some((di as f64 * res, dj as f64 * res, col[1] - center[1]))
                    })
                    .collect()
            };
            Some((fit_neighborhood(&gather(&foothold)), fit_neighborhood(&gather(&footprint))))
        })
        .collect();

    let mut map = FeatureMap::unobserved(spec, canonical_channels());
    for cell in 0..n {
        if let (Some([terrain, elevation, step]), Some((local, wide))) = (columns[cell], &neighborhoods[cell]) {
            map.set_cell(cell, &[terrain, elevation, step, local.slope, local.rough, wide.slope, wide.rough]);
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_map::{rasterize, GridSpec};
    use crate::geom::{Point3, PointCloud};

    #[test]
    fn two_point_percentiles() {
        let [terrain, elevation, step] = column_stats(&[1.0, 0.0], 2.0);
        assert!((terrain - 0.01).abs() < 1e-15);
        assert!((elevation - 0.99).abs() < 1e-15);
        assert!((step - 0.98).abs() < 1e-15);
    }

    #[test]
    fn overhang_points_do_not_raise_elevation() {
        let heights = [0.0, 0.05, 0.1, 2.5, 2.6];
        let [terrain, elevation, _] = column_stats(&heights, 0.8);
        assert!(terrain < 0.01);
        assert!(elevation <= 0.1 && elevation > 0.09);
    }

    #[test]
    fn step_never_negative() {
        let mut heights = vec![0.0, 0.0];
        heights.extend(std::iter::repeat(100.0).take(198));
        let [terrain, elevation, step] = column_stats(&heights, 0.8);
        assert!(terrain > 90.0);
        assert_eq!(elevation, terrain);
        assert_eq!(step, 0.0);
    }

    #[test]
    fn degenerate_fit_keeps_roughness() {
        let nb = fit_neighborhood(&[(0.0, 0.0, 0.0), (0.05, 0.0, 1.0)]);
        assert!(nb.slope.is_nan());
        assert!((nb.rough - 0.25).abs() < 1e-15);
        let collinear = fit_neighborhood(&[(0.0, 0.0, 0.0), (0.05, 0.0, 1.0), (0.1, 0.0, 2.0)]);
        assert!(collinear.slope.is_nan());
    }

    #[test]
    fn isolated_cell_has_no_slope_but_is_observed() {
        let spec = GridSpec::ego_centered(5, 5, 0.1);
        let cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, 0.2)]).unwrap();
        let map = compute_features(&rasterize(&cloud, &spec).unwrap(), &FeatureParams::default()).unwrap();
        let cell = spec.index(2, 2);
        assert!(map.observed()[cell]);
        assert_eq!(map.observed_count(), 1);
        assert!(map.get(3, cell).is_nan());
        assert_eq!(map.get(4, cell), 0.0);
        assert!((map.get(0, cell) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn min_points_gate() {
        let spec = GridSpec::ego_centered(3, 3, 0.1);
        let cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, 0.2)]).unwrap();
        let params = FeatureParams {
            min_points_per_cell: 2,
            ..FeatureParams::default()
        };
        let map = compute_features(&rasterize(&cloud, &spec).unwrap(), &params).unwrap();
        assert_eq!(map.observed_count(), 0);
    }

    #[test]
    fn param_validation() {
        let mut p = FeatureParams::default();
        p.foothold_radius = 1.0;
        assert!(p.validate().is_err());
    }
}
