use rayon::prelude::*;

use super::{FeatureMap, GridSpec, HEIGHT_CHANNELS};
use crate::error::Result;
use crate::geom::Pose;

/// Samples `global` on a grid attached to `pose` (yaw only), nearest cell.
///
/// `spec` is expressed in the pose frame. Cells falling outside `global` or on
/// unobserved global cells stay unobserved. Height channels are re-referenced
/// to the pose height.
pub fn crop_and_align(global: &FeatureMap, pose: &Pose, spec: &GridSpec) -> Result<FeatureMap> {
    spec.validate()?;
    pose.validate()?;
    let gspec = global.spec();
    let (sin, cos) = pose.yaw().sin_cos();
    let [tx, ty, tz] = pose.translation();
    let n_channels = global.channels().len();
    let shifted: Vec<bool> = global
        .channels()
        .iter()
        .map(|c| HEIGHT_CHANNELS.contains(&c.as_str()))
        .collect();

    let sources: Vec<Option<usize>> = (0..spec.cell_count())
        .into_par_iter()
        .map(|cell| {
            let (i, j) = spec.coords(cell);
            let (x, y) = spec.cell_center(i, j);
            let (wx, wy) = (cos * x - sin * y + tx, sin * x + cos * y + ty);
            let (gi, gj) = gspec.cell_of(wx, wy)?;
            let src = gspec.index(gi, gj);
            global.observed()[src].then_some(src)
        })
        .collect();

    let mut out = FeatureMap::unobserved(*spec, global.channels().to_vec());
    let mut row = vec![0.0; n_channels];
    for (cell, src) in sources.into_iter().enumerate() {
        let Some(src) = src else { continue };
        for (c, v) in row.iter_mut().enumerate() {
            let g = global.get(c, src);
            *v = if shifted[c] { g - tz } else { g };
        }
        out.set_cell(cell, &row);
    }
    Ok(out.with_pose(Some(*pose)))
}
