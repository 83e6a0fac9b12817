//! `UNRG` grid files: magic, u32 LE header length, JSON header, then f32 LE
//! values, channel-major, then by x index, then by y index. NaN marks
//! unobserved entries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::error::{Error, Result};
use crate::geom::Pose;

const MAGIC: &[u8; 4] = b"UNRG";

#[derive(Serialize, Deserialize)]
struct Header {
    width: usize,
    height: usize,
    channels: Vec<String>,
    resolution: f64,
    origin: [f64; 2],
    pose: Option<Pose>,
    #[serde(default)]
    ego_centered: bool,
}

/// Any multi-channel grid as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    pub spec: GridSpec,
    pub channels: Vec<String>,
    pub values: Vec<f64>,
    pub pose: Option<Pose>,
}

impl RawGrid {
    /// A cell is observed when at least one channel is finite.
    pub fn observed(&self) -> Vec<bool> {
        let n = self.spec.cell_count();
        (0..n)
            .map(|cell| (0..self.channels.len()).any(|c| self.values[c * n + cell].is_finite()))
            .collect()
    }
}

pub fn write_grid(grid: &RawGrid, out: &mut impl Write) -> Result<()> {
    let n = grid.spec.cell_count();
    if grid.values.len() != n * grid.channels.len() {
        return Err(Error::contract("grid value buffer does not match its header"));
    }
    let header = serde_json::to_vec(&Header {
        width: grid.spec.width,
        height: grid.spec.height,
        channels: grid.channels.clone(),
        resolution: grid.spec.resolution,
        origin: grid.spec.origin,
        pose: grid.pose,
        ego_centered: grid.spec.ego_centered,
    })?;
    let mut buf = Vec::with_capacity(8 + header.len() + 4 * grid.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in &grid.values {
        let v = if v.is_nan() { f32::NAN } else { *v as f32 };
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_grid(bytes: &[u8]) -> Result<RawGrid> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::parse(0, "missing UNRG magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::parse(4, "header length exceeds file size"))?;
    let h: Header = serde_json::from_slice(&bytes[8..header_end]).map_err(|e| Error::parse(8, format!("bad header: {e}")))?;
    let spec = GridSpec {
        width: h.width,
        height: h.height,
        resolution: h.resolution,
        origin: h.origin,
        ego_centered: h.ego_centered,
    };
    spec.validate()?;
    let expected = spec.cell_count() * h.channels.len() * 4;
    let payload = &bytes[header_end..];
    if payload.len() != expected {
        return Err(Error::parse(
            (header_end + payload.len().min(expected)) as u64,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(RawGrid {
        spec,
        channels: h.channels,
        values,
        pose: h.pose,
    })
}
