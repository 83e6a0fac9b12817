//! `UNDI` depth-image files: magic, u32 LE header length, JSON header, then
//! row-major little-endian f32 ranges with NaN for no return.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DepthImage, SensorModel};
use crate::error::{Error, Result};
use crate::geom::Pose;

const MAGIC: &[u8; 4] = b"UNDI";

#[derive(Serialize, Deserialize)]
struct Header {
    n_azimuth: usize,
    n_elevation: usize,
    elevation_min: f64,
    elevation_max: f64,
    min_range: f64,
    max_range: f64,
    pose: Pose,
}

pub fn write_depth_image(img: &DepthImage, out: &mut impl Write) -> Result<()> {
    let s = img.sensor();
    let header = serde_json::to_vec(&Header {
        n_azimuth: s.n_azimuth,
        n_elevation: s.n_elevation,
        elevation_min: s.elevation_min,
        elevation_max: s.elevation_max,
        min_range: s.min_range,
        max_range: s.max_range,
        pose: *img.pose(),
    })?;
    let mut buf = Vec::with_capacity(8 + header.len() + 4 * img.ranges().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for r in img.ranges() {
        let r = if r.is_nan() { f32::NAN } else { *r };
        buf.extend_from_slice(&r.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_depth_image(bytes: &[u8]) -> Result<DepthImage> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::parse(0, "missing UNDI magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::parse(4, "header length exceeds file size"))?;
    let h: Header = serde_json::from_slice(&bytes[8..header_end]).map_err(|e| Error::parse(8, format!("bad header: {e}")))?;
    let sensor = SensorModel {
        n_azimuth: h.n_azimuth,
        n_elevation: h.n_elevation,
        elevation_min: h.elevation_min,
        elevation_max: h.elevation_max,
        min_range: h.min_range,
        max_range: h.max_range,
    };
    sensor.validate()?;
    let payload = &bytes[header_end..];
    let expected = sensor.cell_count() * 4;
    if payload.len() != expected {
        let offset = header_end + payload.len().min(expected);
        return Err(Error::parse(
            offset as u64,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let ranges = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DepthImage::from_ranges(sensor, h.pose, ranges)
}
