//! File plumbing shared by the subcommands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use travkit_core::feature_map::{read_grid, write_grid, RawGrid};
use travkit_core::geom::{load_cloud, save_cloud, CloudFormat};
use travkit_core::scan_sim::{read_depth_image, write_depth_image};
use travkit_core::{DepthImage, Error, PointCloud, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Parses a JSON config; syntax and schema problems are parse errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data if contract_message(&e) => Error::Contract(format!("{}: {e}", path.display())),
        _ => Error::Parse {
            offset: byte_offset(&bytes, e.line(), e.column()),
            message: format!("{}: {e}", path.display()),
        },
    })
}

// Validation inside `try_from` deserializers surfaces as a data error carrying
// the contract message.
fn contract_message(e: &serde_json::Error) -> bool {
    e.to_string().starts_with("contract violation")
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let start: usize = bytes.split(|b| *b == b'\n').take(line - 1).map(|l| l.len() + 1).sum();
    (start + column.saturating_sub(1)) as u64
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    load_cloud(path, CloudFormat::from_path(path))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_cloud(cloud, path, CloudFormat::from_path(path))
}

pub fn read_undi(path: &Path) -> Result<DepthImage> {
    read_depth_image(&read_bytes(path)?)
}

pub fn write_undi(path: &Path, img: &DepthImage) -> Result<()> {
    let mut buf = Vec::new();
    write_depth_image(img, &mut buf)?;
    write_bytes(path, &buf)
}

pub fn read_unrg(path: &Path) -> Result<RawGrid> {
    read_grid(&read_bytes(path)?)
}

pub fn write_unrg(path: &Path, grid: &RawGrid) -> Result<()> {
    let mut buf = Vec::new();
    write_grid(grid, &mut buf)?;
    write_bytes(path, &buf)
}

/// Refuses to write over any of the command's inputs.
pub fn guard_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| fs::canonicalize(p).ok();
    let target = canon(out);
    for input in inputs {
        if input == &out || (target.is_some() && canon(input) == target) {
            return Err(Error::Contract(format!("output {} would overwrite an input", out.display())));
        }
    }
    Ok(())
}
