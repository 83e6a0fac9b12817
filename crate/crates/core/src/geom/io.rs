//! Pointcloud readers and writers: binary little-endian PLY and whitespace-separated XYZ text.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyBinary,
    XyzAscii,
}

impl CloudFormat {
    /// Guesses from the file extension: `.ply` is binary PLY, anything else is XYZ text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyBinary,
            _ => CloudFormat::XyzAscii,
        }
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    match format {
        CloudFormat::PlyBinary => read_ply(&bytes),
        CloudFormat::XyzAscii => read_xyz(&bytes),
    }
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        CloudFormat::PlyBinary => write_ply(cloud, &mut buf)?,
        CloudFormat::XyzAscii => write_xyz(cloud, &mut buf)?,
    }
    fs::write(path, buf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// XYZ

pub fn read_xyz(bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(e.valid_up_to() as u64, "input is not valid UTF-8"))?;
    let mut points = Vec::new();
    let mut line_start = 0usize;
    for line in text.split_inclusive('\n') {
        let offset = line_start;
        line_start += line.len();
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut coords = [0.0f64; 3];
        let mut n = 0usize;
        for (tok_offset, tok) in tokens(line) {
            let value: f64 = tok
                .parse()
                .map_err(|_| Error::parse((offset + tok_offset) as u64, format!("not a number: {tok:?}")))?;
            if !value.is_finite() {
                return Err(Error::parse((offset + tok_offset) as u64, format!("non-finite coordinate {tok:?}")));
            }
            // Extra columns (intensity, ring, ...) are validated and discarded.
            if n < 3 {
                coords[n] = value;
            }
            n += 1;
        }
        if n < 3 {
            return Err(Error::parse(offset as u64, format!("expected 3 coordinates, found {n}")));
        }
        points.push(Point3::from(coords));
    }
    Ok(PointCloud::from_points_unchecked(points))
}

fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut consumed = 0usize;
    std::iter::from_fn(move || {
        let start = rest.find(|c: char| !c.is_whitespace())?;
        let after = &rest[start..];
        let len = after.find(char::is_whitespace).unwrap_or(after.len());
        let tok = &after[..len];
        let at = consumed + start;
        consumed += start + len;
        rest = &after[len..];
        Some((at, tok))
    })
}

/// Nine significant digits, enough to round-trip any `f32` coordinate.
pub fn write_xyz(cloud: &PointCloud, out: &mut impl Write) -> Result<()> {
    for p in cloud {
        writeln!(out, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if !bytes.starts_with(b"ply\n") && !bytes.starts_with(b"ply\r\n") {
        return Err(Error::parse(0, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut pos = 0usize;
    let mut saw_format = false;
    loop {
        let rel_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(pos as u64, "header is not terminated by end_header"))?;
        let raw = &bytes[pos..pos + rel_end];
        let line_offset = pos as u64;
        pos += rel_end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(line_offset, "header line is not valid UTF-8"))?
            .trim_end_matches('\r');
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] if line_offset == 0 => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse(line_offset, format!("unsupported PLY format {fmt:?}")));
                }
                saw_format = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(line_offset, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let prop = Property::List {
                    count: scalar(count, line_offset)?,
                    item: scalar(item, line_offset)?,
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_offset, "property before any element"))?
                    .properties
                    .push(prop);
            }
            ["property", ty, name] => {
                let prop = Property::Scalar {
                    name: name.to_string(),
                    ty: scalar(ty, line_offset)?,
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_offset, "property before any element"))?
                    .properties
                    .push(prop);
            }
            ["end_header"] => break,
            _ => return Err(Error::parse(line_offset, format!("unrecognized header line {line:?}"))),
        }
    }
    if !saw_format {
        return Err(Error::parse(0, "header has no format line"));
    }
    Ok(Header {
        elements,
        body_offset: pos,
    })
}

fn scalar(name: &str, offset: u64) -> Result<Scalar> {
    Scalar::parse(name).ok_or_else(|| Error::parse(offset, format!("unknown property type {name:?}")))
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = *pos + n;
    if end > bytes.len() {
        return Err(Error::parse(*pos as u64, "truncated PLY payload"));
    }
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

/// Reads `element vertex` x/y/z from a binary little-endian PLY; every other
/// property and element is skipped.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let mut pos = header.body_offset;
    let mut points = None;
    for element in &header.elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                skip_record(bytes, &mut pos, &element.properties)?;
            }
            continue;
        }
        let slot = |axis: &str| {
            element
                .properties
                .iter()
                .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
                .ok_or_else(|| Error::parse(0, format!("vertex element has no '{axis}' property")))
        };
        let (ix, iy, iz) = (slot("x")?, slot("y")?, slot("z")?);
        let mut out = Vec::with_capacity(element.count);
        let mut values = vec![0.0f64; element.properties.len()];
        for _ in 0..element.count {
            let record_start = pos;
            for (k, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => values[k] = ty.read(take(bytes, &mut pos, ty.size())?),
                    Property::List { count, item } => skip_list(bytes, &mut pos, *count, *item)?,
                }
            }
            let p = Point3::new(values[ix], values[iy], values[iz]);
            if !p.is_finite() {
                return Err(Error::parse(record_start as u64, "non-finite vertex coordinate"));
            }
            out.push(p);
        }
        points = Some(out);
    }
    let points = points.ok_or_else(|| Error::parse(0, "PLY has no vertex element"))?;
    Ok(PointCloud::from_points_unchecked(points))
}

fn skip_record(bytes: &[u8], pos: &mut usize, props: &[Property]) -> Result<()> {
    for prop in props {
        match prop {
            Property::Scalar { ty, .. } => {
                take(bytes, pos, ty.size())?;
            }
            Property::List { count, item } => skip_list(bytes, pos, *count, *item)?,
        }
    }
    Ok(())
}

fn skip_list(bytes: &[u8], pos: &mut usize, count: Scalar, item: Scalar) -> Result<()> {
    let at = *pos;
    let n = count.read(take(bytes, pos, count.size())?);
    if n < 0.0 || n.fract() != 0.0 {
        return Err(Error::parse(at as u64, "invalid list length"));
    }
    take(bytes, pos, n as usize * item.size())?;
    Ok(())
}

/// Writes float32 x/y/z. Coordinates are narrowed to `f32`; clouds that were
/// read from PLY round-trip bit-exactly.
pub fn write_ply(cloud: &PointCloud, out: &mut impl Write) -> Result<()> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    let mut buf = Vec::with_capacity(header.len() + cloud.len() * 12);
    buf.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::Data(format!("point {i} does not fit in float32")));
            }
            buf.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}
