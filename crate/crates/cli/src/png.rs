//! Grayscale figure export: value 0 is black, 1 is white, missing is magenta.
//! Image rows run from +y (top) to -y; columns follow +x.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use travkit_core::{Error, GridSpec, Result};

pub fn gray(v: f64) -> Rgb<u8> {
    if v.is_nan() {
        return Rgb([255, 0, 255]);
    }
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([g, g, g])
}

pub fn render(spec: &GridSpec, values: &[f64]) -> RgbImage {
    RgbImage::from_fn(spec.width as u32, spec.height as u32, |x, y| {
        let j = spec.height - 1 - y as usize;
        gray(values[spec.index(x as usize, j)])
    })
}

pub fn save(path: &Path, spec: &GridSpec, values: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    render(spec, values)
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_mapping() {
        assert_eq!(gray(0.0), Rgb([0, 0, 0]));
        assert_eq!(gray(1.0), Rgb([255, 255, 255]));
        assert_eq!(gray(0.5), Rgb([128, 128, 128]));
        assert_eq!(gray(f64::NAN), Rgb([255, 0, 255]));
    }

    #[test]
    fn y_up_orientation() {
        let spec = GridSpec::ego_centered(2, 3, 1.0);
        let mut values = vec![0.0; 6];
        values[spec.index(1, 2)] = 1.0;
        let img = render(&spec, &values);
        assert_eq!(img.get_pixel(1, 0), &Rgb([255, 255, 255]));
    }
}
