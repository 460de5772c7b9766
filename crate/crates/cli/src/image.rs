//! PNG rasters of conductivity images on a shared diverging color scale.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Blue below `center`, white at `center`, red above, saturated at
/// `center ± half_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorScale {
    pub center: f64,
    pub half_range: f64,
}

const BLUE: [f64; 3] = [33.0, 102.0, 172.0];
const RED: [f64; 3] = [178.0, 24.0, 43.0];

impl ColorScale {
    /// Fixed range if given, otherwise the largest deviation from `center`
    /// over all images of the comparison set.
    pub fn shared(images: &[&[Option<f64>]], center: f64, fixed: Option<f64>) -> Self {
        let half_range = fixed.unwrap_or_else(|| {
            images
                .iter()
                .flat_map(|img| img.iter().flatten())
                .map(|v| (v - center).abs())
                .fold(0.0, f64::max)
        });
        Self {
            center,
            half_range: if half_range > 0.0 { half_range } else { 1.0 },
        }
    }

    pub fn bounds(&self) -> [f64; 2] {
        [self.center - self.half_range, self.center + self.half_range]
    }

    pub fn color(&self, v: f64) -> [u8; 4] {
        let t = ((v - self.center) / self.half_range).clamp(-1.0, 1.0);
        let end = if t < 0.0 { BLUE } else { RED };
        let a = t.abs();
        let c = |i: usize| (255.0 * (1.0 - a) + end[i] * a).round() as u8;
        [c(0), c(1), c(2), 255]
    }
}

/// Writes a square image given row-major from the top, `None` pixels
/// transparent, each pixel repeated `scale` times per axis.
pub fn write_png(path: &Path, image: &[Option<f64>], size: usize, scale: usize, colors: &ColorScale) -> Result<()> {
    let side = size * scale;
    let mut data = Vec::with_capacity(side * side * 4);
    for row in 0..side {
        for col in 0..side {
            let px = image[(row / scale) * size + col / scale];
            data.extend(px.map_or([0, 0, 0, 0], |v| colors.color(v)));
        }
    }
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), side as u32, side as u32);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&data)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_endpoints() {
        let s = ColorScale {
            center: 1.0,
            half_range: 0.5,
        };
        assert_eq!(s.color(1.0), [255, 255, 255, 255]);
        assert_eq!(s.color(0.5), [33, 102, 172, 255]);
        assert_eq!(s.color(3.0), [178, 24, 43, 255]);
        assert_eq!(s.bounds(), [0.5, 1.5]);
    }

    #[test]
    fn shared_range_covers_all_images() {
        let a = [Some(1.2), None];
        let b = [Some(0.7), Some(1.0)];
        let s = ColorScale::shared(&[&a, &b], 1.0, None);
        assert!((s.half_range - 0.3).abs() < 1e-12);
        let flat = ColorScale::shared(&[&b[1..]], 1.0, None);
        assert_eq!(flat.half_range, 1.0);
        assert_eq!(ColorScale::shared(&[&a], 1.0, Some(2.0)).half_range, 2.0);
    }

    #[test]
    fn png_round_trip_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = vec![Some(1.0), None, Some(2.0), Some(0.0)];
        let s = ColorScale::shared(&[&img], 1.0, None);
        write_png(&path, &img, 2, 3, &s).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&path).unwrap()));
        let reader = decoder.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (6, 6));
    }
}
