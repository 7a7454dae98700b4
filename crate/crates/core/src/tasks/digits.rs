//! The 8×8 handwritten digit set (1797 images, 10 classes) bundled with the
//! crate, and raster helpers.

use std::io::Read;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

const DIGITS_GZ: &[u8] = include_bytes!("../../data/digits.csv.gz");

/// Row-major grayscale raster with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}×{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resampling with pixel centers aligned.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let sample = |out: usize, n_out: usize, n_in: usize| {
            let s = ((out as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        };
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = sample(y, height, self.height);
            for x in 0..width {
                let (x0, x1, fx) = sample(x, width, self.width);
                let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
                let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
                pixels.push(top * (1.0 - fy) + bottom * fy);
            }
        }
        Self { width, height, pixels }
    }
}

/// All bundled digits as `(image, label)`, intensities scaled from 0..16.
pub fn load_digits() -> Result<Vec<(GrayImage, usize)>> {
    let mut text = String::new();
    GzDecoder::new(DIGITS_GZ)
        .read_to_string(&mut text)
        .map_err(|e| Error::Dataset(format!("bundled digits: {e}")))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let values: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Dataset(format!("bundled digits row {i}: {e}")))?;
            if values.len() != 65 {
                return Err(Error::Dataset(format!("bundled digits row {i}: {} fields", values.len())));
            }
            let pixels = values[..64].iter().map(|v| v / 16.0).collect();
            Ok((GrayImage::new(8, 8, pixels)?, values[64] as usize))
        })
        .collect()
}
