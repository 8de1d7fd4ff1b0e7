use std::path::Path;

use super::DisplacementFrame;
use crate::error::{Result, TevError};

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale(&self, factor: usize) -> RgbImage {
        let factor = factor.max(1);
        let (w, h) = (self.width * factor, self.height * factor);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(self.get(x / factor, y / factor));
            }
        }
        RgbImage {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Side by side, top-aligned, separated by `gap` black columns.
    pub fn hconcat(images: &[RgbImage], gap: usize) -> RgbImage {
        let height = images.iter().map(|i| i.height).max().unwrap_or(0);
        let width = images.iter().map(|i| i.width).sum::<usize>() + gap * images.len().saturating_sub(1);
        let mut out = RgbImage::filled(width, height, [0, 0, 0]);
        let mut x0 = 0;
        for img in images {
            for y in 0..img.height {
                for x in 0..img.width {
                    out.pixels[y * width + x0 + x] = img.get(x, y);
                }
            }
            x0 += img.width + gap;
        }
        out
    }

    /// Stacked top to bottom, left-aligned.
    pub fn vconcat(images: &[RgbImage], gap: usize) -> RgbImage {
        let width = images.iter().map(|i| i.width).max().unwrap_or(0);
        let height = images.iter().map(|i| i.height).sum::<usize>() + gap * images.len().saturating_sub(1);
        let mut out = RgbImage::filled(width, height, [0, 0, 0]);
        let mut y0 = 0;
        for img in images {
            for y in 0..img.height {
                for x in 0..img.width {
                    out.pixels[(y0 + y) * width + x] = img.get(x, y);
                }
            }
            y0 += img.height + gap;
        }
        out
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_ppm())
    }
}

/// HSV to 8-bit RGB; `hue` in degrees, `saturation` and `value` in `[0, 1]`.
pub fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = value * saturation;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = value - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let to8 = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Direction as hue, magnitude as value (saturating at `v_max`), full
/// saturation. Image x runs along columns, y along rows.
pub fn encode_hsv(frame: &DisplacementFrame, v_max: f64) -> Result<RgbImage> {
    if !(v_max > 0.0) {
        return Err(TevError::Config(format!("v_max must be positive, got {v_max}")));
    }
    let mut pixels = Vec::with_capacity(frame.rows() * frame.cols());
    for r in 0..frame.rows() {
        for c in 0..frame.cols() {
            let dx = frame.dx(r, c) as f64;
            let dy = frame.dy(r, c) as f64;
            let magnitude = dx.hypot(dy);
            if magnitude == 0.0 {
                pixels.push([0, 0, 0]);
                continue;
            }
            let hue = dy.atan2(dx).to_degrees().rem_euclid(360.0);
            pixels.push(hsv_to_rgb(hue, 1.0, (magnitude / v_max).min(1.0)));
        }
    }
    Ok(RgbImage {
        width: frame.cols(),
        height: frame.rows(),
        pixels,
    })
}
