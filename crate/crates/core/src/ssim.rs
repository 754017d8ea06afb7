//! Structural similarity (SSIM) with a uniform square window.
//!
//! Local statistics use the sample (N−1) covariance, and the score is the mean
//! of the local index over every fully contained window position (no
//! padding). With the default parameters this matches scikit-image's
//! `structural_similarity(..., gaussian_weights=False, data_range=1.0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glyphs::GlyphBitmap;

#[derive(Debug, Error, PartialEq)]
pub enum SsimError {
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    Dimension(u32, u32, u32, u32),
    #[error("image {width}x{height} is smaller than the {window}px window")]
    Window { width: u32, height: u32, window: u32 },
    #[error("invalid SSIM parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window: u32,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), SsimError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(SsimError::Params(format!("window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(SsimError::Params("k1, k2 and dynamic_range must be > 0".into()));
        }
        Ok(())
    }

    fn constants(&self) -> (f64, f64) {
        let c1 = (self.k1 * self.dynamic_range).powi(2);
        let c2 = (self.k2 * self.dynamic_range).powi(2);
        (c1, c2)
    }
}

/// Summed-area table with a zero first row/column.
struct Integral {
    stride: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new<F: Fn(usize) -> f64>(width: usize, height: usize, f: F) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += f(y * width + x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn window(&self, x: usize, y: usize, w: usize) -> f64 {
        let s = self.stride;
        self.sums[(y + w) * s + x + w] - self.sums[y * s + x + w] - self.sums[(y + w) * s + x]
            + self.sums[y * s + x]
    }
}

/// Mean SSIM over raw row-major buffers of identical shape.
pub fn ssim_buffers(a: &[f32], b: &[f32], width: u32, height: u32, p: &SsimParams) -> Result<f64, SsimError> {
    p.validate()?;
    if width < p.window || height < p.window {
        return Err(SsimError::Window {
            width,
            height,
            window: p.window,
        });
    }
    let (w, h) = (width as usize, height as usize);
    let get_a = |i: usize| a[i] as f64;
    let get_b = |i: usize| b[i] as f64;
    let sa = Integral::new(w, h, get_a);
    let sb = Integral::new(w, h, get_b);
    let saa = Integral::new(w, h, |i| get_a(i) * get_a(i));
    let sbb = Integral::new(w, h, |i| get_b(i) * get_b(i));
    let sab = Integral::new(w, h, |i| get_a(i) * get_b(i));

    let win = p.window as usize;
    let np = (win * win) as f64;
    let cov_norm = np / (np - 1.0);
    let (c1, c2) = p.constants();

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - win {
        for x in 0..=w - win {
            let mu_a = sa.window(x, y, win) / np;
            let mu_b = sb.window(x, y, win) / np;
            let var_a = cov_norm * (saa.window(x, y, win) / np - mu_a * mu_a);
            let var_b = cov_norm * (sbb.window(x, y, win) / np - mu_b * mu_b);
            let cov = cov_norm * (sab.window(x, y, win) / np - mu_a * mu_b);
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean SSIM between two bitmaps of identical size.
pub fn ssim(a: &GlyphBitmap, b: &GlyphBitmap, p: &SsimParams) -> Result<f64, SsimError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(SsimError::Dimension(a.width(), a.height(), b.width(), b.height()));
    }
    ssim_buffers(a.pixels(), b.pixels(), a.width(), a.height(), p)
}
