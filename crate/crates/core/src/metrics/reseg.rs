//! Unsupervised foreground extraction used before structural comparison of
//! reconstructions: Gaussian smoothing (σ = 1 px) followed by an Otsu global
//! threshold. No training data is involved and the result is deterministic.

use serde::{Deserialize, Serialize};

use super::ssim::gaussian_kernel;
use crate::error::{invalid, Result};
use crate::grid::Grid;

const BINS: usize = 256;
const SMOOTH_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resegmentation {
    /// 1 = foreground (the brighter class).
    pub mask: Grid<u8>,
    pub threshold: f64,
    /// Set when no threshold separates two classes; `mask` is then all zero.
    pub degenerate: bool,
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
    }
    i as usize
}

/// Separable Gaussian blur with half-sample symmetric boundaries, kernel
/// truncated at 4σ.
pub fn gaussian_blur(image: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let k = gaussian_kernel(2 * r as usize + 1, sigma);
    let (h, w) = image.dims();
    let src = image.as_slice();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * src[y * w + mirror(x as isize + d, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * tmp[mirror(y as isize + d, h) * w + x]).sum();
        }
    }
    Grid::new(h, w, out).expect("same dims")
}

/// Otsu threshold over a 256-bin histogram of values in `[lo, hi]`. Returns
/// `None` when every value falls into one bin.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12) {
        return None;
    }
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return None;
    }
    Some(lo + (best.1 + 1) as f64 * width)
}

pub fn unsupervised_resegment(image: &Grid<f64>) -> Result<Resegmentation> {
    if image.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("image contains non-finite values"));
    }
    let smooth = gaussian_blur(image, SMOOTH_SIGMA);
    let (h, w) = image.dims();
    match otsu_threshold(smooth.as_slice()) {
        Some(t) => Ok(Resegmentation { mask: smooth.map(|v| u8::from(v >= t)), threshold: t, degenerate: false }),
        None => Ok(Resegmentation { mask: Grid::filled(h, w, 0), threshold: f64::NAN, degenerate: true }),
    }
}
