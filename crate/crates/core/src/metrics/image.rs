//! PSNR and SSIM over `T × D` motion arrays treated as single-channel images.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(pred: &Tensor, truth: &Tensor) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("metric inputs are empty"));
    }
    Ok(())
}

/// `max − min` over all elements.
pub fn data_range(t: &Tensor) -> f64 {
    let (lo, hi) = t
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Peak signal-to-noise ratio in dB with the truth's data range as peak.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let range = data_range(truth);
    if range == 0.0 {
        return Err(Error::invalid("PSNR undefined: ground truth is constant but prediction differs"));
    }
    Ok(10.0 * (range * range / mse).log10())
}

/// SSIM with the dynamic range taken from `truth`.
pub fn ssim(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_pair(pred, truth)?;
    let range = data_range(truth);
    if range == 0.0 {
        return if pred.data() == truth.data() {
            Ok(1.0)
        } else {
            Err(Error::invalid("SSIM undefined: ground truth is constant but prediction differs"))
        };
    }
    ssim_with_range(pred, truth, range)
}

/// SSIM with an explicit dynamic range.
///
/// Inputs of at least 11×11 use a Gaussian-weighted 11×11 window over every
/// fully contained position; smaller inputs use one window spanning the
/// whole array with uniform weights.
pub fn ssim_with_range(a: &Tensor, b: &Tensor, range: f64) -> Result<f64> {
    check_pair(a, b)?;
    if a.rank() != 2 {
        return Err(Error::invalid("SSIM expects a T×D array"));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::invalid(format!("SSIM dynamic range must be positive, got {range}")));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let (rows, cols) = (a.rows(), a.cols());
    let (x, y) = (a.data(), b.data());

    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        let w = vec![1.0 / (rows * cols) as f64; rows * cols];
        return Ok(window_ssim(x, y, cols, 0, 0, rows, cols, &w, c1, c2));
    }
    let kernel = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - SSIM_WINDOW {
        for c in 0..=cols - SSIM_WINDOW {
            total += window_ssim(x, y, cols, r, c, SSIM_WINDOW, SSIM_WINDOW, &kernel, c1, c2);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Normalized 11×11 Gaussian weights, row-major.
pub fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|&a| g.iter().map(move |&b| a * b)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

#[allow(clippy::too_many_arguments)]
fn window_ssim(
    x: &[f64],
    y: &[f64],
    stride: usize,
    r0: usize,
    c0: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    c1: f64,
    c2: f64,
) -> f64 {
    let at = |i: usize, j: usize| (r0 + i) * stride + c0 + j;
    let (mut mx, mut my) = (0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            let k = weights[i * w + j];
            mx += k * x[at(i, j)];
            my += k * y[at(i, j)];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            let k = weights[i * w + j];
            let dx = x[at(i, j)] - mx;
            let dy = y[at(i, j)] - my;
            vx += k * dx * dx;
            vy += k * dy * dy;
            cxy += k * dx * dy;
        }
    }
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}
