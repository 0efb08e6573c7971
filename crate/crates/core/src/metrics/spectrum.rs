//! Normalized power spectrum similarity.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NPSS_MIN_FRAMES: usize = 4;

/// Squared DFT magnitudes of every column of a `T × D` array, including the
/// DC bin, as `D` vectors of length `T`.
pub fn power_spectra(x: &Tensor) -> Vec<Vec<f64>> {
    let (rows, cols) = (x.rows(), x.cols());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(rows);
    (0..cols)
        .map(|c| {
            let mut buf: Vec<Complex<f64>> = (0..rows).map(|r| Complex::new(x.get2(r, c), 0.0)).collect();
            fft.process(&mut buf);
            buf.iter().map(|z| z.norm_sqr()).collect()
        })
        .collect()
}

/// Truth-power-weighted mean over channels of the L1 gap between the
/// cumulative normalized power spectra of `pred` and `truth`.
///
/// Channels with zero truth power are skipped. A prediction channel with
/// zero power contributes an all-zero normalized spectrum.
pub fn npss(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() || truth.rank() != 2 {
        return Err(Error::invalid(format!(
            "NPSS inputs must be equal-shape T×D arrays, got {:?} and {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if truth.rows() < NPSS_MIN_FRAMES {
        return Err(Error::invalid(format!("NPSS needs at least {NPSS_MIN_FRAMES} frames, got {}", truth.rows())));
    }
    let ps = power_spectra(pred);
    let ts = power_spectra(truth);
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (p, t) in ps.iter().zip(&ts) {
        let tp: f64 = t.iter().sum();
        if tp == 0.0 {
            continue;
        }
        let pp: f64 = p.iter().sum();
        let (mut cp, mut ct, mut gap) = (0.0, 0.0, 0.0);
        for (a, b) in p.iter().zip(t) {
            if pp > 0.0 {
                cp += a / pp;
            }
            ct += b / tp;
            gap += (cp - ct).abs();
        }
        weighted += tp * gap;
        weight += tp;
    }
    if weight == 0.0 {
        return Err(Error::invalid("NPSS undefined: every ground-truth channel has zero power"));
    }
    Ok(weighted / weight)
}
