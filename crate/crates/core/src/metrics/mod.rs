//! Scores comparing reconstructed motion against ground truth.

mod image;
mod pose;
mod spectrum;

pub use image::{data_range, gaussian_window, psnr, ssim, ssim_with_range, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use pose::{l2p, l2p_l2q, l2q};
pub use spectrum::{npss, power_spectra, NPSS_MIN_FRAMES};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::motion::{FeatureLayout, MotionSequence, Skeleton};
use crate::tensor::Tensor;

/// Scores for one reconstruction, or means over several.
///
/// `psnr` is `f64::INFINITY` for identical inputs. Pose and spectrum scores
/// are absent when the sequence carries no skeleton or is too short.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub l2p: Option<f64>,
    pub l2q: Option<f64>,
    pub npss: Option<f64>,
}

impl MetricReport {
    /// Scores `pred` against `truth`. Pose errors need a skeleton and a pose
    /// layout; NPSS uses rotation channels (all channels for raw features).
    pub fn compute(pred: &MotionSequence, truth: &MotionSequence, skeleton: Option<&Skeleton>) -> Result<Self> {
        if pred.layout() != truth.layout() {
            return Err(Error::invalid("prediction and truth use different feature layouts"));
        }
        let psnr = psnr(pred.frames(), truth.frames())?;
        let ssim = ssim(pred.frames(), truth.frames())?;
        let (l2p, l2q) = match (skeleton, truth.layout()) {
            (Some(sk), FeatureLayout::JointQuat { .. } | FeatureLayout::BvhChannels { .. }) => {
                let (p, q) = l2p_l2q(sk, &pred.poses(sk)?, &truth.poses(sk)?)?;
                (Some(p), Some(q))
            }
            _ => (None, None),
        };
        let npss = if truth.len() >= NPSS_MIN_FRAMES {
            let channels = angular_channels(truth.layout(), skeleton, truth.dim());
            if channels.is_empty() {
                None
            } else {
                let p = select_columns(pred.frames(), &channels)?;
                let t = select_columns(truth.frames(), &channels)?;
                Some(npss(&p, &t)?)
            }
        } else {
            None
        };
        Ok(Self { psnr, ssim, l2p, l2q, npss })
    }

    /// Field-wise mean. Optional scores are averaged only when every report
    /// has them.
    pub fn mean(reports: &[MetricReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::invalid("no reports to aggregate"));
        }
        let n = reports.len() as f64;
        let opt = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
            reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        Ok(Self {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            l2p: opt(|r| r.l2p),
            l2q: opt(|r| r.l2q),
            npss: opt(|r| r.npss),
        })
    }
}

fn angular_channels(layout: FeatureLayout, skeleton: Option<&Skeleton>, dim: usize) -> Vec<usize> {
    match layout {
        FeatureLayout::Raw => (0..dim).collect(),
        FeatureLayout::JointQuat { .. } => (3..dim).collect(),
        FeatureLayout::BvhChannels { .. } => skeleton.map(Skeleton::rotation_channel_indices).unwrap_or_default(),
    }
}

fn select_columns(x: &Tensor, cols: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(x.rows() * cols.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        data.extend(cols.iter().map(|&c| row[c]));
    }
    Tensor::matrix(x.rows(), cols.len(), data)
}

/// One aggregated line of an evaluation table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub scale: f64,
    pub sequences: usize,
    pub report: MetricReport,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_metric).unwrap_or_default()
}

/// `dataset,scale,sequences,psnr,ssim,l2p,l2q,npss`; absent scores are empty.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("dataset,scale,sequences,psnr,ssim,l2p,l2q,npss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset,
            r.scale,
            r.sequences,
            fmt_metric(r.report.psnr),
            fmt_metric(r.report.ssim),
            fmt_opt(r.report.l2p),
            fmt_opt(r.report.l2q),
            fmt_opt(r.report.npss),
        );
    }
    out
}

/// Fixed-width text table with one row per (dataset, scale).
pub fn report_table(rows: &[ReportRow]) -> String {
    let header = ["dataset", "scale", "n", "PSNR", "SSIM", "L2P", "L2Q", "NPSS"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let f = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.4}") };
            let o = |v: Option<f64>| v.map(f).unwrap_or_else(|| "-".to_string());
            [
                r.dataset.clone(),
                format!("x{}", r.scale),
                r.sequences.to_string(),
                f(r.report.psnr),
                f(r.report.ssim),
                o(r.report.l2p),
                o(r.report.l2q),
                o(r.report.npss),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, items: &[String]| {
        let parts: Vec<String> = items
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for row in &cells {
        line(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[Vec<f64>]) -> MotionSequence {
        MotionSequence::from_rows(rows, 30.0).unwrap()
    }

    #[test]
    fn self_report() {
        let s = seq(&(0..6).map(|i| vec![i as f64, (i * i) as f64]).collect::<Vec<_>>());
        let r = MetricReport::compute(&s, &s, None).unwrap();
        assert_eq!(r.psnr, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.npss, Some(0.0));
        assert_eq!(r.l2p, None);
    }

    #[test]
    fn mean_of_two() {
        let a = MetricReport { psnr: 20.0, ssim: 0.9, l2p: None, l2q: None, npss: Some(0.1) };
        let b = MetricReport { psnr: 30.0, ssim: 0.7, l2p: None, l2q: None, npss: Some(0.3) };
        let m = MetricReport::mean(&[a.clone(), b]).unwrap();
        assert_eq!(m.psnr, 25.0);
        assert!((m.ssim - 0.8).abs() < 1e-15);
        assert!((m.npss.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(MetricReport::mean(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn csv_and_table() {
        let rows = vec![ReportRow {
            dataset: "toy".into(),
            scale: 2.0,
            sequences: 1,
            report: MetricReport { psnr: f64::INFINITY, ssim: 1.0, l2p: None, l2q: None, npss: Some(0.0) },
        }];
        assert_eq!(report_csv(&rows), "dataset,scale,sequences,psnr,ssim,l2p,l2q,npss\ntoy,2,1,inf,1,,,0\n");
        let table = report_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("dataset"));
        assert!(lines[2].contains("inf") && lines[2].contains("x2"));
    }
}
