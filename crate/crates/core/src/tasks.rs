//! Interpolation, inbetweening, extrapolation and dataset evaluation on top
//! of a trained [`Model`].

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{MetricReport, ReportRow};
use crate::model::Model;
use crate::motion::{downsample_indices, load_sequence, MotionSequence, Skeleton};
use crate::tensor::Tensor;

/// Anything that can fill in frames of a sequence at normalized times.
pub trait Reconstructor: Sync {
    fn reconstruct(&self, input: &MotionSequence, times: &[f64]) -> Result<Tensor>;
}

impl Reconstructor for Model {
    fn reconstruct(&self, input: &MotionSequence, times: &[f64]) -> Result<Tensor> {
        self.predict(input, times)
    }
}

/// Piecewise-linear interpolation between input frames, clamped outside
/// `[0, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearInterpolation;

/// Coordinates this close to a frame index are treated as on-grid.
const GRID_SNAP: f64 = 1e-9;

impl Reconstructor for LinearInterpolation {
    fn reconstruct(&self, input: &MotionSequence, times: &[f64]) -> Result<Tensor> {
        let n = input.len();
        let d = input.dim();
        let mut data = Vec::with_capacity(times.len() * d);
        for &t in times {
            let mut pos = (t * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            if (pos - pos.round()).abs() < GRID_SNAP {
                pos = pos.round();
            }
            let i = (pos.floor() as usize).min(n - 2);
            let w = pos - i as f64;
            if w == 0.0 {
                data.extend_from_slice(input.frame(i));
            } else if w == 1.0 {
                data.extend_from_slice(input.frame(i + 1));
            } else {
                let (a, b) = (input.frame(i), input.frame(i + 1));
                data.extend(a.iter().zip(b).map(|(x, y)| x + w * (y - x)));
            }
        }
        Tensor::new(vec![times.len(), d], data)
    }
}

/// `T' = round((T−1)·scale) + 1` uniform coordinates `k / (T'−1)`.
pub fn interpolation_times(len: usize, scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    if len < 2 {
        return Err(Error::invalid("sequence needs at least 2 frames"));
    }
    let out = ((len - 1) as f64 * scale).round() as usize + 1;
    if out < 2 {
        return Err(Error::invalid(format!("scale {scale} leaves fewer than 2 frames of {len}")));
    }
    Ok((0..out).map(|k| k as f64 / (out - 1) as f64).collect())
}

/// Resamples `seq` to `fps · scale`.
pub fn interpolate(model: &impl Reconstructor, seq: &MotionSequence, scale: f64) -> Result<MotionSequence> {
    let times = interpolation_times(seq.len(), scale)?;
    let frames = model.reconstruct(seq, &times)?;
    MotionSequence::new(frames, seq.fps() * scale, seq.layout())
}

/// A run of `len` hidden frames starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

impl Gap {
    /// Per-frame mask for a sequence of `frames`, `true` inside the gap.
    /// The gap must leave at least one visible frame on each side.
    pub fn mask(&self, frames: usize) -> Result<Vec<bool>> {
        if self.len > 0 && (self.start == 0 || self.start + self.len >= frames) {
            return Err(Error::invalid(format!(
                "gap {}..{} must lie strictly inside frames 0..{frames}",
                self.start,
                self.start + self.len
            )));
        }
        Ok((0..frames).map(|i| i >= self.start && i < self.start + self.len).collect())
    }
}

/// Fills the frames under `gap`, conditioning only on the visible frames.
/// Visible frames are copied through untouched.
pub fn inbetween(model: &Model, seq: &MotionSequence, gap: Gap) -> Result<MotionSequence> {
    let mask = gap.mask(seq.len())?;
    if gap.len == 0 {
        return Ok(seq.clone());
    }
    let span = (seq.len() - 1) as f64;
    let times: Vec<f64> = (gap.start..gap.start + gap.len).map(|i| i as f64 / span).collect();
    let pred = model.predict_masked(seq, &times, Some(&mask))?;
    let mut frames = seq.frames().clone();
    let d = seq.dim();
    frames.data_mut()[gap.start * d..(gap.start + gap.len) * d].copy_from_slice(pred.data());
    seq.with_frames(frames)
}

/// `count` uniform coordinates from `tmin` to `tmax` inclusive.
pub fn extrapolation_times(tmin: f64, tmax: f64, count: usize) -> Result<Vec<f64>> {
    if !(tmin.is_finite() && tmax.is_finite()) || tmax < tmin {
        return Err(Error::invalid(format!("invalid range [{tmin}, {tmax}]")));
    }
    match count {
        0 => Err(Error::invalid("extrapolation needs at least one query")),
        1 => Ok(vec![tmin]),
        _ => Ok((0..count).map(|k| tmin + (tmax - tmin) * k as f64 / (count - 1) as f64).collect()),
    }
}

/// Query count that keeps the input's frame spacing over `[tmin, tmax]`.
pub fn extrapolation_count(len: usize, tmin: f64, tmax: f64) -> usize {
    ((tmax - tmin) * (len - 1) as f64).round().max(0.0) as usize + 1
}

/// Frames at `count` uniform coordinates over `[tmin, tmax]`, `count × D`.
/// Coordinates outside `[0, 1]` see fully clamped clips.
pub fn extrapolate_frames(
    model: &impl Reconstructor,
    seq: &MotionSequence,
    tmin: f64,
    tmax: f64,
    count: usize,
) -> Result<Tensor> {
    model.reconstruct(seq, &extrapolation_times(tmin, tmax, count)?)
}

/// [`extrapolate_frames`] as a sequence whose frame rate keeps the query
/// spacing in real time. Needs `count ≥ 2`.
pub fn extrapolate(
    model: &impl Reconstructor,
    seq: &MotionSequence,
    tmin: f64,
    tmax: f64,
    count: usize,
) -> Result<MotionSequence> {
    let frames = extrapolate_frames(model, seq, tmin, tmax, count)?;
    if count < 2 || tmax == tmin {
        return Err(Error::invalid("an output sequence needs at least 2 distinct query times"));
    }
    let fps = seq.fps() * (count - 1) as f64 / ((tmax - tmin) * (seq.len() - 1) as f64);
    MotionSequence::new(frames, fps, seq.layout())
}

/// A dataset file that could not be read, with the reason.
pub type SkippedFile = (PathBuf, Error);

/// A named sequence, optionally with the skeleton its channels drive.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub sequence: MotionSequence,
    pub skeleton: Option<Skeleton>,
}

/// The degraded input and aligned ground truth for evaluating one sequence
/// at one factor: original frames `0..=k_last` are the targets at
/// `t = j / k_last`.
pub fn degrade_for_eval(seq: &MotionSequence, factor: f64) -> Result<(MotionSequence, MotionSequence, Vec<f64>)> {
    let input = seq.downsample(factor)?;
    let kept = downsample_indices(seq.len(), factor)?;
    let last = *kept.last().expect("downsample keeps frames");
    let truth = seq.range(0, last + 1)?;
    let times = (0..=last).map(|j| j as f64 / last as f64).collect();
    Ok((input, truth, times))
}

/// Scores one reconstruction of `sample` degraded by `factor`.
pub fn evaluate_sample(model: &impl Reconstructor, sample: &Sample, factor: f64) -> Result<MetricReport> {
    let (input, truth, times) = degrade_for_eval(&sample.sequence, factor)?;
    let pred = truth.with_frames(model.reconstruct(&input, &times)?)?;
    MetricReport::compute(&pred, &truth, sample.skeleton.as_ref())
}

/// Mean report per factor over every sample, in `factors` order.
/// Sequences are scored in parallel.
pub fn evaluate(
    model: &impl Reconstructor,
    dataset: &str,
    samples: &[Sample],
    factors: &[f64],
) -> Result<Vec<ReportRow>> {
    if samples.is_empty() {
        return Err(Error::invalid("no sequences to evaluate"));
    }
    factors
        .iter()
        .map(|&factor| {
            let reports = samples
                .par_iter()
                .map(|s| {
                    evaluate_sample(model, s, factor)
                        .map_err(|e| Error::invalid(format!("{} at x{factor}: {e}", s.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ReportRow {
                dataset: dataset.to_string(),
                scale: factor,
                sequences: reports.len(),
                report: MetricReport::mean(&reports)?,
            })
        })
        .collect()
}

/// Loads a sequence file, or every `.bvh` / `.ctmo` file of a directory in
/// name order. Unreadable files are skipped and returned with their errors.
pub fn load_dataset(path: &Path) -> Result<(Vec<Sample>, Vec<SkippedFile>)> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("bvh" | "ctmo")))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for file in files {
        match load_sequence(&file) {
            Ok((sequence, skeleton)) => samples.push(Sample {
                name: file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                sequence,
                skeleton,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", file.display());
                skipped.push((file, e));
            }
        }
    }
    Ok((samples, skipped))
}
