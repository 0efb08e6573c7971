//! Motion sequences and the data plumbing around them.
//!
//! Time is normalized per sequence: frame `i` of a `T`-frame sequence sits at
//! `t = i / (T − 1)`, so both endpoints are valid queries.

mod bvh;
mod quat;
mod skeleton;

use std::io::{Read, Write};
use std::path::Path;

pub use bvh::{parse_bvh, write_bvh};
pub use quat::Quat;
pub use skeleton::{Channel, GlobalPose, Joint, Pose, Skeleton, UNIT_TOLERANCE};

use crate::error::{Error, Result};
use crate::params::{read_f64, read_u32, read_u64};
use crate::tensor::Tensor;

/// What the feature axis of a sequence encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureLayout {
    /// Opaque feature vectors of any width (HumanML3D-style 263-d data, say).
    Raw,
    /// Root translation followed by one `(w, x, y, z)` quaternion per joint.
    JointQuat { joints: usize },
    /// BVH channel values in skeleton order, rotations in degrees.
    BvhChannels { channels: usize },
}

impl FeatureLayout {
    fn check(self, dim: usize) -> Result<()> {
        let expected = match self {
            FeatureLayout::Raw => return Ok(()),
            FeatureLayout::JointQuat { joints } => 3 + 4 * joints,
            FeatureLayout::BvhChannels { channels } => channels,
        };
        if expected != dim {
            return Err(Error::invalid(format!("layout {self:?} needs {expected} features, data has {dim}")));
        }
        Ok(())
    }

    fn tag(self) -> (u32, u32) {
        match self {
            FeatureLayout::Raw => (0, 0),
            FeatureLayout::JointQuat { joints } => (1, joints as u32),
            FeatureLayout::BvhChannels { channels } => (2, channels as u32),
        }
    }

    fn from_tag(tag: u32, param: u32) -> Result<Self> {
        Ok(match tag {
            0 => FeatureLayout::Raw,
            1 => FeatureLayout::JointQuat { joints: param as usize },
            2 => FeatureLayout::BvhChannels { channels: param as usize },
            other => return Err(Error::format(format!("unknown layout tag {other}"))),
        })
    }
}

/// A `T × D` array of frames sampled at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    frames: Tensor,
    fps: f64,
    layout: FeatureLayout,
}

impl MotionSequence {
    pub fn new(frames: Tensor, fps: f64, layout: FeatureLayout) -> Result<Self> {
        if frames.rank() != 2 {
            return Err(Error::invalid(format!("frames must be T×D, got {:?}", frames.shape())));
        }
        if frames.rows() < 2 {
            return Err(Error::invalid(format!("a sequence needs at least 2 frames, got {}", frames.rows())));
        }
        if frames.cols() < 1 {
            return Err(Error::invalid("a sequence needs at least one feature"));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if !frames.all_finite() {
            return Err(Error::invalid("sequence contains non-finite values"));
        }
        layout.check(frames.cols())?;
        Ok(Self { frames, fps, layout })
    }

    pub fn from_rows(rows: &[Vec<f64>], fps: f64) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?, fps, FeatureLayout::Raw)
    }

    /// Frame count `T`.
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature width `D`.
    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        self.frames.row(i)
    }

    /// Normalized coordinate of frame `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        i as f64 / (self.len() - 1) as f64
    }

    pub fn with_frames(&self, frames: Tensor) -> Result<Self> {
        Self::new(frames, self.fps, self.layout)
    }

    /// Keeps the listed frames in order.
    pub fn select(&self, indices: &[usize], fps: f64) -> Result<Self> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        Self::new(Tensor::new(vec![indices.len(), d], data)?, fps, self.layout)
    }

    /// Frames `[start, end)`.
    pub fn range(&self, start: usize, end: usize) -> Result<Self> {
        let idx: Vec<usize> = (start..end).collect();
        self.select(&idx, self.fps)
    }

    /// Lowers the frame rate by `factor`, keeping frame `round(k·factor)` for
    /// `k = 0, 1, …` while it exists.
    pub fn downsample(&self, factor: f64) -> Result<Self> {
        let idx = downsample_indices(self.len(), factor)?;
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "downsampling {} frames by {factor} leaves {} frame(s)",
                self.len(),
                idx.len()
            )));
        }
        if factor == 1.0 {
            return Ok(self.clone());
        }
        self.select(&idx, self.fps / factor)
    }

    /// `N` frames on a stride-`2^(scale−1)` grid centred on the frame nearest
    /// `t`, clamped to the sequence.
    pub fn extract_clip(&self, t: f64, scale: usize, frames: usize) -> Clip {
        self.extract_clip_masked(t, scale, frames, None)
    }

    /// Like [`extract_clip`](Self::extract_clip), but slots landing on masked
    /// frames (`mask[i] == true`) are replaced by the nearest visible frame,
    /// the earlier one on ties.
    pub fn extract_clip_masked(&self, t: f64, scale: usize, frames: usize, mask: Option<&[bool]>) -> Clip {
        let n = self.len();
        let span = (n - 1) as f64;
        let center = (t * span).round() as i64;
        let stride = 1i64 << (scale.max(1) - 1);
        let half = (frames as i64 - 1) / 2;
        let d = self.dim();
        let mut clip = Clip {
            indices: Vec::with_capacity(frames),
            offsets: Vec::with_capacity(frames),
            values: Vec::with_capacity(frames * d),
        };
        for j in 0..frames as i64 {
            let grid = center + stride * (j - half);
            let mut idx = grid.clamp(0, n as i64 - 1) as usize;
            if let Some(mask) = mask {
                idx = nearest_visible(mask, idx);
            }
            clip.indices.push(idx);
            clip.offsets.push(grid as f64 / span - t);
            clip.values.extend_from_slice(self.frame(idx));
        }
        clip
    }

    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SEQ_MAGIC)?;
        w.write_all(&SEQ_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.fps.to_le_bytes())?;
        let (tag, param) = self.layout.tag();
        w.write_all(&tag.to_le_bytes())?;
        w.write_all(&param.to_le_bytes())?;
        for v in self.frames.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SEQ_MAGIC {
            return Err(Error::format("not a motion sequence file (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != SEQ_VERSION {
            return Err(Error::format(format!("unsupported sequence version {version}")));
        }
        let t = read_u64(r)? as usize;
        let d = read_u64(r)? as usize;
        let fps = read_f64(r)?;
        let layout = FeatureLayout::from_tag(read_u32(r)?, read_u32(r)?)?;
        let total = t.checked_mul(d).ok_or_else(|| Error::format("frame count overflow"))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(read_f64(r)?);
        }
        Self::new(Tensor::new(vec![t, d], data)?, fps, layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(&mut f)
    }

    /// `frame,time,f0,f1,…` with time in seconds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,time");
        for j in 0..self.dim() {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{i},{}", i as f64 / self.fps));
            for v in self.frame(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Per-frame poses for joint-quaternion or BVH-channel layouts.
    pub fn poses(&self, skeleton: &Skeleton) -> Result<Vec<Pose>> {
        (0..self.len())
            .map(|i| match self.layout {
                FeatureLayout::JointQuat { .. } => Pose::from_features(self.frame(i)),
                FeatureLayout::BvhChannels { .. } => skeleton.pose_from_channels(self.frame(i)),
                FeatureLayout::Raw => Err(Error::invalid("raw feature vectors carry no pose")),
            })
            .collect()
    }

    /// Converts a BVH-channel sequence to the joint-quaternion layout.
    pub fn to_joint_quat(&self, skeleton: &Skeleton) -> Result<Self> {
        let poses = self.poses(skeleton)?;
        let rows: Vec<Vec<f64>> = poses.iter().map(Pose::to_features).collect();
        Self::new(Tensor::from_rows(&rows)?, self.fps, FeatureLayout::JointQuat { joints: skeleton.len() })
    }
}

pub const SEQ_MAGIC: &[u8; 8] = b"CTMOSEQ\0";
pub const SEQ_VERSION: u32 = 1;

fn nearest_visible(mask: &[bool], idx: usize) -> usize {
    if !mask[idx] {
        return idx;
    }
    for step in 1..mask.len() {
        if idx >= step && !mask[idx - step] {
            return idx - step;
        }
        if idx + step < mask.len() && !mask[idx + step] {
            return idx + step;
        }
    }
    idx
}

/// Source indices kept by [`MotionSequence::downsample`]: `round(k·factor)`
/// (half away from zero) for every `k` with a result below `len`.
pub fn downsample_indices(len: usize, factor: f64) -> Result<Vec<usize>> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("downsample factor must be >= 1, got {factor}")));
    }
    let mut out = Vec::new();
    for k in 0.. {
        let idx = (k as f64 * factor).round() as usize;
        if idx >= len {
            break;
        }
        out.push(idx);
    }
    Ok(out)
}

/// A local window of frames around a query time.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    /// Source frame of every slot after clamping.
    pub indices: Vec<usize>,
    /// Unclamped grid time minus the query time, in normalized units.
    pub offsets: Vec<f64>,
    /// `N × D` frame values, row-major.
    pub values: Vec<f64>,
}

/// Per-feature mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Features whose spread falls below this keep unit scale.
    pub const MIN_STD: f64 = 1e-8;

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Statistics over every frame of every sequence.
    pub fn from_pool(pool: &[MotionSequence]) -> Result<Self> {
        let first = pool.first().ok_or_else(|| Error::invalid("empty sequence pool"))?;
        let d = first.dim();
        let mut count = 0usize;
        let mut mean = vec![0.0; d];
        for seq in pool {
            if seq.dim() != d {
                return Err(Error::invalid(format!("pool mixes feature widths {d} and {}", seq.dim())));
            }
            for i in 0..seq.len() {
                for (m, v) in mean.iter_mut().zip(seq.frame(i)) {
                    *m += v;
                }
            }
            count += seq.len();
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; d];
        for seq in pool {
            for i in 0..seq.len() {
                for ((s, v), m) in var.iter_mut().zip(seq.frame(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd < Self::MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let d = seq.dim();
        let mut frames = seq.frames().clone();
        for row in frames.data_mut().chunks_mut(d) {
            self.normalize_row(row);
        }
        seq.with_frames(frames)
    }

    pub fn normalize_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn denormalize_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Reads `.bvh` or the binary sequence format, chosen by extension.
pub fn load_sequence(path: &Path) -> Result<(MotionSequence, Option<Skeleton>)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("bvh") => {
            let (sk, seq) = parse_bvh(&std::fs::read(path)?)?;
            Ok((seq, Some(sk)))
        }
        _ => Ok((MotionSequence::load(path)?, None)),
    }
}
