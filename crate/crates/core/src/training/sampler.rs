//! Random-degradation batches.

use rand::Rng;

use crate::error::{Error, Result};
use crate::motion::{downsample_indices, MotionSequence};
use crate::tensor::Tensor;

use super::config::TrainConfig;

const MAX_FACTOR_DRAWS: usize = 16;

/// One degraded sequence with the frames it should reconstruct.
#[derive(Clone, Debug)]
pub struct BatchItem {
    /// Index of the source sequence in the pool.
    pub source: usize,
    pub factor: f64,
    /// Low-rate model input.
    pub input: MotionSequence,
    /// Query coordinates, normalized to the span of `input`.
    pub times: Vec<f64>,
    /// Original-rate frames at those coordinates, `times.len() × D`.
    pub targets: Tensor,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn queries(&self) -> usize {
        self.items.iter().map(|i| i.times.len()).sum()
    }
}

/// A degradation factor uniform on `[min_factor, max_factor]`.
pub fn draw_factor(cfg: &TrainConfig, rng: &mut impl Rng) -> f64 {
    if cfg.max_factor == cfg.min_factor {
        cfg.min_factor
    } else {
        rng.gen_range(cfg.min_factor..=cfg.max_factor)
    }
}

/// Degrades one `seq` by a freshly drawn factor and queries every original
/// frame covered by the degraded input.
///
/// The degraded input keeps source frames `0 = k₀ < … < k_last`; original
/// frame `j ≤ k_last` is queried at `t = j / k_last`. When the item would
/// exceed `budget` queries a random contiguous window of `budget` frames is
/// used instead.
pub fn sample_item(
    pool: &[MotionSequence],
    source: usize,
    cfg: &TrainConfig,
    budget: usize,
    rng: &mut impl Rng,
) -> Result<BatchItem> {
    let seq = &pool[source];
    for _ in 0..MAX_FACTOR_DRAWS {
        let factor = draw_factor(cfg, rng);
        let kept = downsample_indices(seq.len(), factor)?;
        if kept.len() < 2 {
            continue;
        }
        let input = seq.downsample(factor)?;
        let last = *kept.last().unwrap();
        let covered = last + 1;
        let window = covered.min(budget.max(2));
        let start = if window < covered { rng.gen_range(0..=covered - window) } else { 0 };
        let times: Vec<f64> = (start..start + window).map(|j| j as f64 / last as f64).collect();
        let targets = seq.range(start, start + window)?.frames().clone();
        return Ok(BatchItem { source, factor, input, times, targets });
    }
    Err(Error::invalid(format!(
        "sequence {source} ({} frames) is too short for factors up to {}",
        seq.len(),
        cfg.max_factor
    )))
}

/// Items from uniformly chosen sequences until `batch_size` queries are
/// collected; each item draws its own factor.
pub fn sample_batch(pool: &[MotionSequence], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Batch> {
    if pool.is_empty() {
        return Err(Error::invalid("empty sequence pool"));
    }
    let mut items = Vec::new();
    let mut total = 0;
    while total < cfg.batch_size {
        let source = rng.gen_range(0..pool.len());
        let item = sample_item(pool, source, cfg, cfg.batch_size - total, rng)?;
        total += item.times.len();
        items.push(item);
    }
    Ok(Batch { items })
}
