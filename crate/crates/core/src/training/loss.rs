//! Reconstruction and velocity losses.
//!
//! Both are sums over frames of squared L2 norms; per-element means are kept
//! alongside for logging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the velocity term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

fn check_shapes(pred: &Tensor, truth: &Tensor) -> Result<()> {
    if pred.shape() != truth.shape() || pred.rank() != 2 {
        return Err(Error::Shape {
            node: "loss".into(),
            detail: format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape()),
        });
    }
    Ok(())
}

/// `Σₜ ‖mₜ − m̂ₜ‖²` over `T × D` frames.
pub fn mse_loss(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `Σₜ ‖(mₜ₊₁ − mₜ) − (m̂ₜ₊₁ − m̂ₜ)‖²`.
pub fn velocity_loss(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_shapes(pred, truth)?;
    if pred.rows() < 2 {
        return Err(Error::invalid("velocity loss needs at least 2 frames"));
    }
    let mut total = 0.0;
    for t in 0..pred.rows() - 1 {
        for j in 0..pred.cols() {
            let v = pred.get2(t + 1, j) - pred.get2(t, j);
            let v_hat = truth.get2(t + 1, j) - truth.get2(t, j);
            total += (v - v_hat) * (v - v_hat);
        }
    }
    Ok(total)
}

/// `mse + λ·velocity`.
pub fn total_loss(pred: &Tensor, truth: &Tensor, cfg: &LossConfig) -> Result<f64> {
    Ok(mse_loss(pred, truth)? + cfg.lambda * velocity_loss(pred, truth)?)
}

/// Loss nodes of a training graph.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub mse: NodeId,
    pub velocity: NodeId,
    pub total: NodeId,
    /// Element counts behind the two sums.
    pub mse_count: usize,
    pub velocity_count: usize,
}

/// Loss over a batch of stacked `rows × D` predictions made of contiguous
/// `segments` (`(start, len)` row ranges). Velocities never span two segments.
pub fn graph_loss(
    g: &mut Graph,
    pred: NodeId,
    truth: &Tensor,
    segments: &[(usize, usize)],
    cfg: &LossConfig,
) -> Result<LossNodes> {
    if g.shape(pred) != truth.shape() || truth.rank() != 2 {
        return Err(Error::Shape {
            node: "loss".into(),
            detail: format!("prediction {:?} vs truth {:?}", g.shape(pred), truth.shape()),
        });
    }
    let (rows, d) = (truth.rows(), truth.cols());
    let target = g.constant(truth.clone());
    let diff = g.sub(pred, target)?;
    let sq = g.mul(diff, diff)?;
    let mse = g.sum(sq)?;

    let mut mask = vec![0.0; rows.saturating_sub(1) * d];
    let mut pairs = 0;
    for &(start, len) in segments {
        if start + len > rows {
            return Err(Error::invalid("loss segment exceeds the batch"));
        }
        for r in start..(start + len).saturating_sub(1) {
            mask[r * d..(r + 1) * d].iter_mut().for_each(|m| *m = 1.0);
            pairs += 1;
        }
    }
    let velocity = if rows >= 2 {
        let next = g.slice(diff, 0, 1, rows)?;
        let prev = g.slice(diff, 0, 0, rows - 1)?;
        let dv = g.sub(next, prev)?;
        let mask = g.constant(Tensor::new(vec![rows - 1, d], mask)?);
        let dv = g.mul(dv, mask)?;
        let dv2 = g.mul(dv, dv)?;
        g.sum(dv2)?
    } else {
        g.constant(Tensor::scalar(0.0))
    };
    let weighted = g.scale(velocity, cfg.lambda)?;
    let total = g.add(mse, weighted)?;
    Ok(LossNodes { mse, velocity, total, mse_count: rows * d, velocity_count: pairs * d })
}
