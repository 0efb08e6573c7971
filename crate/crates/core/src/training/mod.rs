//! Optimizing the network on randomly degraded sequences.

mod config;
mod loss;
mod sampler;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{RunConfig, TrainConfig};
pub use loss::{graph_loss, mse_loss, total_loss, velocity_loss, LossConfig, LossNodes};
pub use sampler::{draw_factor, sample_batch, sample_item, Batch, BatchItem};

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph};
use crate::model::{Model, QueryBatch};
use crate::motion::{FeatureStats, MotionSequence};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction over a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub first_moment: ParamStore,
    pub second_moment: ParamStore,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = params.zeros_like();
        Self { first_moment: zeros.clone(), second_moment: zeros, step: 0, beta1, beta2, epsilon }
    }

    pub fn from_config(params: &ParamStore, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.beta1, cfg.beta2, cfg.epsilon)
    }

    /// One update of `params` at learning rate `lr`. Fails without touching
    /// any state if a gradient is missing, misshapen or non-finite.
    pub fn update(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        for (name, p) in params.iter() {
            let g = grads.get(name).ok_or_else(|| Error::invalid(format!("no gradient for `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(Error::invalid(format!("gradient of `{name}` has shape {:?}", g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter `{name}`")));
            }
            if !self.first_moment.contains(name) {
                return Err(Error::invalid(format!("optimizer has no state for `{name}`")));
            }
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).unwrap();
            let m = self.first_moment.get_mut(name).unwrap();
            let v = self.second_moment.get_mut(name).unwrap();
            for (((pv, &gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Model parameters, optimizer state, schedule position and the sampling
/// RNG.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub optimizer: Adam,
    pub epoch: usize,
    pub lr: f64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model: Model, cfg: &TrainConfig) -> Self {
        Self {
            optimizer: Adam::from_config(model.params(), cfg),
            model,
            epoch: 0,
            lr: cfg.learning_rate,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }

    pub fn adam_step(&mut self, grads: &Gradients) -> Result<()> {
        self.optimizer.update(self.model.params_mut(), grads, self.lr)
    }
}

/// Per-epoch means of the per-element losses.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mse: f64,
    pub velocity: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

impl LossHistory {
    /// `epoch,lr,mse,velocity,total`, values printed at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,mse,velocity,total\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.lr, r.mse, r.velocity, r.total));
        }
        out
    }
}

/// Losses of one optimizer step.
#[derive(Clone, Copy, Debug)]
pub struct StepLoss {
    /// Summed objective that was differentiated.
    pub objective: f64,
    pub mse_mean: f64,
    pub velocity_mean: f64,
}

/// `(first row, row count)` of each item in a stacked batch.
pub type Segments = Vec<(usize, usize)>;

/// Stacks the items of a batch into one set of model queries, targets and
/// row segments.
pub fn stack_batch(model: &Model, batch: &Batch) -> Result<(QueryBatch, Tensor, Segments)> {
    let dim = model.dim();
    let mut times = Vec::new();
    let mut inputs: Vec<Vec<f64>> = vec![Vec::new(); model.arch().scales];
    let mut targets = Vec::new();
    let mut segments = Vec::with_capacity(batch.items.len());
    for item in &batch.items {
        let q = model.queries(&item.input, &item.times, None)?;
        segments.push((times.len(), item.times.len()));
        times.extend_from_slice(&q.times);
        for (acc, t) in inputs.iter_mut().zip(&q.encoder_inputs) {
            acc.extend_from_slice(t.data());
        }
        targets.extend_from_slice(item.targets.data());
    }
    let rows = times.len();
    let width = model.arch().encoder_input(dim);
    let encoder_inputs = inputs
        .into_iter()
        .map(|d| Tensor::new(vec![rows, width], d))
        .collect::<Result<Vec<_>>>()?;
    Ok((QueryBatch { times, encoder_inputs }, Tensor::new(vec![rows, dim], targets)?, segments))
}

/// Forward, loss and gradient for one batch of normalized data.
pub fn batch_gradient(model: &Model, batch: &Batch, loss_cfg: &LossConfig) -> Result<(StepLoss, Gradients)> {
    let (queries, targets, segments) = stack_batch(model, batch)?;
    let mut g = Graph::new();
    let pred = model.forward(&mut g, &queries)?;
    let nodes = graph_loss(&mut g, pred, &targets, &segments, loss_cfg)?;
    let grads = g.gradient(nodes.total)?;
    let loss = StepLoss {
        objective: g.value(nodes.total).item(),
        mse_mean: g.value(nodes.mse).item() / nodes.mse_count.max(1) as f64,
        velocity_mean: g.value(nodes.velocity).item() / nodes.velocity_count.max(1) as f64,
    };
    Ok((loss, grads))
}

/// Optimizer steps per epoch for `pool`.
pub fn steps_per_epoch(pool: &[MotionSequence], cfg: &TrainConfig) -> usize {
    if cfg.steps_per_epoch > 0 {
        return cfg.steps_per_epoch;
    }
    let frames: usize = pool.iter().map(MotionSequence::len).sum();
    frames.div_ceil(cfg.batch_size).max(1)
}

/// Trains `state.model` on `pool` for `cfg.epochs` epochs.
///
/// Feature statistics are computed from the pool and stored in the model
/// before the first step. If `checkpoint` is given and
/// `cfg.checkpoint_every > 0`, the model is written there every that many
/// epochs. A non-finite loss or gradient aborts with [`Error::Numeric`];
/// the state then still holds the parameters from before the failing step.
pub fn train(
    pool: &[MotionSequence],
    state: &mut TrainState,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    checkpoint: Option<&Path>,
) -> Result<LossHistory> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::invalid("empty sequence pool"));
    }
    for seq in pool {
        state.model.check_compatible(seq)?;
    }
    if state.optimizer.step == 0 {
        state.model.set_stats(FeatureStats::from_pool(pool)?)?;
    }
    let normalized: Vec<MotionSequence> =
        pool.iter().map(|s| state.model.stats().normalize(s)).collect::<Result<_>>()?;
    let steps = steps_per_epoch(pool, cfg);
    let mut history = LossHistory::default();

    let first_epoch = state.epoch;
    for epoch in first_epoch..first_epoch + cfg.epochs {
        state.lr = cfg.lr_at(epoch);
        let (mut mse, mut vel) = (0.0, 0.0);
        for step in 0..steps {
            let batch = sample_batch(&normalized, cfg, &mut state.rng)?;
            let (loss, grads) = batch_gradient(&state.model, &batch, loss_cfg).map_err(|e| match e {
                Error::NonFinite { node } => {
                    Error::Numeric(format!("non-finite value at {node} in epoch {epoch}, step {step}"))
                }
                other => other,
            })?;
            if !loss.objective.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, step {step}")));
            }
            state.adam_step(&grads)?;
            mse += loss.mse_mean;
            vel += loss.velocity_mean;
        }
        let (mse, vel) = (mse / steps as f64, vel / steps as f64);
        history.records.push(EpochRecord {
            epoch,
            lr: state.lr,
            mse,
            velocity: vel,
            total: mse + loss_cfg.lambda * vel,
        });
        log::debug!("epoch {epoch}: lr {:.3e} mse {mse:.6e} velocity {vel:.6e}", state.lr);
        state.epoch = epoch + 1;
        if let Some(path) = checkpoint {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                state.model.save(path)?;
            }
        }
    }
    Ok(history)
}
