use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ArchConfig;

use super::loss::LossConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Query coordinates per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning-rate multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    /// Degradation factors are drawn uniformly from `[min_factor, max_factor]`.
    pub min_factor: f64,
    pub max_factor: f64,
    /// Optimizer steps per epoch; 0 means `ceil(total frames / batch_size)`.
    pub steps_per_epoch: usize,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 1000,
            decay_factor: 0.5,
            decay_every: 200,
            min_factor: 1.0,
            max_factor: 4.0,
            steps_per_epoch: 0,
            checkpoint_every: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must be in (0, 1], got {}", self.decay_factor));
        }
        if self.decay_every == 0 {
            return bad("decay_every must be >= 1".into());
        }
        if !(self.min_factor >= 1.0 && self.max_factor >= self.min_factor && self.max_factor.is_finite()) {
            return bad(format!("factor range [{}, {}] is invalid", self.min_factor, self.max_factor));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam hyperparameters out of range".into());
        }
        Ok(())
    }

    /// `lr₀ · decay^⌊epoch / period⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Everything a config file can set, as TOML tables `[model]`, `[train]`
/// and `[loss]`. Missing keys take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.epochs, 1000);
        assert_eq!((c.decay_factor, c.decay_every), (0.5, 200));
        assert_eq!((c.min_factor, c.max_factor), (1.0, 4.0));
        assert_eq!(LossConfig::default().lambda, 0.5);
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 1e-4);
        assert_eq!(c.lr_at(199), 1e-4);
        assert_eq!(c.lr_at(200), 5e-5);
        assert_eq!(c.lr_at(401), 2.5e-5);
        assert_eq!(c.lr_at(999), 1e-4 * 0.5f64.powi(4));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml("[model]\nscales = 4\n[loss]\nlambda = 0.0\n").unwrap();
        assert_eq!(cfg.model.scales, 4);
        assert_eq!(cfg.model.harmonics, 16);
        assert_eq!(cfg.loss.lambda, 0.0);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("[train]\nlearning_rat = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nmin_factor = 0.5\n").is_err());
        assert!(RunConfig::from_toml("[model]\nlatent = 10\ntoken_dim = 4\n").is_err());
    }
}
