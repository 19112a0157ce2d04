//! The conditional GAN: losses, conditional sampling, and the training loop.

pub mod checkpoint;
pub mod losses;
pub mod sampler;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use sampler::{ChosenCond, CondBatch, CondFreqColumn, CondFrequencies, CondSampler};
pub use train::{train, EpochLog, TrainedModel};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Vanilla,
    Wasserstein,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Vanilla => write!(f, "vanilla"),
            LossKind::Wasserstein => write!(f, "wasserstein"),
        }
    }
}

fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    500
}
fn default_pac() -> usize {
    10
}
fn default_noise_dim() -> usize {
    128
}
fn default_lr() -> f64 {
    2e-4
}
fn default_weight_decay() -> f64 {
    1e-6
}
fn default_betas() -> (f64, f64) {
    (0.5, 0.9)
}
fn default_tau() -> f64 {
    0.2
}
fn default_gp() -> f64 {
    10.0
}
fn default_t_collect() -> usize {
    50
}
fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}

/// Training hyperparameters. The defaults are the reference settings:
/// two hidden layers of 256, noise dimension 128, dropout 0.5, pac 10,
/// 200 epochs of batches of 500, Adam(2e-4, betas (0.5, 0.9), weight decay
/// 1e-6), gumbel temperature 0.2, gradient penalty 10.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_pac")]
    pub pac: usize,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "default_tau")]
    pub gumbel_temperature: f64,
    /// Gradient penalty coefficient (wasserstein only).
    #[serde(default = "default_gp")]
    pub gradient_penalty: f64,
    /// When set, replaces the gradient penalty with weight clipping at the
    /// given magnitude.
    #[serde(default)]
    pub weight_clip: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Epoch after which posterior moments are collected.
    #[serde(default = "default_t_collect")]
    pub t_collect: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossKind, seed: u64) -> Self {
        TrainConfig {
            loss,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            pac: default_pac(),
            noise_dim: default_noise_dim(),
            learning_rate: default_lr(),
            weight_decay: default_weight_decay(),
            adam_betas: default_betas(),
            gumbel_temperature: default_tau(),
            gradient_penalty: default_gp(),
            weight_clip: None,
            hidden: default_hidden(),
            t_collect: default_t_collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Usage("epochs and batch_size must be positive".into()));
        }
        if self.pac == 0 || !self.batch_size.is_multiple_of(self.pac) {
            return Err(Error::Usage(format!(
                "batch_size {} must be divisible by pac {}",
                self.batch_size, self.pac
            )));
        }
        if self.noise_dim == 0 {
            return Err(Error::Usage("noise_dim must be positive".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Usage("at least one hidden layer required".into()));
        }
        Ok(())
    }

    pub fn adam_config(&self) -> crate::nn::adam::AdamConfig {
        crate::nn::adam::AdamConfig {
            lr: self.learning_rate,
            betas: self.adam_betas,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = TrainConfig::new(LossKind::Wasserstein, 0);
        assert_eq!(c.epochs, 200);
        assert_eq!(c.batch_size, 500);
        assert_eq!(c.pac, 10);
        assert_eq!(c.noise_dim, 128);
        assert_eq!(c.learning_rate, 2e-4);
        assert_eq!(c.weight_decay, 1e-6);
        assert_eq!(c.adam_betas, (0.5, 0.9));
        assert_eq!(c.gumbel_temperature, 0.2);
        assert_eq!(c.gradient_penalty, 10.0);
        assert_eq!(c.hidden, vec![256, 256]);
        assert_eq!(c.t_collect, 50);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn batch_not_divisible_by_pac_rejected() {
        let mut c = TrainConfig::new(LossKind::Vanilla, 0);
        c.batch_size = 501;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_rejects_unknown_fields() {
        let json = r#"{"loss":"vanilla","seed":1,"bogus":2}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }
}
