//! Experiment configuration and orchestration: train -> synthesize ->
//! evaluate sweeps with idempotent, seed-addressed outputs.

mod report;
mod sweep;

pub use report::{write_ru_map_csv, write_ru_map_svg, RuRow};
pub use sweep::{
    evaluate_dir, load_experiment_data, run_sweep, train_all, train_paths, ExperimentData,
    SweepOutcome, SynthSidecar, TrainPaths,
};

use crate::data::ColumnKind;
use crate::error::{Error, Result};
use crate::eval::UtilitySpec;
use crate::gan::{LossKind, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn default_seed_count() -> usize {
    5
}
fn default_k_list() -> Vec<usize> {
    vec![0, 30, 100, 150]
}
fn default_alpha_list() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0]
}
fn default_s_list() -> Vec<usize> {
    vec![1]
}
fn default_replicates() -> usize {
    5
}
fn default_bn_batches() -> usize {
    crate::swag::DEFAULT_BN_BATCHES
}
fn default_phi() -> f64 {
    0.75
}
fn default_t_collect() -> usize {
    50
}
fn default_losses() -> Vec<LossKind> {
    vec![LossKind::Vanilla, LossKind::Wasserstein]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpTrain {
    #[serde(default = "default_losses")]
    pub losses: Vec<LossKind>,
    #[serde(default = "crate::exp::defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "crate::exp::defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "crate::exp::defaults::pac")]
    pub pac: usize,
    #[serde(default = "crate::exp::defaults::noise_dim")]
    pub noise_dim: usize,
    #[serde(default = "crate::exp::defaults::lr")]
    pub learning_rate: f64,
    #[serde(default = "crate::exp::defaults::weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "crate::exp::defaults::betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "crate::exp::defaults::tau")]
    pub gumbel_temperature: f64,
    #[serde(default = "crate::exp::defaults::gp")]
    pub gradient_penalty: f64,
    #[serde(default)]
    pub weight_clip: Option<f64>,
    #[serde(default = "crate::exp::defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "crate::exp::defaults::max_modes")]
    pub max_modes: usize,
}

pub(crate) mod defaults {
    pub fn epochs() -> usize {
        200
    }
    pub fn batch_size() -> usize {
        500
    }
    pub fn pac() -> usize {
        10
    }
    pub fn noise_dim() -> usize {
        128
    }
    pub fn lr() -> f64 {
        2e-4
    }
    pub fn weight_decay() -> f64 {
        1e-6
    }
    pub fn betas() -> (f64, f64) {
        (0.5, 0.9)
    }
    pub fn tau() -> f64 {
        0.2
    }
    pub fn gp() -> f64 {
        10.0
    }
    pub fn hidden() -> Vec<usize> {
        vec![256, 256]
    }
    pub fn max_modes() -> usize {
        crate::data::DEFAULT_MAX_MODES
    }
}

impl Default for ExpTrain {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpSwag {
    #[serde(default = "default_k_list")]
    pub k: Vec<usize>,
    #[serde(default = "default_alpha_list")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_t_collect")]
    pub t_collect: usize,
}

impl Default for ExpSwag {
    fn default() -> Self {
        ExpSwag {
            k: default_k_list(),
            alpha: default_alpha_list(),
            t_collect: default_t_collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpSynthesis {
    pub n_sample: usize,
    #[serde(default = "crate::exp::defaults::batch_size")]
    pub batch: usize,
    #[serde(default = "default_s_list")]
    pub s: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_bn_batches")]
    pub bn_batches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpEval {
    pub spec: UtilitySpec,
    #[serde(default = "default_phi")]
    pub phi: f64,
}

/// Full experiment description, loaded from one JSON document. Unknown keys
/// are rejected. Relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub schema_overrides: BTreeMap<String, ColumnKind>,
    /// Root seed; every cell derives its own child seed from it.
    #[serde(default)]
    pub seed: u64,
    /// Training seed labels; defaults to 0..5.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub train: ExpTrain,
    #[serde(default)]
    pub swag: ExpSwag,
    pub synthesis: ExpSynthesis,
    pub eval: ExpEval,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.losses.is_empty() {
            return Err(Error::Usage("at least one loss required".into()));
        }
        if self.swag.k.is_empty() || self.swag.alpha.is_empty() {
            return Err(Error::Usage("swag k and alpha lists must be non-empty".into()));
        }
        if self.synthesis.s.is_empty() || self.synthesis.replicates == 0 {
            return Err(Error::Usage("synthesis s list and replicates must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.phi) {
            return Err(Error::Usage("phi must lie in [0, 1]".into()));
        }
        for &a in &self.swag.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Usage(format!("alpha {a} outside [0, 1]")));
            }
        }
        self.train_config(self.train.losses[0], 0).validate()
    }

    pub fn seed_labels(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| (0..default_seed_count() as u64).collect())
    }

    pub fn max_rank(&self) -> usize {
        self.swag.k.iter().copied().max().unwrap_or(0)
    }

    /// Concrete training config for one (loss, seed-label) cell.
    pub fn train_config(&self, loss: LossKind, seed_label: u64) -> TrainConfig {
        TrainConfig {
            loss,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            pac: self.train.pac,
            noise_dim: self.train.noise_dim,
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            adam_betas: self.train.adam_betas,
            gumbel_temperature: self.train.gumbel_temperature,
            gradient_penalty: self.train.gradient_penalty,
            weight_clip: self.train.weight_clip,
            hidden: self.train.hidden.clone(),
            t_collect: self.swag.t_collect,
            seed: child_seed(self.seed, &format!("train/loss={loss}/seed={seed_label}")),
        }
    }

    /// Short stable hash of the config content. Dataset and output paths are
    /// normalized out so relocating an experiment does not change its hash.
    pub fn config_hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.dataset = PathBuf::from(".");
        normalized.output_dir = PathBuf::from(".");
        let json = serde_json::to_string(&normalized).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Child-seed derivation: SHA-256 over the root seed (little-endian bytes)
/// and a path-like label; the first eight digest bytes become the seed.
pub fn child_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Cell coordinates within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCoords {
    pub variant: Variant,
    pub loss: LossKind,
    pub s_samples: usize,
    pub seed_label: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    /// Point-estimate baseline: final weights, no posterior.
    Baseline,
    /// Posterior synthesis with the given rank and covariance scale.
    Posterior { k: usize, alpha: f64 },
}

impl Variant {
    pub fn dir_name(&self) -> String {
        match self {
            Variant::Baseline => "ctgan".to_string(),
            Variant::Posterior { k, alpha } => format!("K{k}_a{alpha}"),
        }
    }

    pub fn config_label(&self, loss: LossKind, s: usize) -> String {
        match self {
            Variant::Baseline => format!("ctgan_{loss}"),
            Variant::Posterior { k, alpha } => format!("gactgan_{loss}_K{k}_a{alpha}_S{s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config_json() -> String {
        r#"{
            "dataset": "toy.csv",
            "synthesis": {"n_sample": 100},
            "eval": {"spec": {"roc_targets": [["c"]], "tcap": {"keys": ["c"], "target": "c"}}},
            "output_dir": "out"
        }"#
        .to_string()
    }

    #[test]
    fn defaults_match_reference_grid() {
        let cfg: ExperimentConfig = serde_json::from_str(&minimal_config_json()).unwrap();
        assert_eq!(cfg.swag.k, vec![0, 30, 100, 150]);
        assert_eq!(cfg.swag.alpha, vec![0.0, 0.25, 0.5, 1.0]);
        assert_eq!(cfg.synthesis.s, vec![1]);
        assert_eq!(cfg.synthesis.replicates, 5);
        assert_eq!(cfg.seed_labels(), vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.eval.phi, 0.75);
        assert_eq!(cfg.train.losses.len(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = minimal_config_json().replace("\"output_dir\"", "\"bogus\": 1, \"output_dir\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&json).is_err());
    }

    #[test]
    fn child_seeds_are_stable_and_distinct() {
        let a = child_seed(0, "train/loss=vanilla/seed=0");
        let b = child_seed(0, "train/loss=vanilla/seed=1");
        let c = child_seed(1, "train/loss=vanilla/seed=0");
        assert_eq!(a, child_seed(0, "train/loss=vanilla/seed=0"));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_hash_changes_with_content() {
        let cfg: ExperimentConfig = serde_json::from_str(&minimal_config_json()).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.seed = 99;
        assert_ne!(cfg.config_hash(), cfg2.config_hash());
        assert_eq!(cfg.config_hash(), cfg.config_hash());
    }
}
