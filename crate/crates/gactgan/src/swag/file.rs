//! Posterior artifact: self-contained file with the posterior payload
//! (mean, diagonal variance, deviation columns) plus the generator
//! architecture, its hash, the fitted transformer, and conditional
//! frequencies, so synthesis needs nothing else.

use super::GeneratorPosterior;
use crate::artifact::{read_artifact, split_payload, write_artifact};
use crate::data::DataTransformer;
use crate::error::{Error, Result};
use crate::gan::{CondFrequencies, TrainedModel};
use crate::nn::nets::{generator_arch_hash, GeneratorArch, GeneratorNet};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"GACPOST1";

#[derive(Serialize, Deserialize)]
struct PosteriorHeader {
    format_version: u32,
    p_g: usize,
    k_eff: usize,
    alpha_default: f64,
    arch: GeneratorArch,
    arch_hash: String,
    transformer: DataTransformer,
    cond_freqs: CondFrequencies,
}

/// A posterior plus everything needed to synthesize from it.
#[derive(Debug, Clone)]
pub struct PosteriorArtifact {
    pub posterior: GeneratorPosterior,
    pub arch: GeneratorArch,
    pub arch_hash: String,
    pub transformer: DataTransformer,
    pub cond_freqs: CondFrequencies,
}

impl PosteriorArtifact {
    pub fn new(posterior: GeneratorPosterior, model: &TrainedModel) -> Self {
        let arch = model.generator.arch.clone();
        PosteriorArtifact {
            arch_hash: generator_arch_hash(&arch),
            arch,
            posterior,
            transformer: model.transformer.clone(),
            cond_freqs: model.cond_freqs.clone(),
        }
    }

    /// Fresh generator instance for this architecture (statistics reset,
    /// weights unset until a posterior draw is loaded).
    pub fn build_generator(&self) -> GeneratorNet {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        GeneratorNet::init(self.arch.clone(), &mut rng)
    }
}

pub fn save_posterior(path: &Path, artifact: &PosteriorArtifact) -> Result<()> {
    let p = &artifact.posterior;
    let header = PosteriorHeader {
        format_version: 1,
        p_g: p.dim(),
        k_eff: p.k_eff(),
        alpha_default: p.alpha,
        arch: artifact.arch.clone(),
        arch_hash: artifact.arch_hash.clone(),
        transformer: artifact.transformer.clone(),
        cond_freqs: artifact.cond_freqs.clone(),
    };
    let mut arrays: Vec<&[f64]> = vec![&p.mean, &p.diag_var];
    for col in &p.deviations {
        arrays.push(col);
    }
    write_artifact(path, MAGIC, &header, &arrays)
}

pub fn load_posterior(path: &Path) -> Result<PosteriorArtifact> {
    let (header, payload): (PosteriorHeader, Vec<f64>) = read_artifact(path, MAGIC)?;
    if header.format_version != 1 {
        return Err(Error::format(
            path,
            format!("unsupported posterior version {}", header.format_version),
        ));
    }
    let p = header.p_g;
    let mut lens = vec![p, p];
    lens.extend(std::iter::repeat_n(p, header.k_eff));
    let mut parts = split_payload(payload, &lens)
        .map_err(|e| Error::format(path, e.to_string()))?
        .into_iter();
    let mean = parts.next().unwrap();
    let diag_var = parts.next().unwrap();
    let deviations: Vec<Vec<f64>> = parts.collect();
    let expected_hash = generator_arch_hash(&header.arch);
    if expected_hash != header.arch_hash {
        return Err(Error::format(path, "architecture hash mismatch"));
    }
    Ok(PosteriorArtifact {
        posterior: GeneratorPosterior {
            mean,
            diag_var,
            deviations,
            alpha: header.alpha_default,
        },
        arch: header.arch,
        arch_hash: header.arch_hash,
        transformer: header.transformer,
        cond_freqs: header.cond_freqs,
    })
}
