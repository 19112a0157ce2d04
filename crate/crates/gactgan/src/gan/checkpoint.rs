//! Checkpoint artifact: architecture descriptors, flattened weights for both
//! nets, optimizer state, batch-norm buffers, rng position, and the config,
//! behind a format tag.

use super::sampler::CondFrequencies;
use super::train::{EpochLog, TrainedModel};
use super::TrainConfig;
use crate::artifact::{read_artifact, split_payload, write_artifact};
use crate::data::DataTransformer;
use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::nets::{DiscriminatorArch, DiscriminatorNet, GeneratorArch, GeneratorNet};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"GACKPT01";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    config: TrainConfig,
    gen_arch: GeneratorArch,
    disc_arch: DiscriminatorArch,
    transformer: DataTransformer,
    cond_freqs: CondFrequencies,
    p_g: usize,
    p_d: usize,
    bn_dims: Vec<usize>,
    bn_counts: Vec<u64>,
    adam_t: (u64, u64),
    rng_seed: u64,
    rng_word_pos: u128,
    epoch_log: Vec<EpochLog>,
}

pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let theta_g = model.generator.flat_params();
    let theta_d = model.discriminator.flat_params();
    let (gm, gv, gt) = model.adam_g.state_flat();
    let (dm, dv, dt) = model.adam_d.state_flat();
    let mut bn_dims = Vec::new();
    let mut bn_counts = Vec::new();
    let mut bn_payload: Vec<Vec<f64>> = Vec::new();
    for s in &model.generator.bn_stats {
        bn_dims.push(s.mean.len());
        bn_counts.push(s.count);
        bn_payload.push(s.mean.iter().cloned().collect());
        bn_payload.push(s.var.iter().cloned().collect());
    }
    let header = CheckpointHeader {
        format_version: 1,
        config: model.config.clone(),
        gen_arch: model.generator.arch.clone(),
        disc_arch: model.discriminator.arch.clone(),
        transformer: model.transformer.clone(),
        cond_freqs: model.cond_freqs.clone(),
        p_g: theta_g.len(),
        p_d: theta_d.len(),
        bn_dims,
        bn_counts,
        adam_t: (gt, dt),
        rng_seed: model.rng_seed,
        rng_word_pos: model.rng_word_pos,
        epoch_log: model.epoch_log.clone(),
    };
    let mut arrays: Vec<&[f64]> = vec![&theta_g, &theta_d, &gm, &gv, &dm, &dv];
    for p in &bn_payload {
        arrays.push(p);
    }
    write_artifact(path, MAGIC, &header, &arrays)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let (header, payload): (CheckpointHeader, Vec<f64>) = read_artifact(path, MAGIC)?;
    if header.format_version != 1 {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {}", header.format_version),
        ));
    }
    let mut dummy = ChaCha20Rng::seed_from_u64(0);
    let mut generator = GeneratorNet::init(header.gen_arch.clone(), &mut dummy);
    let mut discriminator = DiscriminatorNet::init(header.disc_arch.clone(), &mut dummy);
    if generator.param_count() != header.p_g || discriminator.param_count() != header.p_d {
        return Err(Error::format(path, "parameter counts disagree with architecture"));
    }

    let mut lens = vec![
        header.p_g,
        header.p_d,
        header.p_g,
        header.p_g,
        header.p_d,
        header.p_d,
    ];
    for &d in &header.bn_dims {
        lens.push(d);
        lens.push(d);
    }
    let mut parts = split_payload(payload, &lens)
        .map_err(|e| Error::format(path, e.to_string()))?
        .into_iter();
    let theta_g = parts.next().unwrap();
    let theta_d = parts.next().unwrap();
    let gm = parts.next().unwrap();
    let gv = parts.next().unwrap();
    let dm = parts.next().unwrap();
    let dv = parts.next().unwrap();

    generator.set_flat_params(&theta_g)?;
    discriminator.set_flat_params(&theta_d)?;
    if header.bn_dims.len() != generator.bn_stats.len() {
        return Err(Error::format(path, "batch-norm buffer count mismatch"));
    }
    for (i, s) in generator.bn_stats.iter_mut().enumerate() {
        let mean = parts.next().unwrap();
        let var = parts.next().unwrap();
        let d = header.bn_dims[i];
        s.mean = Array2::from_shape_vec((1, d), mean).expect("bn mean shape");
        s.var = Array2::from_shape_vec((1, d), var).expect("bn var shape");
        s.count = header.bn_counts[i];
    }

    let adam_cfg = header.config.adam_config();
    let mut adam_g = {
        let shapes: Vec<_> = generator.param_arrays_mut().iter().map(|a| a.dim()).collect();
        Adam::new(adam_cfg, &shapes)
    };
    adam_g.load_state_flat(&gm, &gv, header.adam_t.0);
    let mut adam_d = {
        let shapes: Vec<_> = discriminator
            .param_arrays_mut()
            .iter()
            .map(|a| a.dim())
            .collect();
        Adam::new(adam_cfg, &shapes)
    };
    adam_d.load_state_flat(&dm, &dv, header.adam_t.1);

    Ok(TrainedModel {
        config: header.config,
        generator,
        discriminator,
        transformer: header.transformer,
        cond_freqs: header.cond_freqs,
        epoch_log: header.epoch_log,
        adam_g,
        adam_d,
        rng_seed: header.rng_seed,
        rng_word_pos: header.rng_word_pos,
    })
}
