//! The alternating optimization loop: per step one discriminator update and
//! one generator update, with per-epoch weight snapshots handed to a
//! collection hook once the collection epoch is passed.

use super::losses::{
    conditional_cross_entropy, gradient_penalty, vanilla_d_loss, vanilla_g_loss,
    wasserstein_d_loss, wasserstein_g_loss,
};
use super::sampler::{CondFrequencies, CondSampler};
use super::{LossKind, TrainConfig};
use crate::data::{DataTransformer, Dataset};
use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::layers::BnUpdate;
use crate::nn::nets::{
    DiscMode, DiscriminatorArch, DiscriminatorNet, GenMode, GeneratorArch, GeneratorNet,
};
use crate::nn::tape::Tape;
use ndarray::{concatenate, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Everything a finished training run produces (posterior moments are
/// collected separately through the hook).
pub struct TrainedModel {
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub transformer: DataTransformer,
    pub cond_freqs: CondFrequencies,
    pub epoch_log: Vec<EpochLog>,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

fn randn<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    if b.ncols() == 0 {
        return a.clone();
    }
    concatenate(Axis(1), &[a.view(), b.view()]).expect("hstack rows")
}

fn gather_rows(m: &Array2<f64>, rows: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.row(r as usize));
    }
    out
}

/// Trains the conditional GAN on `dataset`. After every epoch past
/// `config.t_collect`, `snapshot_hook(epoch, flat_generator_weights)` is
/// invoked. Fully deterministic for a given `config.seed`.
pub fn train<F: FnMut(usize, &[f64])>(
    dataset: &Dataset,
    transformer: &DataTransformer,
    config: &TrainConfig,
    mut snapshot_hook: F,
) -> Result<TrainedModel> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let encoded = transformer.encode_dataset(dataset, &mut rng)?;
    let sampler = CondSampler::fit(dataset, &transformer.layout)?;
    let cond_dim = sampler.cond_dim();
    let width = transformer.width();

    let gen_arch = GeneratorArch {
        noise_dim: config.noise_dim,
        cond_dim,
        data_width: width,
        hidden: config.hidden.clone(),
        tau: config.gumbel_temperature,
        spans: transformer.layout.spans(),
    };
    let disc_arch = DiscriminatorArch {
        input_width: width + cond_dim,
        pac: config.pac,
        hidden: config.hidden.clone(),
        leaky_slope: 0.2,
        dropout: 0.5,
    };
    let mut generator = GeneratorNet::init(gen_arch, &mut rng);
    let discriminator = DiscriminatorNet::init(disc_arch, &mut rng);
    let mut discriminator = discriminator;

    let adam_cfg = config.adam_config();
    let mut adam_g = {
        let shapes: Vec<_> = generator
            .param_arrays_mut()
            .iter()
            .map(|a| a.dim())
            .collect();
        Adam::new(adam_cfg, &shapes)
    };
    let mut adam_d = {
        let shapes: Vec<_> = discriminator
            .param_arrays_mut()
            .iter()
            .map(|a| a.dim())
            .collect();
        Adam::new(adam_cfg, &shapes)
    };

    // span (start, len) of each categorical block, in sampler column order
    let col_spans: Vec<(usize, usize)> = transformer
        .layout
        .categorical_blocks()
        .iter()
        .map(|&(_, start, len)| (start, len))
        .collect();

    let n = dataset.n_rows;
    let batch = config.batch_size;
    let steps_per_epoch = n.div_ceil(batch);
    let mut epoch_log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut d_sum = 0.0;
        let mut g_sum = 0.0;
        for step in 0..steps_per_epoch {
            // ---- discriminator update ----
            let cond_b = sampler.sample_condition(batch, &mut rng);
            let fake_enc = {
                let scratch = Tape::new();
                let z = randn(&mut rng, batch, config.noise_dim);
                let gin = scratch.constant(hstack(&z, &cond_b.cond));
                let out = generator.forward(
                    &scratch,
                    gin,
                    GenMode::Train(BnUpdate::Ema(BN_MOMENTUM)),
                    &mut rng,
                    false,
                );
                scratch.value_clone(out.activated)
            };
            let real_enc = gather_rows(&encoded, &cond_b.rows);
            let real_in = hstack(&real_enc, &cond_b.cond);
            let fake_in = hstack(&fake_enc, &cond_b.cond);

            let t = Tape::new();
            let bound = discriminator.bind(&t, true);
            let s_real = discriminator.forward_with(
                &t,
                &bound,
                t.constant(real_in.clone()),
                DiscMode::Train,
                &mut rng,
            );
            let s_fake = discriminator.forward_with(
                &t,
                &bound,
                t.constant(fake_in.clone()),
                DiscMode::Train,
                &mut rng,
            );
            let d_loss = match config.loss {
                LossKind::Vanilla => vanilla_d_loss(&t, s_real, s_fake),
                LossKind::Wasserstein => {
                    let base = wasserstein_d_loss(&t, s_real, s_fake);
                    if config.weight_clip.is_some() {
                        base
                    } else {
                        match gradient_penalty(
                            &t,
                            &discriminator,
                            &bound,
                            &real_in,
                            &fake_in,
                            config.gradient_penalty,
                            &mut rng,
                        ) {
                            Some(gp) => t.add(base, gp),
                            None => {
                                log::warn!(
                                    "skipping non-finite gradient penalty at epoch {epoch}, batch {step}"
                                );
                                base
                            }
                        }
                    }
                }
            };
            let d_val = t.scalar(d_loss);
            if !d_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite discriminator loss at epoch {epoch}, batch {step}"
                )));
            }
            d_sum += d_val;
            let grads: Vec<Option<Array2<f64>>> = t
                .grad(d_loss, &bound.params)
                .into_iter()
                .map(|g| g.map(|v| t.value_clone(v)))
                .collect();
            drop(t);
            adam_d.step(&mut discriminator.param_arrays_mut(), &grads);
            if let Some(c) = config.weight_clip {
                for p in discriminator.param_arrays_mut() {
                    p.mapv_inplace(|x| x.clamp(-c, c));
                }
            }

            // ---- generator update ----
            let cond_g = sampler.sample_condition(batch, &mut rng);
            let t = Tape::new();
            let z = randn(&mut rng, batch, config.noise_dim);
            let gin = t.constant(hstack(&z, &cond_g.cond));
            let gout = generator.forward(
                &t,
                gin,
                GenMode::Train(BnUpdate::Ema(BN_MOMENTUM)),
                &mut rng,
                true,
            );
            let fake_full = if cond_dim > 0 {
                let cv = t.constant(cond_g.cond.clone());
                t.concat_cols(&[gout.activated, cv])
            } else {
                gout.activated
            };
            let bound = discriminator.bind(&t, false);
            let s_fake = discriminator.forward_with(&t, &bound, fake_full, DiscMode::Train, &mut rng);
            let base = match config.loss {
                LossKind::Vanilla => vanilla_g_loss(&t, s_fake),
                LossKind::Wasserstein => wasserstein_g_loss(&t, s_fake),
            };
            let g_loss = match conditional_cross_entropy(
                &t,
                &generator.arch,
                gout.logits,
                &cond_g.chosen,
                &col_spans,
            ) {
                Some(ce) => t.add(base, ce),
                None => base,
            };
            let g_val = t.scalar(g_loss);
            if !g_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite generator loss at epoch {epoch}, batch {step}"
                )));
            }
            g_sum += g_val;
            let grads: Vec<Option<Array2<f64>>> = t
                .grad(g_loss, &gout.params)
                .into_iter()
                .map(|g| g.map(|v| t.value_clone(v)))
                .collect();
            drop(t);
            adam_g.step(&mut generator.param_arrays_mut(), &grads);
        }

        epoch_log.push(EpochLog {
            epoch,
            d_loss: d_sum / steps_per_epoch as f64,
            g_loss: g_sum / steps_per_epoch as f64,
        });
        if epoch > config.t_collect {
            snapshot_hook(epoch, &generator.flat_params());
        }
    }

    Ok(TrainedModel {
        config: config.clone(),
        generator,
        discriminator,
        transformer: transformer.clone(),
        cond_freqs: sampler.freqs.clone(),
        epoch_log,
        adam_g,
        adam_d,
        rng_seed: config.seed,
        rng_word_pos: rng.get_word_pos(),
    })
}
