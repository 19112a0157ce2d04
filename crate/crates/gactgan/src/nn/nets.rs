//! Generator and discriminator architectures.
//!
//! The generator is a stack of residual blocks (affine, batch-norm, relu,
//! concatenated with the block input) followed by a final affine map and
//! per-span output activations. The discriminator consumes `pac` samples per
//! score through leaky-relu/dropout affine layers.

use super::layers::{
    apply_output_activations, dropout, BatchNormParams, BnStats, BnUpdate, BoundLinear,
    LinearParams,
};
use super::tape::{Tape, Var};
use crate::data::Span;
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub noise_dim: usize,
    pub cond_dim: usize,
    pub data_width: usize,
    pub hidden: Vec<usize>,
    pub tau: f64,
    pub spans: Vec<Span>,
}

impl GeneratorArch {
    pub fn input_dim(&self) -> usize {
        self.noise_dim + self.cond_dim
    }
}

#[derive(Debug, Clone)]
pub struct GenBlock {
    pub fc: LinearParams,
    pub bn: BatchNormParams,
}

/// Forward mode for the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenMode {
    /// Batch statistics in the batch-norm layers, with the given running-stat
    /// update policy.
    Train(BnUpdate),
    /// Running statistics, no updates.
    Eval,
}

pub struct GenForwardOut {
    /// Activated output (tanh scalars, gumbel-softmax one-hots), N x width.
    pub activated: Var,
    /// Raw pre-activation output, N x width.
    pub logits: Var,
    /// Parameter leaves in flat-layout order (only when bound trainable).
    pub params: Vec<Var>,
}

/// Generator network.
///
/// Flat parameter layout (the weight vector): for each residual block in
/// order, `fc.w` (row-major), `fc.b`, `bn.gamma`, `bn.beta`; then the final
/// affine `w` (row-major) and `b`. Batch-norm running statistics are buffers,
/// not parameters, and are not part of the flat vector.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    pub arch: GeneratorArch,
    pub blocks: Vec<GenBlock>,
    pub final_fc: LinearParams,
    pub bn_stats: Vec<BnStats>,
}

impl GeneratorNet {
    pub fn init<R: Rng + ?Sized>(arch: GeneratorArch, rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(arch.hidden.len());
        let mut bn_stats = Vec::with_capacity(arch.hidden.len());
        let mut dim = arch.input_dim();
        for &h in &arch.hidden {
            blocks.push(GenBlock {
                fc: LinearParams::init(dim, h, rng),
                bn: BatchNormParams::init(h),
            });
            bn_stats.push(BnStats::new(h));
            dim += h;
        }
        let final_fc = LinearParams::init(dim, arch.data_width, rng);
        GeneratorNet {
            arch,
            blocks,
            final_fc,
            bn_stats,
        }
    }

    fn param_arrays(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.fc.w);
            out.push(&b.fc.b);
            out.push(&b.bn.gamma);
            out.push(&b.bn.beta);
        }
        out.push(&self.final_fc.w);
        out.push(&self.final_fc.b);
        out
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.fc.w);
            out.push(&mut b.fc.b);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.final_fc.w);
        out.push(&mut self.final_fc.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_arrays().iter().map(|a| a.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for a in self.param_arrays() {
            out.extend(a.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Numeric(format!(
                "weight vector length {} does not match parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for a in self.param_arrays_mut() {
            let len = a.len();
            for (dst, src) in a.iter_mut().zip(&flat[offset..offset + len]) {
                *dst = *src;
            }
            offset += len;
        }
        Ok(())
    }

    pub fn reset_bn_stats(&mut self) {
        for s in &mut self.bn_stats {
            s.reset();
        }
    }

    /// Runs the generator on `input` (N x (noise_dim + cond_dim)).
    /// Gumbel noise for the one-hot spans is drawn from `rng` in every mode.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        t: &Tape,
        input: Var,
        mode: GenMode,
        rng: &mut R,
        trainable: bool,
    ) -> GenForwardOut {
        assert_eq!(t.shape(input).1, self.arch.input_dim(), "generator input width");
        let mut params = Vec::new();
        let mut h = input;
        for (block, stats) in self.blocks.iter().zip(self.bn_stats.iter_mut()) {
            let fc = block.fc.bind(t, trainable);
            let bn = block.bn.bind(t, trainable);
            params.extend([fc.w, fc.b, bn.gamma, bn.beta]);
            let z = fc.forward(t, h);
            let normed = match mode {
                GenMode::Train(update) => bn.forward_train(t, z, stats, update),
                GenMode::Eval => bn.forward_eval(t, z, stats),
            };
            let act = t.relu(normed);
            h = t.concat_cols(&[act, h]);
        }
        let fc = self.final_fc.bind(t, trainable);
        params.extend([fc.w, fc.b]);
        let logits = fc.forward(t, h);
        let activated = apply_output_activations(t, logits, &self.arch.spans, self.arch.tau, rng);
        GenForwardOut {
            activated,
            logits,
            params,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorArch {
    /// Width of one sample row (encoded width + cond width).
    pub input_width: usize,
    pub pac: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscMode {
    Train,
    Eval,
}

/// Discriminator parameters bound to one tape. Bind once per tape so that
/// every forward pass (real, fake, interpolates) shares the same leaves and
/// gradients accumulate across passes.
pub struct BoundDisc {
    pub layers: Vec<BoundLinear>,
    pub params: Vec<Var>,
}

/// Discriminator network. Flat layout: per affine layer in order, `w`
/// (row-major) then `b`.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet {
    pub arch: DiscriminatorArch,
    pub fcs: Vec<LinearParams>,
}

impl DiscriminatorNet {
    pub fn init<R: Rng + ?Sized>(arch: DiscriminatorArch, rng: &mut R) -> Self {
        let mut fcs = Vec::with_capacity(arch.hidden.len() + 1);
        let mut dim = arch.pac * arch.input_width;
        for &h in &arch.hidden {
            fcs.push(LinearParams::init(dim, h, rng));
            dim = h;
        }
        fcs.push(LinearParams::init(dim, 1, rng));
        DiscriminatorNet { arch, fcs }
    }

    pub fn param_count(&self) -> usize {
        self.fcs.iter().map(|fc| fc.w.len() + fc.b.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for fc in &self.fcs {
            out.extend(fc.w.iter());
            out.extend(fc.b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Numeric(format!(
                "discriminator weight vector length {} does not match {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for fc in &mut self.fcs {
            for a in [&mut fc.w, &mut fc.b] {
                let len = a.len();
                for (dst, src) in a.iter_mut().zip(&flat[offset..offset + len]) {
                    *dst = *src;
                }
                offset += len;
            }
        }
        Ok(())
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for fc in &mut self.fcs {
            out.push(&mut fc.w);
            out.push(&mut fc.b);
        }
        out
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundDisc {
        let layers: Vec<BoundLinear> = self.fcs.iter().map(|fc| fc.bind(t, trainable)).collect();
        let params = layers.iter().flat_map(|l| [l.w, l.b]).collect();
        BoundDisc { layers, params }
    }

    /// Scores unpacked sample rows (N x input_width, N divisible by pac).
    /// Rows are packed into groups of `pac` before the first affine layer;
    /// the result is one score per group, (N/pac) x 1.
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        t: &Tape,
        bound: &BoundDisc,
        x: Var,
        mode: DiscMode,
        rng: &mut R,
    ) -> Var {
        let (n, w) = t.shape(x);
        assert_eq!(w, self.arch.input_width, "discriminator input width");
        assert_eq!(n % self.arch.pac, 0, "batch not divisible by pac");
        let groups = n / self.arch.pac;
        let mut h = t.reshape(x, (groups, self.arch.pac * w));
        for (i, layer) in bound.layers.iter().enumerate() {
            h = layer.forward(t, h);
            if i + 1 < bound.layers.len() {
                h = t.leaky_relu(h, self.arch.leaky_slope);
                if mode == DiscMode::Train {
                    h = dropout(t, h, self.arch.dropout, rng);
                }
            }
        }
        h
    }
}

/// Stable hex digest of a generator architecture (for artifact headers).
pub fn generator_arch_hash(arch: &GeneratorArch) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(arch).expect("arch serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
