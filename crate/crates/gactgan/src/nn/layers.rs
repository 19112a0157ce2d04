//! Layer parameter containers and their tape-level forward passes.

use super::tape::{Tape, Var};
use crate::data::{Span, SpanKind};
use ndarray::Array2;
use rand::Rng;
use rand_distr::Gumbel;

pub const BN_EPS: f64 = 1e-5;
/// Running-variance floor applied when batch-norm statistics are stored.
pub const BN_VAR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LinearParams {
    pub w: Array2<f64>, // in x out
    pub b: Array2<f64>, // 1 x out
}

impl LinearParams {
    /// Uniform(-1/sqrt(in), 1/sqrt(in)) init for weight and bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = Array2::from_shape_fn((in_dim, out_dim), |_| rng.gen_range(-bound..bound));
        let b = Array2::from_shape_fn((1, out_dim), |_| rng.gen_range(-bound..bound));
        LinearParams { w, b }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundLinear {
        BoundLinear {
            w: t.leaf(self.w.clone(), trainable),
            b: t.leaf(self.b.clone(), trainable),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl BoundLinear {
    pub fn forward(&self, t: &Tape, x: Var) -> Var {
        let n = t.shape(x).0;
        let xw = t.matmul(x, self.w);
        let b = t.broadcast_rows(self.b, n);
        t.add(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Array2<f64>, // 1 x f
    pub beta: Array2<f64>,  // 1 x f
}

impl BatchNormParams {
    pub fn init(f: usize) -> Self {
        BatchNormParams {
            gamma: Array2::ones((1, f)),
            beta: Array2::zeros((1, f)),
        }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundBatchNorm {
        BoundBatchNorm {
            gamma: t.leaf(self.gamma.clone(), trainable),
            beta: t.leaf(self.beta.clone(), trainable),
        }
    }
}

/// Running statistics buffer for one batch-norm layer. Not part of the
/// weight vector; refreshed separately after posterior sampling.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: Array2<f64>, // 1 x f
    pub var: Array2<f64>,  // 1 x f
    pub count: u64,
}

impl BnStats {
    pub fn new(f: usize) -> Self {
        BnStats {
            mean: Array2::zeros((1, f)),
            var: Array2::ones((1, f)),
            count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.mean.fill(0.0);
        self.var.fill(1.0);
        self.count = 0;
    }

    fn store(&mut self, mean: Array2<f64>, var: Array2<f64>) {
        self.mean = mean;
        self.var = var.mapv(|v| v.max(BN_VAR_FLOOR));
    }

    /// Exponential moving average update (regular training).
    pub fn update_ema(&mut self, momentum: f64, batch_mean: &Array2<f64>, batch_var: &Array2<f64>) {
        let mean = &self.mean * (1.0 - momentum) + batch_mean * momentum;
        let var = &self.var * (1.0 - momentum) + batch_var * momentum;
        self.count += 1;
        self.store(mean, var);
    }

    /// Cumulative average update (statistics refresh).
    pub fn update_cumulative(&mut self, batch_mean: &Array2<f64>, batch_var: &Array2<f64>) {
        let c = self.count as f64;
        if self.count == 0 {
            self.store(batch_mean.clone(), batch_var.clone());
            self.count = 1;
        } else {
            let mean = (&self.mean * c + batch_mean) / (c + 1.0);
            let var = (&self.var * c + batch_var) / (c + 1.0);
            self.count += 1;
            self.store(mean, var);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BnUpdate {
    /// No side effect on running statistics.
    None,
    /// EMA with the given momentum (training default 0.1).
    Ema(f64),
    /// Cumulative average (refresh pass).
    Cumulative,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundBatchNorm {
    pub gamma: Var,
    pub beta: Var,
}

impl BoundBatchNorm {
    /// Training-mode forward: normalizes by batch statistics (differentiable
    /// through mean and variance), optionally updating `stats`.
    pub fn forward_train(&self, t: &Tape, x: Var, stats: &mut BnStats, update: BnUpdate) -> Var {
        let (n, f) = t.shape(x);
        let nf = n as f64;
        let mu = t.scale(t.sum_rows(x), 1.0 / nf);
        let xc = t.sub(x, t.broadcast_rows(mu, n));
        let var_b = t.scale(t.sum_rows(t.square(xc)), 1.0 / nf);
        let denom = t.sqrt(t.add_scalar(var_b, BN_EPS));
        let xn = t.mul(xc, t.broadcast_rows(t.recip(denom), n));
        let y = t.add(
            t.mul(xn, t.broadcast_rows(self.gamma, n)),
            t.broadcast_rows(self.beta, n),
        );
        match update {
            BnUpdate::None => {}
            BnUpdate::Ema(momentum) => {
                let unbias = if n > 1 { nf / (nf - 1.0) } else { 1.0 };
                let bv = t.value_clone(var_b) * unbias;
                let bm = t.value_clone(mu);
                stats.update_ema(momentum, &bm, &bv);
            }
            BnUpdate::Cumulative => {
                let unbias = if n > 1 { nf / (nf - 1.0) } else { 1.0 };
                let bv = t.value_clone(var_b) * unbias;
                let bm = t.value_clone(mu);
                stats.update_cumulative(&bm, &bv);
            }
        }
        let _ = f;
        y
    }

    /// Eval-mode forward: normalizes by the stored running statistics.
    pub fn forward_eval(&self, t: &Tape, x: Var, stats: &BnStats) -> Var {
        let n = t.shape(x).0;
        let rm = t.constant(stats.mean.clone());
        let scale = t.constant(stats.var.mapv(|v| 1.0 / (v + BN_EPS).sqrt()));
        let xc = t.sub(x, t.broadcast_rows(rm, n));
        let xn = t.mul(xc, t.broadcast_rows(scale, n));
        t.add(
            t.mul(xn, t.broadcast_rows(self.gamma, n)),
            t.broadcast_rows(self.beta, n),
        )
    }
}

/// Inverted dropout with keep-probability `1 - p`; identity when `p == 0`.
pub fn dropout<R: Rng + ?Sized>(t: &Tape, x: Var, p: f64, rng: &mut R) -> Var {
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 - p;
    let shape = t.shape(x);
    let mask = Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    let m = t.constant(mask);
    t.mul(x, m)
}

/// Numerically stable softmax over columns of each row. The row-max shift is
/// a constant; softmax is shift-invariant so values and all derivatives are
/// exact.
pub fn softmax_cols(t: &Tape, x: Var) -> Var {
    let (n, f) = t.shape(x);
    let mut rowmax = Array2::zeros((n, 1));
    {
        let v = t.value(x);
        for i in 0..n {
            rowmax[(i, 0)] = v.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let m = t.constant(rowmax);
    let shifted = t.sub(x, t.broadcast_cols(m, f));
    let e = t.exp(shifted);
    let s = t.sum_cols(e);
    t.mul(e, t.broadcast_cols(t.recip(s), f))
}

/// Row-wise logsumexp (N x F -> N x 1), max-shifted for stability.
pub fn logsumexp_cols(t: &Tape, x: Var) -> Var {
    let (n, f) = t.shape(x);
    let mut rowmax = Array2::zeros((n, 1));
    {
        let v = t.value(x);
        for i in 0..n {
            rowmax[(i, 0)] = v.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let m = t.constant(rowmax);
    let shifted = t.sub(x, t.broadcast_cols(m, f));
    let lse = t.ln(t.sum_cols(t.exp(shifted)));
    t.add(lse, m)
}

/// Per-row cross entropy between logits and a one-hot target (N x 1).
pub fn cross_entropy_with_logits(t: &Tape, logits: Var, target_onehot: Var) -> Var {
    let lse = logsumexp_cols(t, logits);
    let picked = t.sum_cols(t.mul(logits, target_onehot));
    t.sub(lse, picked)
}

/// Gumbel-softmax over one span: softmax((logits + g) / tau) with g drawn
/// fresh from Gumbel(0, 1).
pub fn gumbel_softmax<R: Rng + ?Sized>(t: &Tape, logits: Var, tau: f64, rng: &mut R) -> Var {
    let shape = t.shape(logits);
    let dist = Gumbel::new(0.0, 1.0).expect("gumbel params");
    let noise = Array2::from_shape_fn(shape, |_| rng.sample(dist));
    let g = t.constant(noise);
    let shifted = t.scale(t.add(logits, g), 1.0 / tau);
    softmax_cols(t, shifted)
}

/// Applies the per-span output activations: tanh on scalar slots,
/// gumbel-softmax (temperature `tau`) on one-hot spans. Spans must be
/// contiguous and cover the whole width.
pub fn apply_output_activations<R: Rng + ?Sized>(
    t: &Tape,
    logits: Var,
    spans: &[Span],
    tau: f64,
    rng: &mut R,
) -> Var {
    let mut parts = Vec::with_capacity(spans.len());
    let mut cursor = 0;
    for span in spans {
        assert_eq!(span.start, cursor, "spans must be contiguous");
        let piece = t.slice_cols(logits, span.start, span.len);
        let activated = match span.kind {
            SpanKind::Scalar => t.tanh(piece),
            SpanKind::OneHot => gumbel_softmax(t, piece, tau, rng),
        };
        parts.push(activated);
        cursor += span.len;
    }
    assert_eq!(cursor, t.shape(logits).1, "spans must cover the width");
    t.concat_cols(&parts)
}
