//! Adversarial losses on the tape.
//!
//! Vanilla: minimax discriminator loss with clamped probabilities and the
//! non-saturating generator loss. Wasserstein: critic difference plus a
//! gradient penalty on pac-group interpolates (exact second-order gradients
//! via the differentiable backward pass).

use super::sampler::ChosenCond;
use crate::data::SpanKind;
use crate::nn::layers::cross_entropy_with_logits;
use crate::nn::nets::{BoundDisc, DiscMode, DiscriminatorNet, GeneratorArch};
use crate::nn::tape::{Tape, Var};
use ndarray::Array2;
use rand::Rng;

pub const PROB_CLAMP: f64 = 1e-7;

/// -(mean log D(real) + mean log(1 - D(fake))). Scores are logits; the
/// sigmoid probabilities are clamped to [1e-7, 1 - 1e-7].
pub fn vanilla_d_loss(t: &Tape, real_logits: Var, fake_logits: Var) -> Var {
    let pr = t.clamp(t.sigmoid(real_logits), PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pf = t.clamp(t.sigmoid(fake_logits), PROB_CLAMP, 1.0 - PROB_CLAMP);
    let term_real = t.mean_all(t.ln(pr));
    let one_minus_pf = t.add_scalar(t.scale(pf, -1.0), 1.0);
    let term_fake = t.mean_all(t.ln(one_minus_pf));
    t.scale(t.add(term_real, term_fake), -1.0)
}

/// Non-saturating generator loss: -mean log D(fake).
pub fn vanilla_g_loss(t: &Tape, fake_logits: Var) -> Var {
    let pf = t.clamp(t.sigmoid(fake_logits), PROB_CLAMP, 1.0 - PROB_CLAMP);
    t.scale(t.mean_all(t.ln(pf)), -1.0)
}

/// mean D(fake) - mean D(real); the critic maximizes the difference.
pub fn wasserstein_d_loss(t: &Tape, real_scores: Var, fake_scores: Var) -> Var {
    t.sub(t.mean_all(fake_scores), t.mean_all(real_scores))
}

/// -mean D(fake).
pub fn wasserstein_g_loss(t: &Tape, fake_scores: Var) -> Var {
    t.scale(t.mean_all(fake_scores), -1.0)
}

/// Gradient penalty `lambda * mean((||grad_xhat D(xhat)||_2 - 1)^2)` on
/// interpolates between real and fake pac-groups (one epsilon per group).
///
/// Returns `None` when the penalty value is non-finite, in which case the
/// caller skips it for the batch.
pub fn gradient_penalty<R: Rng + ?Sized>(
    t: &Tape,
    disc: &DiscriminatorNet,
    bound: &BoundDisc,
    real_rows: &Array2<f64>,
    fake_rows: &Array2<f64>,
    lambda: f64,
    rng: &mut R,
) -> Option<Var> {
    let (n, w) = real_rows.dim();
    assert_eq!(fake_rows.dim(), (n, w));
    let pac = disc.arch.pac;
    assert_eq!(n % pac, 0);
    let groups = n / pac;

    let mut interp = Array2::zeros((n, w));
    for g in 0..groups {
        let eps: f64 = rng.gen();
        for i in 0..pac {
            let row = g * pac + i;
            for j in 0..w {
                interp[(row, j)] = eps * real_rows[(row, j)] + (1.0 - eps) * fake_rows[(row, j)];
            }
        }
    }

    let x_hat = t.leaf(interp, true);
    let scores = disc.forward_with(t, bound, x_hat, DiscMode::Train, rng);
    let total = t.sum_all(scores);
    let grad_x = t.grad(total, &[x_hat])[0].expect("score depends on its input");
    let grouped = t.reshape(grad_x, (groups, pac * w));
    let sq_norm = t.sum_cols(t.square(grouped));
    // tiny epsilon keeps sqrt differentiable at zero-gradient inputs
    let norm = t.sqrt(t.add_scalar(sq_norm, 1e-12));
    let excess = t.add_scalar(norm, -1.0);
    let gp = t.scale(t.mean_all(t.square(excess)), lambda);
    if t.scalar(gp).is_finite() {
        Some(gp)
    } else {
        None
    }
}

/// Mean cross-entropy between each row's generated span for the conditioned
/// column and the conditioned category (zero for unconditioned batches).
///
/// `logits` is the raw generator output; the conditioned column's one-hot
/// span is compared against the target category. Masked per row so each row
/// contributes only its own conditioned column, divided by the batch size.
pub fn conditional_cross_entropy(
    t: &Tape,
    gen_arch: &GeneratorArch,
    logits: Var,
    chosen: &[ChosenCond],
    col_spans: &[(usize, usize)],
) -> Option<Var> {
    if chosen.is_empty() {
        return None;
    }
    let n = t.shape(logits).0;
    assert_eq!(chosen.len(), n);
    debug_assert!(gen_arch
        .spans
        .iter()
        .filter(|s| s.kind == SpanKind::OneHot)
        .count() >= col_spans.len());

    let mut total: Option<Var> = None;
    for (sampler_col, &(start, len)) in col_spans.iter().enumerate() {
        let mut any = false;
        let mut target = Array2::zeros((n, len));
        let mut mask = Array2::zeros((n, 1));
        for (i, c) in chosen.iter().enumerate() {
            if c.col == sampler_col {
                target[(i, c.category)] = 1.0;
                mask[(i, 0)] = 1.0;
                any = true;
            }
        }
        if !any {
            continue;
        }
        let span_logits = t.slice_cols(logits, start, len);
        let target_v = t.constant(target);
        let ce = cross_entropy_with_logits(t, span_logits, target_v);
        let masked = t.mul(ce, t.constant(mask));
        let contribution = t.sum_all(masked);
        total = Some(match total {
            Some(acc) => t.add(acc, contribution),
            None => contribution,
        });
    }
    total.map(|v| t.scale(v, 1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn constant_half_discriminator_gives_two_log_two() {
        let t = Tape::new();
        let real = t.constant(Array2::from_elem((5, 1), logit(0.5)));
        let fake = t.constant(Array2::from_elem((5, 1), logit(0.5)));
        let d = vanilla_d_loss(&t, real, fake);
        assert!((t.scalar(d) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_drives_d_loss_to_zero() {
        let t = Tape::new();
        let eps = 1e-6;
        let real = t.constant(Array2::from_elem((4, 1), logit(1.0 - eps)));
        let fake = t.constant(Array2::from_elem((4, 1), logit(eps)));
        let d = vanilla_d_loss(&t, real, fake);
        assert!(t.scalar(d) < 1e-5, "d_loss -> 0+, got {}", t.scalar(d));
        assert!(t.scalar(d) > 0.0);
    }

    #[test]
    fn wasserstein_equal_scores_zero_loss() {
        let t = Tape::new();
        let real = t.constant(arr2(&[[0.3], [0.7]]));
        let fake = t.constant(arr2(&[[0.7], [0.3]]));
        let d = wasserstein_d_loss(&t, real, fake);
        assert_eq!(t.scalar(d), 0.0);
    }

    #[test]
    fn wasserstein_linear_critic_is_mean_difference() {
        let t = Tape::new();
        let real = t.constant(arr2(&[[1.0], [2.0], [3.0]]));
        let fake = t.constant(arr2(&[[0.5], [0.5], [0.5]]));
        let d = wasserstein_d_loss(&t, real, fake);
        assert!((t.scalar(d) - (0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn conditional_ce_is_zero_for_certain_correct_categories() {
        // generated logits put all mass on the conditioned category
        let t = Tape::new();
        let arch = GeneratorArch {
            noise_dim: 1,
            cond_dim: 2,
            data_width: 2,
            hidden: vec![2],
            tau: 0.2,
            spans: vec![crate::data::Span {
                start: 0,
                len: 2,
                kind: SpanKind::OneHot,
            }],
        };
        let logits = t.constant(arr2(&[[500.0, 0.0], [0.0, 500.0]]));
        let chosen = vec![
            ChosenCond { col: 0, category: 0 },
            ChosenCond { col: 0, category: 1 },
        ];
        let ce = conditional_cross_entropy(&t, &arch, logits, &chosen, &[(0, 2)]).unwrap();
        assert!(t.scalar(ce).abs() < 1e-12);
    }

    #[test]
    fn gradient_penalty_matches_finite_difference_oracle() {
        use crate::nn::nets::DiscriminatorArch;
        // fixed tiny critic, dropout disabled so the value is deterministic
        let arch = DiscriminatorArch {
            input_width: 3,
            pac: 2,
            hidden: vec![4],
            leaky_slope: 0.2,
            dropout: 0.0,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let disc = DiscriminatorNet::init(arch, &mut rng);
        let real = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let fake = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));

        // analytic penalty value (lambda = 10)
        let mut rng_a = ChaCha20Rng::seed_from_u64(99);
        let t = Tape::new();
        let bound = disc.bind(&t, false);
        let gp = gradient_penalty(&t, &disc, &bound, &real, &fake, 10.0, &mut rng_a).unwrap();
        let analytic = t.scalar(gp);

        // oracle: finite differences of D on the same interpolates
        let mut rng_b = ChaCha20Rng::seed_from_u64(99);
        let (n, w) = real.dim();
        let groups = n / 2;
        let mut interp = Array2::zeros((n, w));
        for g in 0..groups {
            let eps: f64 = rng_b.gen();
            for i in 0..2 {
                for j in 0..w {
                    let r = g * 2 + i;
                    interp[(r, j)] = eps * real[(r, j)] + (1.0 - eps) * fake[(r, j)];
                }
            }
        }
        let score_of = |x: &Array2<f64>| -> Vec<f64> {
            let t = Tape::new();
            let b = disc.bind(&t, false);
            let v = t.constant(x.clone());
            let mut r = ChaCha20Rng::seed_from_u64(0);
            let s = disc.forward_with(&t, &b, v, DiscMode::Train, &mut r);
            t.value_clone(s).iter().cloned().collect()
        };
        let h = 1e-6;
        let mut penalty = 0.0;
        for g in 0..groups {
            let mut sq_norm = 0.0;
            for i in 0..2 {
                for j in 0..w {
                    let r = g * 2 + i;
                    let mut xp = interp.clone();
                    xp[(r, j)] += h;
                    let mut xm = interp.clone();
                    xm[(r, j)] -= h;
                    let d = (score_of(&xp)[g] - score_of(&xm)[g]) / (2.0 * h);
                    sq_norm += d * d;
                }
            }
            penalty += (sq_norm.sqrt() - 1.0).powi(2);
        }
        penalty = 10.0 * penalty / groups as f64;
        assert!(
            (analytic - penalty).abs() < 1e-3,
            "gp {analytic} vs oracle {penalty}"
        );
    }
}
