//! One-dimensional Gaussian mixture fitting for mode-specific normalization.
//!
//! Candidate mixtures with 1..=max_modes components are fitted by EM
//! (deterministic equal-count quantile initialization) and the component
//! count is selected by BIC, so smooth columns collapse to few modes while
//! genuinely multi-modal columns keep one component per mode.

use serde::{Deserialize, Serialize};

/// Fitted mixture for one continuous column (all components, pre-pruning).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFit {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Minimum allowed standard deviation for a mode centered at `mean`.
pub fn degenerate_std_floor(mean: f64) -> f64 {
    1e-4 * (1.0 + mean.abs())
}

struct EmResult {
    fit: GmmFit,
    total_ll: f64,
}

/// Plain EM for a fixed component count. Initialization assigns equal-count
/// chunks of the sorted data to the components.
fn em_fixed_k(data: &[f64], sorted: &[f64], k: usize, max_iter: usize, rel_tol: f64) -> EmResult {
    let n = data.len();
    let nf = n as f64;

    let mut means = vec![0.0; k];
    let mut vars = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for j in 0..k {
        let lo = j * n / k;
        let hi = ((j + 1) * n / k).max(lo + 1);
        let chunk = &sorted[lo..hi];
        let m: f64 = chunk.iter().sum::<f64>() / chunk.len() as f64;
        let v: f64 = chunk.iter().map(|x| (x - m).powi(2)).sum::<f64>() / chunk.len() as f64;
        means[j] = m;
        vars[j] = v.max(degenerate_std_floor(m).powi(2));
        weights[j] = (hi - lo) as f64 / nf;
    }

    let mut resp = vec![0.0; n * k];
    let mut total_ll = f64::NEG_INFINITY;
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..max_iter {
        // E-step
        let log_w: Vec<f64> = weights.iter().map(|w| w.max(1e-300).ln()).collect();
        let half_log_var: Vec<f64> = vars.iter().map(|v| 0.5 * v.ln()).collect();
        let mut ll = 0.0;
        let mut logp = vec![0.0; k];
        for (i, &x) in data.iter().enumerate() {
            for j in 0..k {
                logp[j] = log_w[j]
                    - half_log_var[j]
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * (x - means[j]).powi(2) / vars[j];
            }
            let lse = log_sum_exp(&logp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logp[j] - lse).exp();
            }
        }
        total_ll = ll;

        // M-step
        let mut nk = vec![1e-10; k];
        let mut sum_x = vec![0.0; k];
        for (i, &x) in data.iter().enumerate() {
            for j in 0..k {
                nk[j] += resp[i * k + j];
                sum_x[j] += resp[i * k + j] * x;
            }
        }
        for j in 0..k {
            means[j] = sum_x[j] / nk[j];
        }
        let mut sq = vec![0.0; k];
        for (i, &x) in data.iter().enumerate() {
            for j in 0..k {
                sq[j] += resp[i * k + j] * (x - means[j]).powi(2);
            }
        }
        for j in 0..k {
            vars[j] = (sq[j] / nk[j]).max(degenerate_std_floor(means[j]).powi(2));
            weights[j] = nk[j] / nf;
        }

        let denom = prev_ll.abs().max(1e-3);
        if (total_ll - prev_ll).abs() < rel_tol * denom {
            break;
        }
        prev_ll = total_ll;
    }

    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    EmResult {
        fit: GmmFit {
            stds: vars.iter().map(|v| v.sqrt()).collect(),
            means,
            weights,
        },
        total_ll,
    }
}

/// Fits a Gaussian mixture with at most `max_modes` components. Each
/// candidate component count gets an EM run of at most `max_iter` passes
/// (early stop when the log-likelihood change falls below `rel_tol` relative
/// to its magnitude); the count is chosen by BIC, stopping once adding
/// components stops paying. Deterministic: no randomness anywhere.
pub fn fit_gmm_1d(data: &[f64], max_modes: usize, max_iter: usize, rel_tol: f64) -> GmmFit {
    assert!(!data.is_empty(), "gmm fit on empty column");
    let n = data.len();
    let k_max = max_modes.max(1).min(n);

    let mean0: f64 = data.iter().sum::<f64>() / n as f64;
    let var0: f64 = data.iter().map(|x| (x - mean0).powi(2)).sum::<f64>() / n as f64;
    if var0 < 1e-12 * (1.0 + mean0.abs()).powi(2) || k_max == 1 {
        return GmmFit {
            means: vec![mean0],
            stds: vec![degenerate_std_floor(mean0)],
            weights: vec![1.0],
        };
    }

    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best: Option<(f64, GmmFit)> = None;
    let mut worse_streak = 0;
    for k in 1..=k_max {
        let res = em_fixed_k(data, &sorted, k, max_iter, rel_tol);
        let params = (3 * k - 1) as f64;
        let bic = -2.0 * res.total_ll + params * (n as f64).ln();
        match &best {
            Some((best_bic, _)) if bic >= *best_bic => {
                worse_streak += 1;
                if worse_streak >= 2 {
                    break;
                }
            }
            _ => {
                worse_streak = 0;
                best = Some((bic, res.fit));
            }
        }
    }
    best.expect("at least one candidate fit").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn surviving(fit: &GmmFit, threshold: f64) -> Vec<usize> {
        (0..fit.weights.len())
            .filter(|&j| fit.weights[j] > threshold)
            .collect()
    }

    #[test]
    fn single_gaussian_collapses_to_one_mode() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_gmm_1d(&data, 10, 100, 1e-4);
        let alive = surviving(&fit, 0.005);
        assert_eq!(alive.len(), 1, "weights: {:?}", fit.weights);
        assert!(fit.means[alive[0]].abs() < 0.1);
        assert!((fit.stds[alive[0]] - 1.0).abs() < 0.1);
    }

    #[test]
    fn bimodal_recovers_two_modes() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..10000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.gen_bool(0.5) {
                    z - 5.0
                } else {
                    z + 5.0
                }
            })
            .collect();
        let fit = fit_gmm_1d(&data, 10, 100, 1e-4);
        let alive = surviving(&fit, 0.005);
        assert_eq!(alive.len(), 2, "weights: {:?}", fit.weights);
        let mut mus: Vec<f64> = alive.iter().map(|&j| fit.means[j]).collect();
        mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((mus[0] + 5.0).abs() < 0.5, "low mode at {}", mus[0]);
        assert!((mus[1] - 5.0).abs() < 0.5, "high mode at {}", mus[1]);
    }

    #[test]
    fn constant_column_yields_floored_single_mode() {
        let data = vec![3.0; 100];
        let fit = fit_gmm_1d(&data, 10, 100, 1e-4);
        assert_eq!(fit.means.len(), 1);
        assert_eq!(fit.weights, vec![1.0]);
        assert!((fit.stds[0] - degenerate_std_floor(3.0)).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fit = fit_gmm_1d(&data, 10, 100, 1e-4);
        let total: f64 = fit.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(fit.stds.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a = fit_gmm_1d(&data, 10, 100, 1e-4);
        let b = fit_gmm_1d(&data, 10, 100, 1e-4);
        assert_eq!(a.means, b.means);
        assert_eq!(a.stds, b.stds);
        assert_eq!(a.weights, b.weights);
    }
}
