//! Weight-posterior construction from the optimization trajectory: running
//! first/second moments plus a bounded ring of deviation columns, finalized
//! into a diagonal-plus-low-rank Gaussian over the flattened generator
//! weights.

mod file;
mod synth;

pub use file::{load_posterior, save_posterior, PosteriorArtifact};
pub use synth::{
    refresh_bn, refresh_bn_batches, synthesize, synthesize_point_estimate, SynthesisOptions,
    SynthesisReport,
};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;

/// Default covariance scale.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Default number of forward batches for a statistics refresh.
pub const DEFAULT_BN_BATCHES: usize = 10;

/// Running moments and the deviation ring collected along the trajectory.
#[derive(Debug, Clone)]
pub struct SwagState {
    n_mod: u64,
    mean: Vec<f64>,
    second_moment: Vec<f64>,
    deviations: VecDeque<Vec<f64>>,
    k_max: usize,
}

impl SwagState {
    pub fn new(dim: usize, k_max: usize) -> Self {
        SwagState {
            n_mod: 0,
            mean: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            deviations: VecDeque::new(),
            k_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_collected(&self) -> u64 {
        self.n_mod
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn deviation_count(&self) -> usize {
        self.deviations.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Running-average update of the first and second moments:
    /// `m <- (m * n + w) / (n + 1)`, elementwise, then `n <- n + 1`.
    pub fn swa_update(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.mean.len() {
            return Err(Error::Numeric(format!(
                "weight vector length {} does not match state dimension {}",
                theta.len(),
                self.mean.len()
            )));
        }
        let n = self.n_mod as f64;
        for ((m, s), &t) in self.mean.iter_mut().zip(&mut self.second_moment).zip(theta) {
            *m = (*m * n + t) / (n + 1.0);
            *s = (*s * n + t * t) / (n + 1.0);
        }
        self.n_mod += 1;
        Ok(())
    }

    /// Appends the deviation column `theta - mean` (using the already
    /// updated running mean). When the ring holds `k_max` columns the oldest
    /// is evicted first, so the newest column is always retained. No-op when
    /// `k_max` is zero (diagonal-only mode).
    pub fn push_deviation(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.mean.len() {
            return Err(Error::Numeric(format!(
                "deviation length {} does not match state dimension {}",
                theta.len(),
                self.mean.len()
            )));
        }
        if self.k_max == 0 {
            return Ok(());
        }
        if self.deviations.len() == self.k_max {
            self.deviations.pop_front();
        }
        let col: Vec<f64> = theta
            .iter()
            .zip(&self.mean)
            .map(|(t, m)| t - m)
            .collect();
        self.deviations.push_back(col);
        Ok(())
    }

    /// One trajectory snapshot: moment update then deviation push.
    pub fn collect(&mut self, theta: &[f64]) -> Result<()> {
        self.swa_update(theta)?;
        self.push_deviation(theta)
    }

    /// Builds the posterior. The diagonal is `max(second_moment - mean^2, 0)`
    /// elementwise (clamped so floating-point drift cannot produce a negative
    /// variance).
    pub fn finalize(&self, alpha: f64) -> Result<GeneratorPosterior> {
        if self.n_mod == 0 {
            return Err(Error::Numeric(
                "no snapshots collected; cannot build a posterior".into(),
            ));
        }
        let diag_var: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.second_moment)
            .map(|(m, s)| (s - m * m).max(0.0))
            .collect();
        Ok(GeneratorPosterior {
            mean: self.mean.clone(),
            diag_var,
            deviations: self.deviations.iter().cloned().collect(),
            alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// alpha = 0: sampling returns the mean exactly.
    SwaOnly,
    /// No deviation columns: diagonal covariance only.
    Diagonal,
    LowRank,
}

/// Finalized weight posterior: mean, diagonal variance, deviation columns,
/// and the covariance scale. Immutable; sampling is the only consumer.
#[derive(Debug, Clone)]
pub struct GeneratorPosterior {
    pub mean: Vec<f64>,
    pub diag_var: Vec<f64>,
    pub deviations: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl GeneratorPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k_eff(&self) -> usize {
        self.deviations.len()
    }

    pub fn rank_mode(&self) -> RankMode {
        if self.alpha == 0.0 {
            RankMode::SwaOnly
        } else if self.deviations.is_empty() {
            RankMode::Diagonal
        } else {
            RankMode::LowRank
        }
    }

    /// A view of this posterior restricted to the newest `rank` deviation
    /// columns with a different covariance scale. Rank/scale tuning happens
    /// at synthesis time over one trained trajectory.
    pub fn truncated(&self, rank: usize, alpha: f64) -> GeneratorPosterior {
        let k = rank.min(self.deviations.len());
        let deviations = self.deviations[self.deviations.len() - k..].to_vec();
        GeneratorPosterior {
            mean: self.mean.clone(),
            diag_var: self.diag_var.clone(),
            deviations,
            alpha,
        }
    }

    /// Draws a weight vector:
    /// `theta = mean + sqrt(alpha) * (sqrt(diag) .* z1 + D z2 / sqrt(k_eff - 1))`.
    /// The low-rank term is omitted when fewer than two columns are stored;
    /// `alpha = 0` returns the mean bitwise without touching the rng.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.alpha == 0.0 {
            return self.mean.clone();
        }
        let sqrt_alpha = self.alpha.sqrt();
        let mut theta = self.mean.clone();
        for (t, &v) in theta.iter_mut().zip(&self.diag_var) {
            let z: f64 = rng.sample(StandardNormal);
            *t += sqrt_alpha * v.sqrt() * z;
        }
        let k = self.deviations.len();
        if k >= 2 {
            let scale = sqrt_alpha / ((k - 1) as f64).sqrt();
            for col in &self.deviations {
                let z: f64 = rng.sample(StandardNormal);
                let w = scale * z;
                for (t, &d) in theta.iter_mut().zip(col) {
                    *t += w * d;
                }
            }
        }
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn swa_update_running_mean_examples() {
        // mean 2 over 3 snapshots, new snapshot 6 -> mean 3
        let mut s = SwagState::new(1, 0);
        for w in [1.0, 2.0, 3.0] {
            s.swa_update(&[w]).unwrap();
        }
        assert_eq!(s.mean(), &[2.0]);
        s.swa_update(&[6.0]).unwrap();
        assert_eq!(s.mean(), &[3.0]);

        // first sample is the identity
        let mut s = SwagState::new(1, 0);
        s.swa_update(&[7.5]).unwrap();
        assert_eq!(s.mean(), &[7.5]);
    }

    #[test]
    fn moments_match_batch_statistics_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let dim = 50;
        let snapshots: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut s = SwagState::new(dim, 10);
        for snap in &snapshots {
            s.collect(snap).unwrap();
        }
        for i in 0..dim {
            let mean: f64 = snapshots.iter().map(|v| v[i]).sum::<f64>() / 20.0;
            let sq: f64 = snapshots.iter().map(|v| v[i] * v[i]).sum::<f64>() / 20.0;
            assert!((s.mean[i] - mean).abs() < 1e-12);
            assert!((s.second_moment[i] - sq).abs() < 1e-12);
        }
    }

    #[test]
    fn deviation_ring_is_fifo_and_uses_updated_mean() {
        let mut s = SwagState::new(1, 2);
        // snapshots 1, 2, 3: means become 1, 1.5, 2
        s.collect(&[1.0]).unwrap(); // dev 0
        s.collect(&[2.0]).unwrap(); // dev 0.5
        s.collect(&[3.0]).unwrap(); // dev 1.0, evicts the first
        assert_eq!(s.deviation_count(), 2);
        assert_eq!(s.deviations[0], vec![0.5]);
        assert_eq!(s.deviations[1], vec![1.0]);
    }

    #[test]
    fn deviation_ring_replays_trajectory_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let dim = 7;
        let k = 5;
        let snaps: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut s = SwagState::new(dim, k);
        // oracle: recompute running means independently
        let mut oracle_cols: Vec<Vec<f64>> = Vec::new();
        let mut mean = vec![0.0; dim];
        for (idx, snap) in snaps.iter().enumerate() {
            s.collect(snap).unwrap();
            let n = idx as f64;
            for i in 0..dim {
                mean[i] = (mean[i] * n + snap[i]) / (n + 1.0);
            }
            oracle_cols.push(snap.iter().zip(&mean).map(|(t, m)| t - m).collect());
        }
        let expect: Vec<&Vec<f64>> = oracle_cols.iter().rev().take(k).rev().collect();
        for (got, want) in s.deviations.iter().zip(expect) {
            assert_eq!(got, want, "stored column equals replayed deviation");
        }
    }

    #[test]
    fn full_ring_of_150_keeps_all_columns() {
        let mut s = SwagState::new(2, 150);
        for i in 0..150 {
            s.collect(&[i as f64, -(i as f64)]).unwrap();
        }
        assert_eq!(s.deviation_count(), 150);
    }

    #[test]
    fn k_zero_is_diagonal_mode() {
        let mut s = SwagState::new(2, 0);
        s.collect(&[1.0, 2.0]).unwrap();
        assert_eq!(s.deviation_count(), 0);
        let p = s.finalize(0.5).unwrap();
        assert_eq!(p.rank_mode(), RankMode::Diagonal);
    }

    #[test]
    fn finalize_diag_examples_and_clamp() {
        let mut s = SwagState::new(1, 0);
        s.n_mod = 1;
        s.mean = vec![2.0];
        s.second_moment = vec![5.0];
        assert_eq!(s.finalize(0.5).unwrap().diag_var, vec![1.0]);
        s.mean = vec![3.0];
        s.second_moment = vec![9.0];
        assert_eq!(s.finalize(0.5).unwrap().diag_var, vec![0.0]);
        s.mean = vec![1.0];
        s.second_moment = vec![0.99]; // floating-point drift
        assert_eq!(s.finalize(0.5).unwrap().diag_var, vec![0.0]);
    }

    #[test]
    fn finalize_without_snapshots_errors() {
        let s = SwagState::new(3, 2);
        assert!(s.finalize(0.5).is_err());
    }

    #[test]
    fn alpha_zero_sampling_is_bitwise_mean() {
        let mut s = SwagState::new(3, 2);
        for snap in [[1.0, 2.0, 3.0], [2.0, 1.0, 0.0], [0.5, 0.5, 0.5]] {
            s.collect(&snap).unwrap();
        }
        let p = s.finalize(0.0).unwrap();
        assert_eq!(p.rank_mode(), RankMode::SwaOnly);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(p.sample_weights(&mut rng), p.mean);
    }

    #[test]
    fn identity_diag_sampling_matches_closed_form() {
        let p = GeneratorPosterior {
            mean: vec![1.0, -2.0],
            diag_var: vec![1.0, 1.0],
            deviations: Vec::new(),
            alpha: 0.25,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let draw = p.sample_weights(&mut rng);
        let mut rng2 = ChaCha20Rng::seed_from_u64(3);
        let z0: f64 = rng2.sample(StandardNormal);
        let z1: f64 = rng2.sample(StandardNormal);
        assert_eq!(draw[0], 1.0 + 0.5 * z0);
        assert_eq!(draw[1], -2.0 + 0.5 * z1);
    }

    #[test]
    fn monte_carlo_covariance_matches_formula() {
        // 3-parameter toy posterior with 3 deviation columns
        let p = GeneratorPosterior {
            mean: vec![0.5, -1.0, 2.0],
            diag_var: vec![0.09, 0.04, 0.25],
            deviations: vec![
                vec![0.3, -0.1, 0.2],
                vec![-0.2, 0.4, 0.1],
                vec![0.1, 0.2, -0.3],
            ],
            alpha: 0.5,
        };
        let k = p.k_eff() as f64;
        let n = 100_000usize;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut sum = [0.0; 3];
        let mut cross = [[0.0; 3]; 3];
        for _ in 0..n {
            let w = p.sample_weights(&mut rng);
            for i in 0..3 {
                sum[i] += w[i];
                for j in 0..3 {
                    cross[i][j] += w[i] * w[j];
                }
            }
        }
        // expected covariance alpha * (diag + D D^T / (k-1))
        let mut expect = [[0.0; 3]; 3];
        for i in 0..3 {
            expect[i][i] += p.diag_var[i];
            for j in 0..3 {
                let dd: f64 = p.deviations.iter().map(|c| c[i] * c[j]).sum();
                expect[i][j] += dd / (k - 1.0);
            }
        }
        for row in &mut expect {
            for v in row.iter_mut() {
                *v *= p.alpha;
            }
        }
        let nf = n as f64;
        for i in 0..3 {
            for j in 0..3 {
                let emp = cross[i][j] / nf - (sum[i] / nf) * (sum[j] / nf);
                let se = ((expect[i][i] * expect[j][j] + expect[i][j] * expect[i][j]) / nf).sqrt();
                assert!(
                    (emp - expect[i][j]).abs() <= 3.0 * se,
                    "cov[{i}][{j}]: {emp} vs {} (3se {})",
                    expect[i][j],
                    3.0 * se
                );
            }
        }
    }

    #[test]
    fn truncated_keeps_newest_columns() {
        let p = GeneratorPosterior {
            mean: vec![0.0],
            diag_var: vec![1.0],
            deviations: vec![vec![1.0], vec![2.0], vec![3.0]],
            alpha: 1.0,
        };
        let t = p.truncated(2, 0.25);
        assert_eq!(t.deviations, vec![vec![2.0], vec![3.0]]);
        assert_eq!(t.alpha, 0.25);
        let all = p.truncated(10, 1.0);
        assert_eq!(all.k_eff(), 3);
    }
}
