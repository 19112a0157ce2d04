//! Adam with decoupled weight decay.
//!
//! With a zero gradient the update reduces to the pure decay factor
//! `(1 - lr * weight_decay)` per step, which the training contract relies on.

use ndarray::Array2;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            betas: (0.5, 0.9),
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, param_shapes: &[(usize, usize)]) -> Self {
        Adam {
            cfg,
            m: param_shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: param_shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
        }
    }

    pub fn for_params(cfg: AdamConfig, params: &[&Array2<f64>]) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.dim()).collect();
        Adam::new(cfg, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. `grads[i]` may be `None` (treated as zero gradient);
    /// decay still applies.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Option<Array2<f64>>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = self.cfg.betas;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let decay = 1.0 - self.cfg.lr * self.cfg.weight_decay;
        for i in 0..params.len() {
            params[i].mapv_inplace(|p| p * decay);
            let Some(g) = &grads[i] else { continue };
            debug_assert_eq!(g.dim(), params[i].dim());
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
                *v = b2 * *v + (1.0 - b2) * g * g;
            });
            let lr = self.cfg.lr;
            let eps = self.cfg.eps;
            ndarray::Zip::from(&mut *params[i])
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mh = m / bc1;
                    let vh = v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
        }
    }

    /// Serializable view of (m, v, t) as flat vectors in parameter order.
    pub fn state_flat(&self) -> (Vec<f64>, Vec<f64>, u64) {
        let flat = |xs: &[Array2<f64>]| xs.iter().flat_map(|a| a.iter().cloned()).collect();
        (flat(&self.m), flat(&self.v), self.t)
    }

    pub fn load_state_flat(&mut self, m: &[f64], v: &[f64], t: u64) {
        let load = |dst: &mut Vec<Array2<f64>>, src: &[f64]| {
            let mut offset = 0;
            for a in dst.iter_mut() {
                let len = a.len();
                for (d, s) in a.iter_mut().zip(&src[offset..offset + len]) {
                    *d = *s;
                }
                offset += len;
            }
            assert_eq!(offset, src.len(), "optimizer state length mismatch");
        };
        load(&mut self.m, m);
        load(&mut self.v, v);
        self.t = t;
    }
}
