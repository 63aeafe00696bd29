use crate::error::{Error, Result};
use crate::model::Param;
use crate::numerics::{Scalar, Tensor};

/// Adam with decoupled weight decay, applied uniformly to every parameter.
///
/// Per step `t` (1-based), for each scalar `θ` with gradient `g`:
/// `θ ← θ − lr·wd·θ`, then the bias-corrected Adam update
/// `θ ← θ − lr·m̂/(√v̂ + ε)`.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &[Param<T>], weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.value.numel()]).collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` is `None` for a parameter that
    /// received no gradient, which is treated as zero.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Option<&Tensor<T>>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let decay = T::of(lr * self.weight_decay);
        let lr_t = T::of(lr);
        let eps = T::of(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let theta = p.value.data_mut();
            if let Some(g) = g {
                if g.numel() != theta.len() {
                    return Err(Error::dims("adamw", &[theta.len()], g.shape()));
                }
            }
            for i in 0..theta.len() {
                let gi = g.map_or(T::zero(), |g| g.data()[i]);
                theta[i] = theta[i] - decay * theta[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                theta[i] -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
