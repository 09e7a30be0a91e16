//! Elastic-net regularizer `Ω(w) = λ₂‖w‖² + λ₁‖w‖₁` and its proximal map.
//!
//! The prox of `γΩ` at `z` solves `min_w (1/2γ)‖w - z‖² + λ₂‖w‖² + λ₁‖w‖₁`
//! coordinatewise:
//!
//! ```text
//! w_c = sign(u_c) · max(|u_c| - τ, 0),   u = z / (2γλ₂ + 1),   τ = γλ₁ / (2γλ₂ + 1)
//! ```

use crate::data::SparseVector;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Regularizer {
    /// Weight on `‖w‖²`.
    pub lambda2: f64,
    /// Weight on `‖w‖₁`.
    pub lambda1: f64,
}

impl Regularizer {
    pub fn new(lambda2: f64, lambda1: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(lambda2) || !ok(lambda1) {
            return Err(invalid(format!(
                "regularization weights must be finite and nonnegative, got ({lambda2}, {lambda1})"
            )));
        }
        Ok(Self { lambda2, lambda1 })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        if self.lambda2 == 0.0 && self.lambda1 == 0.0 {
            return 0.0;
        }
        let l2: f64 = w.iter().map(|v| v * v).sum();
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        self.lambda2 * l2 + self.lambda1 * l1
    }

    /// `(shrink, threshold)` so that one prox coordinate is
    /// `soft_threshold(shrink * z, threshold)`.
    pub fn prox_coefficients(&self, gamma: f64) -> (f64, f64) {
        let denom = 2.0 * gamma * self.lambda2 + 1.0;
        (1.0 / denom, gamma * self.lambda1 / denom)
    }
}

pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("step size must be positive, got {gamma}")))
    }
}

pub fn prox_scalar(z: f64, gamma: f64, reg: &Regularizer) -> f64 {
    let (shrink, tau) = reg.prox_coefficients(gamma);
    soft_threshold(z * shrink, tau)
}

pub fn prox_elastic_net(z: &[f64], gamma: f64, reg: &Regularizer) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let (shrink, tau) = reg.prox_coefficients(gamma);
    Ok(z.iter().map(|&v| soft_threshold(v * shrink, tau)).collect())
}

/// Iterate of proximal SGD that applies the dense elastic-net prox lazily.
///
/// A step with a sparse gradient touches only the gradient's support; every
/// other coordinate `c` just undergoes `w_c ← soft(a·w_c, τ)`. Those pending
/// shrinks are settled in closed form the next time `c` is read:
/// `k` repeated steps give `|w| ← a^k|w| - τ(1 - a^k)/(1 - a)`, clipped at 0.
/// The step size must stay fixed between calls to [`LazyIterate::flush`].
#[derive(Clone, Debug)]
pub struct LazyIterate {
    w: Vec<f64>,
    last: Vec<u64>,
    step: u64,
    reg: Regularizer,
    gamma: f64,
    shrink: f64,
    tau: f64,
    /// `-ln(shrink)`, kept for accurate powers near 1.
    log_inv_shrink: f64,
}

impl LazyIterate {
    pub fn new(w0: Vec<f64>, reg: Regularizer, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let d = w0.len();
        let mut it = Self {
            w: w0,
            last: vec![0; d],
            step: 0,
            reg,
            gamma,
            shrink: 1.0,
            tau: 0.0,
            log_inv_shrink: 0.0,
        };
        it.set_gamma(gamma)?;
        Ok(it)
    }

    /// Settles pending shrinks and switches the step size.
    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        self.flush();
        let (shrink, tau) = self.reg.prox_coefficients(gamma);
        self.gamma = gamma;
        self.shrink = shrink;
        self.tau = tau;
        self.log_inv_shrink = (2.0 * gamma * self.reg.lambda2).ln_1p();
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn settle(&mut self, c: usize) {
        let k = self.step - self.last[c];
        if k == 0 {
            return;
        }
        self.last[c] = self.step;
        let v = self.w[c];
        if v == 0.0 {
            return;
        }
        let mag = v.abs();
        let settled = if self.log_inv_shrink == 0.0 {
            mag - self.tau * k as f64
        } else {
            // a^k and (1 - a^k) / (1 - a) without cancellation
            let kl = -(k as f64) * self.log_inv_shrink;
            let ak = kl.exp();
            let one_minus_ak = -kl.exp_m1();
            let one_minus_a = -(-self.log_inv_shrink).exp_m1();
            ak * mag - self.tau * one_minus_ak / one_minus_a
        };
        self.w[c] = if settled > 0.0 { settled.copysign(v) } else { 0.0 };
    }

    /// Current value of coordinate `c`.
    pub fn get(&mut self, c: usize) -> f64 {
        self.settle(c);
        self.w[c]
    }

    /// `<w, x>` with the touched coordinates settled first.
    pub fn dot(&mut self, x: &SparseVector) -> f64 {
        let mut s = 0.0;
        for (c, v) in x.iter() {
            s += v * self.get(c);
        }
        s
    }

    /// `w ← prox_{γΩ}(w - γ g)`. Returns false if a touched coordinate
    /// became non-finite.
    pub fn step(&mut self, grad: &SparseVector) -> bool {
        for (c, _) in grad.iter() {
            self.settle(c);
        }
        self.step += 1;
        let mut finite = true;
        for (c, g) in grad.iter() {
            let z = self.w[c] - self.gamma * g;
            let v = soft_threshold(z * self.shrink, self.tau);
            finite &= v.is_finite();
            self.w[c] = v;
            self.last[c] = self.step;
        }
        finite
    }

    pub fn flush(&mut self) {
        for c in 0..self.w.len() {
            self.settle(c);
        }
    }

    pub fn into_weights(mut self) -> Vec<f64> {
        self.flush();
        self.w
    }

    pub fn weights(&mut self) -> &[f64] {
        self.flush();
        &self.w
    }
}
