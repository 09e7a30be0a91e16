//! Closed-form bound calculators and an empirical uniform-stability probe.

use crate::data::{Dataset, Label, SparseVector};
use crate::error::{invalid, Result};
use crate::optimizer::{train_adaptive, TrainConfig};
use crate::pairloss::pair_loss;

/// Constants of the smoothness/convexity assumptions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConstants {
    /// Lipschitz constant of the pair loss.
    pub g: f64,
    /// Strong-convexity modulus.
    pub mu: f64,
    /// Smoothness constant.
    pub l: f64,
    /// Bound on the stochastic-gradient variance.
    pub sigma2: f64,
}

impl TheoryConstants {
    pub fn new(g: f64, mu: f64, l: f64, sigma2: f64) -> Result<Self> {
        for (name, v) in [("G", g), ("mu", mu), ("L", l), ("sigma2", sigma2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { g, mu, l, sigma2 })
    }
}

/// `V_m = m^{-α}`.
pub fn statistical_accuracy(m: usize, alpha: f64) -> f64 {
    (m as f64).powf(-alpha)
}

/// Suboptimality on the full `n`-sample problem of a point that is
/// `δ_m`-accurate on an `m`-subset: `δ_m + 2(n−m)/n · V_m`.
pub fn theorem1_bound(delta_m: f64, m: usize, n: usize, alpha: f64) -> f64 {
    debug_assert!(m <= n);
    delta_m + 2.0 * ((n - m) as f64 / n as f64) * statistical_accuracy(m, alpha)
}

/// `4G² / (n(n−1)) · √(Σ γ_t²)`.
pub fn stability_generalization_bound(g: f64, n: usize, gammas: &[f64]) -> f64 {
    let sum_sq: f64 = gammas.iter().map(|g| g * g).sum();
    4.0 * g * g / pair_count(n) * sum_sq.sqrt()
}

/// The same bound for a constant step over `t` iterations.
pub fn stability_generalization_bound_constant(g: f64, n: usize, gamma: f64, t: usize) -> f64 {
    4.0 * g * g * gamma / pair_count(n) * (t as f64).sqrt()
}

fn pair_count(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0)
}

/// The trade-off objective `A/T + B√T` with `A = 1/(γμ)` and
/// `B = 4G²γ/(n(n−1))`.
pub fn inner_iters_objective(g: f64, mu: f64, gamma: f64, n: usize, t: u64) -> f64 {
    let a = 1.0 / (gamma * mu);
    let b = 4.0 * g * g * gamma / pair_count(n);
    a / t as f64 + b * (t as f64).sqrt()
}

/// Integer minimizer of [`inner_iters_objective`].
///
/// The continuous stationary point is `(2A/B)^{2/3}`; the objective is
/// convex in `T`, so the integer minimizer is its floor or its ceiling
/// (ties go to the smaller count).
pub fn optimal_inner_iters(g: f64, mu: f64, gamma: f64, n: usize) -> Result<u64> {
    if !(g > 0.0 && mu > 0.0 && gamma > 0.0) || n < 2 {
        return Err(invalid("G, mu and gamma must be positive and n at least 2"));
    }
    let a = 1.0 / (gamma * mu);
    let b = 4.0 * g * g * gamma / pair_count(n);
    let x = (2.0 * a / b).powf(2.0 / 3.0);
    let lo = (x.floor() as u64).max(1);
    let hi = (x.ceil() as u64).max(1);
    let f = |t| inner_iters_objective(g, mu, gamma, n, t);
    Ok(if f(hi) < f(lo) { hi } else { lo })
}

/// `gap/(γμT) + γσ²`.
pub fn convergence_bound(r0_gap: f64, gamma: f64, mu: f64, sigma2: f64, t: u64) -> f64 {
    r0_gap / (gamma * mu * t as f64) + gamma * sigma2
}

/// Lipschitz constant of the hinge pair loss on `ds`: `‖Δ‖ ≤ 2 max‖x‖`.
pub fn hinge_lipschitz(ds: &Dataset) -> f64 {
    2.0 * ds.max_row_norm()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityMeasurement {
    /// Largest loss change over the probe pairs.
    pub measured: f64,
    /// Stability parameter implied by the generalization bound (half of it).
    pub bound: f64,
}

/// Trains on `ds` and on `ds` with row `i` replaced, with identical
/// randomness, and compares the pair losses of the two models on
/// `probes` (each a positive row followed by a negative row).
pub fn stability_probe(
    ds: &Dataset,
    cfg: &TrainConfig,
    i: usize,
    replacement: (SparseVector, Label),
    probes: &[(SparseVector, SparseVector)],
) -> Result<StabilityMeasurement> {
    if probes.is_empty() {
        return Err(invalid("need at least one probe pair"));
    }
    let (row, label) = replacement;
    let d = probes
        .iter()
        .map(|(a, b)| a.dim().max(b.dim()))
        .chain([ds.dim(), row.dim()])
        .max()
        .unwrap_or(0);
    let mut ds = ds.clone();
    ds.widen(d);
    let row = row.with_dim(d);
    let swapped = ds.replace(i, row, label)?;
    let (wa, trace) = train_adaptive(&ds, cfg)?;
    let (wb, _) = train_adaptive(&swapped, cfg)?;
    let mut measured: f64 = 0.0;
    for (xp, xn) in probes {
        let la = pair_loss(cfg.loss, wa.weights(), xp, xn)?;
        let lb = pair_loss(cfg.loss, wb.weights(), xp, xn)?;
        measured = measured.max((la - lb).abs());
    }
    let g = hinge_lipschitz(&ds).max(hinge_lipschitz(&swapped));
    let bound = stability_generalization_bound(g, ds.len(), &trace.step_sizes()) / 2.0;
    Ok(StabilityMeasurement { measured, bound })
}
