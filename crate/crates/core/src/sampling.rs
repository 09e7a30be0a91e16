//! Pair-sampling laws, importance weights and gradient-variance estimators.
//!
//! Two laws over ordered pairs `(i, j)`, `i ≠ j`, of an `n`-row dataset:
//!
//! - `Uniform`: `P(i, j) = 1 / (n(n-1))` for every ordered pair.
//! - `Opposite`: `P(i, j) = 1 / (2n⁺n⁻)` on pairs with different labels and 0
//!   on same-label pairs. Losses are symmetric in the ordering, so a draw is
//!   realized as `i` uniform over positives and `j` uniform over negatives.
//!
//! An importance weight rescales each sampled pair gradient so its
//! expectation equals the full loss gradient under the target
//! [`Normalization`].

use crate::data::{Dataset, SparseVector};
use crate::error::{invalid, Error, Result};
use crate::pairloss::{pair_grad, Normalization, PairLoss};
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PairSampling {
    Uniform,
    #[default]
    Opposite,
}

/// A sampling law bound to the class counts of one dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDistribution {
    kind: PairSampling,
    n: usize,
    n_pos: usize,
    n_neg: usize,
}

/// Default number of pairs [`variance_exact`] will enumerate.
pub const DEFAULT_ENUMERATION_CAP: usize = 2000;

impl PairDistribution {
    pub fn new(kind: PairSampling, ds: &Dataset) -> Result<Self> {
        match kind {
            PairSampling::Opposite => ds.require_both_classes()?,
            PairSampling::Uniform if ds.len() < 2 => {
                return Err(invalid("uniform pair sampling needs at least two rows"))
            }
            PairSampling::Uniform => {}
        }
        Ok(Self { kind, n: ds.len(), n_pos: ds.n_pos(), n_neg: ds.n_neg() })
    }

    pub fn kind(&self) -> PairSampling {
        self.kind
    }

    fn ordered_pairs(&self) -> f64 {
        self.n as f64 * (self.n as f64 - 1.0)
    }

    fn opposite_ordered_pairs(&self) -> f64 {
        2.0 * self.n_pos as f64 * self.n_neg as f64
    }

    /// `P(i, j)` over the ordered-pair space.
    pub fn probability(&self, ds: &Dataset, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match self.kind {
            PairSampling::Uniform => 1.0 / self.ordered_pairs(),
            PairSampling::Opposite => {
                if ds.label(i) != ds.label(j) {
                    1.0 / self.opposite_ordered_pairs()
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws a pair. `Opposite` always returns `(positive, negative)`.
    pub fn sample_pair(&self, rng: &mut StreamRng, ds: &Dataset) -> (usize, usize) {
        match self.kind {
            PairSampling::Opposite => {
                let i = ds.pos_idx()[rng::index(rng, self.n_pos)];
                let j = ds.neg_idx()[rng::index(rng, self.n_neg)];
                (i, j)
            }
            PairSampling::Uniform => {
                let i = rng::index(rng, self.n);
                let mut j = rng::index(rng, self.n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            }
        }
    }

    /// Weight making `weight · ∇ℓ(i, j)` unbiased for the full loss gradient
    /// under `target`. Same-label pairs drawn uniformly carry weight 0, since
    /// they contribute nothing to either objective.
    pub fn importance_weight(&self, ds: &Dataset, i: usize, j: usize, target: Normalization) -> Result<f64> {
        if self.probability(ds, i, j) == 0.0 {
            return Err(Error::ZeroProbabilityPair { i, j });
        }
        if ds.label(i) == ds.label(j) {
            return Ok(0.0);
        }
        let opposite_share = self.opposite_ordered_pairs() / self.ordered_pairs();
        Ok(match (self.kind, target) {
            (PairSampling::Opposite, Normalization::OppositeSpace) => 1.0,
            (PairSampling::Opposite, Normalization::PairSpace) => opposite_share,
            (PairSampling::Uniform, Normalization::PairSpace) => 1.0,
            (PairSampling::Uniform, Normalization::OppositeSpace) => 1.0 / opposite_share,
        })
    }

    /// Constant weight on opposite pairs; lets the optimizer skip the
    /// per-draw label lookups.
    pub fn opposite_weight(&self, target: Normalization) -> f64 {
        let share = self.opposite_ordered_pairs() / self.ordered_pairs();
        match (self.kind, target) {
            (PairSampling::Opposite, Normalization::OppositeSpace) => 1.0,
            (PairSampling::Opposite, Normalization::PairSpace) => share,
            (PairSampling::Uniform, Normalization::PairSpace) => 1.0,
            (PairSampling::Uniform, Normalization::OppositeSpace) => 1.0 / share,
        }
    }

    /// Number of pairs in the support that [`variance_exact`] enumerates.
    pub fn support_size(&self) -> usize {
        match self.kind {
            PairSampling::Opposite => self.n_pos * self.n_neg,
            PairSampling::Uniform => self.n * (self.n - 1),
        }
    }

    /// Every support pair with the probability of drawing it. For `Opposite`
    /// each (positive, negative) pair stands for both orderings, so its mass
    /// is `1 / (n⁺n⁻)`.
    fn support(&self, ds: &Dataset) -> Vec<(usize, usize, f64)> {
        match self.kind {
            PairSampling::Opposite => {
                let p = 1.0 / (self.n_pos as f64 * self.n_neg as f64);
                ds.pos_idx()
                    .iter()
                    .flat_map(|&i| ds.neg_idx().iter().map(move |&j| (i, j, p)))
                    .collect()
            }
            PairSampling::Uniform => {
                let p = 1.0 / self.ordered_pairs();
                (0..self.n)
                    .flat_map(|i| (0..self.n).filter(move |&j| j != i).map(move |j| (i, j, p)))
                    .collect()
            }
        }
    }
}

/// `∇ℓ` for a drawn pair, oriented so the positive row comes first, or
/// `None` for a same-label pair.
fn oriented_grad(loss: PairLoss, w: &[f64], ds: &Dataset, i: usize, j: usize) -> Result<Option<SparseVector>> {
    if ds.label(i) == ds.label(j) {
        return Ok(None);
    }
    let (p, q) = if ds.label(i).is_positive() { (i, j) } else { (j, i) };
    Ok(Some(pair_grad(loss, w, ds.row(p), ds.row(q))?))
}

fn weighted_grad(
    loss: PairLoss,
    w: &[f64],
    dist: &PairDistribution,
    ds: &Dataset,
    i: usize,
    j: usize,
    target: Normalization,
) -> Result<SparseVector> {
    let weight = dist.importance_weight(ds, i, j, target)?;
    Ok(match oriented_grad(loss, w, ds, i, j)? {
        Some(g) if weight != 0.0 => g.scaled(weight),
        _ => SparseVector::zeros(w.len()),
    })
}

/// One importance-weighted stochastic gradient.
pub fn stochastic_gradient(
    loss: PairLoss,
    w: &[f64],
    dist: &PairDistribution,
    rng: &mut StreamRng,
    ds: &Dataset,
    target: Normalization,
) -> Result<SparseVector> {
    let (i, j) = dist.sample_pair(rng, ds);
    weighted_grad(loss, w, dist, ds, i, j, target)
}

/// `E[g]` by enumerating the support: `Σ P(i,j) · weight(i,j) · ∇ℓ(i,j)`.
pub fn expected_gradient(
    loss: PairLoss,
    w: &[f64],
    dist: &PairDistribution,
    ds: &Dataset,
    target: Normalization,
) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; w.len()];
    for (i, j, p) in dist.support(ds) {
        let g = weighted_grad(loss, w, dist, ds, i, j, target)?;
        for (k, v) in g.iter() {
            mean[k] += p * v;
        }
    }
    Ok(mean)
}

/// `‖g - mean‖²` with `g` sparse and `mean` dense, given `‖mean‖²`.
fn centred_sq(g: &SparseVector, mean: &[f64], mean_sq: f64) -> f64 {
    let mut s = mean_sq;
    for (k, v) in g.iter() {
        let d = v - mean[k];
        s += d * d - mean[k] * mean[k];
    }
    s.max(0.0)
}

/// Exact `Var[g] = Σ P(i,j) ‖g_ij - E g‖²` by enumeration, refusing
/// supports larger than `cap` pairs.
pub fn variance_exact(
    loss: PairLoss,
    w: &[f64],
    dist: &PairDistribution,
    ds: &Dataset,
    target: Normalization,
    cap: usize,
) -> Result<f64> {
    let pairs = dist.support_size();
    if pairs > cap {
        return Err(Error::EnumerationCap { pairs, cap });
    }
    let mean = expected_gradient(loss, w, dist, ds, target)?;
    let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
    let mut var = 0.0;
    for (i, j, p) in dist.support(ds) {
        let g = weighted_grad(loss, w, dist, ds, i, j, target)?;
        var += p * centred_sq(&g, &mean, mean_sq);
    }
    Ok(var)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of `Var[g]` from `draws` samples of stream
/// `(seed, MONTE_CARLO)`. Two passes over the same stream: the first forms
/// the sample mean gradient, the second averages `‖g_k - ĝ‖²` (scaled by
/// `K / (K - 1)`) and reports its standard error.
pub fn variance_mc(
    loss: PairLoss,
    w: &[f64],
    dist: &PairDistribution,
    ds: &Dataset,
    draws: usize,
    seed: u64,
    target: Normalization,
) -> Result<VarianceEstimate> {
    if draws < 2 {
        return Err(invalid("Monte-Carlo variance needs at least two draws"));
    }
    let mut mean = vec![0.0; w.len()];
    let mut rng = rng::stream(seed, rng::MONTE_CARLO);
    for _ in 0..draws {
        let g = stochastic_gradient(loss, w, dist, &mut rng, ds, target)?;
        for (k, v) in g.iter() {
            mean[k] += v;
        }
    }
    for m in &mut mean {
        *m /= draws as f64;
    }
    let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
    let mut rng = rng::stream(seed, rng::MONTE_CARLO);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let g = stochastic_gradient(loss, w, dist, &mut rng, ds, target)?;
        let q = centred_sq(&g, &mean, mean_sq);
        s1 += q;
        s2 += q * q;
    }
    let k = draws as f64;
    let avg = s1 / k;
    let sd = ((s2 / k - avg * avg).max(0.0) * k / (k - 1.0)).sqrt();
    Ok(VarianceEstimate { mean: avg * k / (k - 1.0), stderr: sd / k.sqrt() * k / (k - 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn ds_from(points: &[(f64, f64, bool)]) -> Dataset {
        let rows = points.iter().map(|&(a, b, _)| SparseVector::from_dense(&[a, b]).with_dim(2)).collect();
        let labels = points
            .iter()
            .map(|&(_, _, p)| if p { Label::Positive } else { Label::Negative })
            .collect();
        Dataset::new(rows, labels).unwrap()
    }

    #[test]
    fn single_pair_always_drawn() {
        let ds = ds_from(&[(1.0, 0.0, true), (0.0, 1.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let mut rng = rng::stream(0, 0);
        for _ in 0..100 {
            assert_eq!(d.sample_pair(&mut rng, &ds), (0, 1));
        }
    }

    #[test]
    fn opposite_frequencies() {
        let ds = ds_from(&[(1.0, 0.0, true), (2.0, 0.0, true), (0.0, 1.0, false), (0.0, 2.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let mut rng = rng::stream(1, 0);
        let mut counts = [[0usize; 4]; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let (i, j) = d.sample_pair(&mut rng, &ds);
            counts[i][j] += 1;
        }
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 2..4 {
                let f = counts[i][j] as f64 / draws as f64;
                assert!((f - 0.25).abs() < 0.01, "({i},{j}) freq {f}");
                let e = draws as f64 / 4.0;
                chi2 += (counts[i][j] as f64 - e).powi(2) / e;
            }
        }
        // 3 degrees of freedom, 99.9% quantile
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn uniform_frequencies() {
        let ds = ds_from(&[(1.0, 0.0, true), (2.0, 0.0, true), (0.0, 1.0, false)]);
        let d = PairDistribution::new(PairSampling::Uniform, &ds).unwrap();
        let mut rng = rng::stream(2, 0);
        let mut counts = [[0usize; 3]; 3];
        let draws = 60_000;
        for _ in 0..draws {
            let (i, j) = d.sample_pair(&mut rng, &ds);
            assert_ne!(i, j);
            counts[i][j] += 1;
        }
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let f = counts[i][j] as f64 / draws as f64;
                    assert!((f - 1.0 / 6.0).abs() < 0.01);
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let ds = ds_from(&[(1.0, 0.0, true), (2.0, 0.0, true), (0.0, 1.0, false), (3.0, 1.0, false), (1.0, 1.0, false)]);
        for kind in [PairSampling::Uniform, PairSampling::Opposite] {
            let d = PairDistribution::new(kind, &ds).unwrap();
            let total: f64 = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).map(|(i, j)| d.probability(&ds, i, j)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights() {
        // n+ = 2, n- = 3, n = 5
        let ds = ds_from(&[(1.0, 0.0, true), (2.0, 0.0, true), (0.0, 1.0, false), (3.0, 1.0, false), (1.0, 1.0, false)]);
        let opp = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let w = opp.importance_weight(&ds, 0, 2, Normalization::PairSpace).unwrap();
        assert!((w - 12.0 / 20.0).abs() < 1e-15);
        assert_eq!(opp.importance_weight(&ds, 1, 4, Normalization::OppositeSpace).unwrap(), 1.0);
        assert!(matches!(
            opp.importance_weight(&ds, 0, 1, Normalization::PairSpace),
            Err(Error::ZeroProbabilityPair { .. })
        ));
        let uni = PairDistribution::new(PairSampling::Uniform, &ds).unwrap();
        assert_eq!(uni.importance_weight(&ds, 0, 1, Normalization::PairSpace).unwrap(), 0.0);
        assert_eq!(uni.importance_weight(&ds, 3, 0, Normalization::PairSpace).unwrap(), 1.0);
    }

    #[test]
    fn zero_model_single_pair_gradient() {
        let ds = ds_from(&[(1.0, 2.0, true), (0.5, -1.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let mut rng = rng::stream(0, 0);
        let g = stochastic_gradient(PairLoss::Squared, &[0.0, 0.0], &d, &mut rng, &ds, Normalization::PairSpace).unwrap();
        // weight = 2·1·1 / (2·1) = 1, gradient −2Δ
        assert_eq!(g.to_dense(), vec![-1.0, -6.0]);
    }

    #[test]
    fn duplicated_points_have_zero_variance() {
        let ds = ds_from(&[(1.0, 2.0, true), (1.0, 2.0, true), (0.0, 1.0, false), (0.0, 1.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let w = [0.3, 0.2];
        let mut rng = rng::stream(3, 0);
        let first = stochastic_gradient(PairLoss::Squared, &w, &d, &mut rng, &ds, Normalization::OppositeSpace).unwrap();
        for _ in 0..20 {
            let g = stochastic_gradient(PairLoss::Squared, &w, &d, &mut rng, &ds, Normalization::OppositeSpace).unwrap();
            assert_eq!(g, first);
        }
        let v = variance_exact(PairLoss::Squared, &w, &d, &ds, Normalization::OppositeSpace, 100).unwrap();
        assert!(v.abs() < 1e-24);
    }

    #[test]
    fn single_pair_variance_zero() {
        let ds = ds_from(&[(1.0, 2.0, true), (0.0, 1.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        assert_eq!(variance_exact(PairLoss::Squared, &[0.1, 0.1], &d, &ds, Normalization::PairSpace, 10).unwrap(), 0.0);
    }

    #[test]
    fn cap_enforced() {
        let ds = ds_from(&[(1.0, 2.0, true), (0.0, 1.0, false), (0.0, 3.0, false)]);
        let d = PairDistribution::new(PairSampling::Uniform, &ds).unwrap();
        assert!(matches!(
            variance_exact(PairLoss::Squared, &[0.0, 0.0], &d, &ds, Normalization::PairSpace, 5),
            Err(Error::EnumerationCap { pairs: 6, cap: 5 })
        ));
    }

    #[test]
    fn mc_degenerate_and_deterministic() {
        let ds = ds_from(&[(1.0, 2.0, true), (0.0, 1.0, false)]);
        let d = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let est = variance_mc(PairLoss::Squared, &[0.0, 0.0], &d, &ds, 2, 5, Normalization::PairSpace).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(variance_mc(PairLoss::Squared, &[0.0, 0.0], &d, &ds, 1, 5, Normalization::PairSpace).is_err());
        let ds = ds_from(&[(1.0, 2.0, true), (2.0, 0.0, true), (0.0, 1.0, false), (1.0, -1.0, false)]);
        let d = PairDistribution::new(PairSampling::Uniform, &ds).unwrap();
        let a = variance_mc(PairLoss::Squared, &[0.2, 0.1], &d, &ds, 500, 9, Normalization::PairSpace).unwrap();
        let b = variance_mc(PairLoss::Squared, &[0.2, 0.1], &d, &ds, 500, 9, Normalization::PairSpace).unwrap();
        assert_eq!(a, b);
    }
}
