//! Pairwise surrogate losses for a linear scorer `f(x) = <w, x>`.
//!
//! Losses are written for the ordering (positive, negative): with
//! `Δ = x_pos - x_neg` and margin `<w, Δ>`,
//! squared loss is `(1 - <w, Δ>)²` and hinge loss is `max(0, 1 - <w, Δ>)`.

use crate::data::{Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::prox::Regularizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairLoss {
    Squared,
    Hinge,
}

impl PairLoss {
    pub fn value_at_margin(self, margin: f64) -> f64 {
        match self {
            PairLoss::Squared => {
                let r = 1.0 - margin;
                r * r
            }
            PairLoss::Hinge => (1.0 - margin).max(0.0),
        }
    }

    /// Derivative of the loss with respect to the margin. The hinge kink
    /// (margin exactly 1) gets subgradient 0.
    pub fn slope_at_margin(self, margin: f64) -> f64 {
        match self {
            PairLoss::Squared => -2.0 * (1.0 - margin),
            PairLoss::Hinge => {
                if margin < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the opposite-pair loss sum is normalized.
///
/// `OppositeSpace` averages over the `n⁺n⁻` (positive, negative) pairs.
/// `PairSpace` averages over all `n(n-1)` ordered pairs with same-label pairs
/// contributing zero, which is the `OppositeSpace` value times
/// `2n⁺n⁻ / (n(n-1))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Normalization {
    #[default]
    OppositeSpace,
    PairSpace,
}

impl Normalization {
    /// Weight of one (positive, negative) pair term in the full objective.
    pub fn pair_coefficient(self, n_pos: usize, n_neg: usize) -> f64 {
        match self {
            Normalization::OppositeSpace => 1.0 / (n_pos as f64 * n_neg as f64),
            Normalization::PairSpace => {
                let n = (n_pos + n_neg) as f64;
                2.0 / (n * (n - 1.0))
            }
        }
    }

    /// Factor turning an `OppositeSpace` average into this normalization.
    pub fn rescale_opposite(self, n_pos: usize, n_neg: usize) -> f64 {
        match self {
            Normalization::OppositeSpace => 1.0,
            Normalization::PairSpace => {
                let n = (n_pos + n_neg) as f64;
                2.0 * n_pos as f64 * n_neg as f64 / (n * (n - 1.0))
            }
        }
    }
}

/// Dense linear model.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    w: Vec<f64>,
}

impl Model {
    pub fn zeros(d: usize) -> Self {
        Self { w: vec![0.0; d] }
    }

    pub fn from_weights(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        x.iter().filter(|&(i, _)| i < self.w.len()).map(|(i, v)| v * self.w[i]).sum()
    }

    pub fn scores(&self, ds: &Dataset) -> Vec<f64> {
        ds.rows().iter().map(|x| self.score(x)).collect()
    }

    pub fn support_size(&self) -> usize {
        self.w.iter().filter(|&&v| v != 0.0).count()
    }
}

fn check_dims(w: &[f64], x: &SparseVector) -> Result<()> {
    if x.dim() > w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: x.dim() });
    }
    Ok(())
}

/// `<w, x_pos - x_neg>` after dimension checks.
pub fn margin(w: &[f64], x_pos: &SparseVector, x_neg: &SparseVector) -> Result<f64> {
    check_dims(w, x_pos)?;
    check_dims(w, x_neg)?;
    Ok(x_pos.dot(w) - x_neg.dot(w))
}

pub fn pair_loss(kind: PairLoss, w: &[f64], x_pos: &SparseVector, x_neg: &SparseVector) -> Result<f64> {
    Ok(kind.value_at_margin(margin(w, x_pos, x_neg)?))
}

/// Gradient in `w`; its support lies inside `support(x_pos) ∪ support(x_neg)`.
pub fn pair_grad(
    kind: PairLoss,
    w: &[f64],
    x_pos: &SparseVector,
    x_neg: &SparseVector,
) -> Result<SparseVector> {
    let slope = kind.slope_at_margin(margin(w, x_pos, x_neg)?);
    if slope == 0.0 {
        return Ok(SparseVector::zeros(w.len()));
    }
    Ok(x_pos.sub(x_neg).scaled(slope).with_dim(w.len()))
}

/// Loss part of the empirical objective by enumerating every
/// (positive, negative) pair.
pub fn full_loss(kind: PairLoss, w: &[f64], ds: &Dataset, norm: Normalization) -> Result<f64> {
    ds.require_both_classes()?;
    let mut sum = 0.0;
    for &i in ds.pos_idx() {
        for &j in ds.neg_idx() {
            sum += pair_loss(kind, w, ds.row(i), ds.row(j))?;
        }
    }
    Ok(sum * norm.pair_coefficient(ds.n_pos(), ds.n_neg()))
}

/// Full regularized objective by pair enumeration (the exact oracle).
pub fn full_objective(
    kind: PairLoss,
    w: &[f64],
    ds: &Dataset,
    reg: &Regularizer,
    norm: Normalization,
) -> Result<f64> {
    Ok(full_loss(kind, w, ds, norm)? + reg.value(w))
}

/// Gradient of the loss part by pair enumeration, positive-major order:
/// `Σ_i Σ_j c · pair_grad(i, j)` with `c` the pair coefficient.
pub fn full_gradient(kind: PairLoss, w: &[f64], ds: &Dataset, norm: Normalization) -> Result<Vec<f64>> {
    ds.require_both_classes()?;
    let c = norm.pair_coefficient(ds.n_pos(), ds.n_neg());
    let mut out = vec![0.0; w.len()];
    for &i in ds.pos_idx() {
        for &j in ds.neg_idx() {
            let g = pair_grad(kind, w, ds.row(i), ds.row(j))?;
            for (k, v) in g.iter() {
                out[k] += c * v;
            }
        }
    }
    Ok(out)
}

/// Loss part of the objective from precomputed scores in
/// `O((n⁺ + n⁻) log n⁻)`, without enumerating pairs.
pub fn loss_from_scores(kind: PairLoss, pos: &[f64], neg: &[f64], norm: Normalization) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::ClassEmpty);
    }
    let opposite = match kind {
        // mean over pairs of (a_i + t_j)² with a_i = 1 - s_i
        PairLoss::Squared => {
            let (ma, va) = mean_var(pos.iter().map(|s| 1.0 - s));
            let (mt, vt) = mean_var(neg.iter().copied());
            va + vt + (ma + mt) * (ma + mt)
        }
        PairLoss::Hinge => {
            let mut sorted = neg.to_vec();
            sorted.sort_by(f64::total_cmp);
            // suffix[k] = Σ sorted[k..]
            let mut suffix = vec![0.0; sorted.len() + 1];
            for k in (0..sorted.len()).rev() {
                suffix[k] = suffix[k + 1] + sorted[k];
            }
            let mut sum = 0.0;
            for &s in pos {
                let cut = s - 1.0;
                let k = sorted.partition_point(|&t| t <= cut);
                let cnt = (sorted.len() - k) as f64;
                sum += cnt * (1.0 - s) + suffix[k];
            }
            sum / (pos.len() as f64 * neg.len() as f64)
        }
    };
    Ok(opposite * norm.rescale_opposite(pos.len(), neg.len()))
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Fast objective: scores every row once, then [`loss_from_scores`].
pub fn objective(
    kind: PairLoss,
    w: &[f64],
    ds: &Dataset,
    reg: &Regularizer,
    norm: Normalization,
) -> Result<f64> {
    ds.require_both_classes()?;
    for r in ds.rows() {
        check_dims(w, r)?;
    }
    let pos: Vec<f64> = ds.pos_idx().iter().map(|&i| ds.row(i).dot(w)).collect();
    let neg: Vec<f64> = ds.neg_idx().iter().map(|&i| ds.row(i).dot(w)).collect();
    Ok(loss_from_scores(kind, &pos, &neg, norm)? + reg.value(w))
}

/// First and second moments of the pair differences, which make the squared
/// pairwise loss a dense quadratic:
/// `L(w) = 1 - 2<w, μ> + wᵀ S w` with `μ = E[Δ]`, `S = E[ΔΔᵀ]` over the
/// (positive, negative) pairs. Evaluation costs `O(d²)`, independent of `n`.
#[derive(Clone, Debug)]
pub struct SquaredPairMoments {
    mean: Vec<f64>,
    second: Vec<f64>,
    dim: usize,
    rescale: f64,
}

impl SquaredPairMoments {
    pub fn new(ds: &Dataset, norm: Normalization) -> Result<Self> {
        ds.require_both_classes()?;
        let d = ds.dim();
        let class_moments = |idx: &[usize]| {
            let k = idx.len() as f64;
            let mut m = vec![0.0; d];
            for &i in idx {
                for (a, v) in ds.row(i).iter() {
                    m[a] += v / k;
                }
            }
            let mut c = vec![0.0; d * d];
            for &i in idx {
                let x = ds.row(i).to_dense();
                let centred: Vec<f64> = x.iter().zip(&m).map(|(x, m)| x - m).collect();
                for a in 0..d {
                    if centred[a] == 0.0 {
                        continue;
                    }
                    for b in 0..d {
                        c[a * d + b] += centred[a] * centred[b] / k;
                    }
                }
            }
            (m, c)
        };
        let (mp, cp) = class_moments(ds.pos_idx());
        let (mn, cn) = class_moments(ds.neg_idx());
        let mean: Vec<f64> = mp.iter().zip(&mn).map(|(a, b)| a - b).collect();
        let mut second = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                second[a * d + b] = cp[a * d + b] + cn[a * d + b] + mean[a] * mean[b];
            }
        }
        Ok(Self {
            mean,
            second,
            dim: d,
            rescale: norm.rescale_opposite(ds.n_pos(), ds.n_neg()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn quad(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|a| (0..d).map(|b| self.second[a * d + b] * w[b]).sum())
            .collect()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let sw = self.quad(w);
        let wsw: f64 = w.iter().zip(&sw).map(|(a, b)| a * b).sum();
        let wm: f64 = w.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        (1.0 - 2.0 * wm + wsw) * self.rescale
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.quad(w)
            .iter()
            .zip(&self.mean)
            .map(|(sw, m)| 2.0 * (sw - m) * self.rescale)
            .collect()
    }

    /// Largest eigenvalue bound of the loss Hessian `2S` (Gershgorin),
    /// a valid smoothness constant.
    pub fn smoothness(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|a| (0..d).map(|b| self.second[a * d + b].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            * 2.0
            * self.rescale
    }
}
