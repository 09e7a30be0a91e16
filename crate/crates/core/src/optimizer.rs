//! Adaptive-sample-size doubly stochastic proximal gradient descent.
//!
//! The outer loop trains on nested prefixes `m_1 = m0 < m_2 < ... = n` of one
//! seeded permutation, growing by `β` each stage and warm-starting from the
//! previous stage's last iterate. The inner loop draws one pair per step,
//! forms the importance-weighted pair gradient and takes a proximal
//! elastic-net step.

use std::time::Instant;

use crate::data::{Dataset, StagePermutation};
use crate::error::{invalid, Error, Result};
use crate::metrics::{auc_rank, ScoredSet, TiesPolicy};
use crate::pairloss::{objective, Model, Normalization, PairLoss, SquaredPairMoments};
use crate::prox::{prox_elastic_net, LazyIterate, Regularizer};
use crate::rng::{self, StreamRng};
use crate::sampling::{PairDistribution, PairSampling};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `γ_s = γ0 / m_s^p`
    PerStage { gamma0: f64, exponent: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::PerStage { gamma0: 1.0, exponent: 0.5 }
    }
}

impl StepSchedule {
    pub fn gamma(&self, m: usize) -> f64 {
        match *self {
            StepSchedule::Constant(g) => g,
            StepSchedule::PerStage { gamma0, exponent } => gamma0 / (m as f64).powf(exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let g = match *self {
            StepSchedule::Constant(g) => g,
            StepSchedule::PerStage { gamma0, exponent } => {
                if !exponent.is_finite() {
                    return Err(invalid("step exponent must be finite"));
                }
                gamma0
            }
        };
        if g > 0.0 && g.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("step size must be positive, got {g}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum InnerSchedule {
    /// `T_s = m_s`
    #[default]
    LinearInM,
    /// `T_s = ceil(c · m_s^{4/3})`
    PowerLaw { c: f64 },
    Fixed(usize),
}

impl InnerSchedule {
    pub fn iters(&self, m: usize) -> usize {
        match *self {
            InnerSchedule::LinearInM => m,
            InnerSchedule::PowerLaw { c } => ((c * (m as f64).powf(4.0 / 3.0)).ceil() as usize).max(1),
            InnerSchedule::Fixed(t) => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub m0: usize,
    pub step: StepSchedule,
    pub inner: InnerSchedule,
    pub loss: PairLoss,
    pub reg: Regularizer,
    pub sampling: PairSampling,
    pub normalization: Normalization,
    /// Statistical-rate exponent `α` of `V_m = m^{-α}`; reported, not used
    /// by the iteration itself.
    pub alpha: f64,
    pub seed: u64,
    /// Budget multiplier for the first stage of a multi-stage run, which
    /// starts cold from `w = 0`.
    pub first_stage_factor: usize,
    /// Interleave classes in the stage permutation so every prefix of size
    /// two or more holds both labels.
    pub stratify: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            m0: 100,
            step: StepSchedule::default(),
            inner: InnerSchedule::default(),
            loss: PairLoss::Squared,
            reg: Regularizer::default(),
            sampling: PairSampling::Opposite,
            normalization: Normalization::OppositeSpace,
            alpha: 0.5,
            seed: 0,
            first_stage_factor: 3,
            stratify: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(invalid(format!("growth rate must exceed 1, got {}", self.beta)));
        }
        if self.m0 < 2 {
            return Err(invalid(format!("initial sample size must be at least 2, got {}", self.m0)));
        }
        if !(0.0..=0.5).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 0.5], got {}", self.alpha)));
        }
        if self.first_stage_factor == 0 {
            return Err(invalid("first-stage budget factor must be at least 1"));
        }
        if let InnerSchedule::PowerLaw { c } = self.inner {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("power-law constant must be positive, got {c}")));
            }
        }
        self.step.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub m: usize,
    pub inner_iters: usize,
    pub gamma: f64,
    /// Wall-clock seconds spent in the inner loop.
    pub seconds: f64,
    /// `R_{m_s}` at the warm start.
    pub start_objective: f64,
    /// `R_{m_s}` at the stage output.
    pub objective: f64,
    pub test_auc: Option<f64>,
    /// Cumulative pair-gradient evaluations up to the end of this stage.
    pub grad_evals: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub stages: Vec<StageRecord>,
}

impl TrainTrace {
    pub fn grad_evals(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.grad_evals)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.stages.last().map(|s| s.objective)
    }

    pub fn seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }

    /// Step size of every inner iteration, in order.
    pub fn step_sizes(&self) -> Vec<f64> {
        self.stages
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.gamma, s.inner_iters))
            .collect()
    }
}

/// `m_1 = m0`, `m_{s+1} = min(ceil(β m_s), n)`, stopping at the first `m_s = n`.
pub fn stage_sizes(n: usize, m0: usize, beta: f64) -> Result<Vec<usize>> {
    if m0 < 2 {
        return Err(invalid(format!("initial sample size must be at least 2, got {m0}")));
    }
    if m0 > n {
        return Err(invalid(format!("initial sample size {m0} exceeds n = {n}")));
    }
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(invalid(format!("growth rate must exceed 1, got {beta}")));
    }
    let mut sizes = vec![m0];
    let mut m = m0;
    while m < n {
        let next = (beta * m as f64).ceil() as usize;
        m = next.max(m + 1).min(n);
        sizes.push(m);
    }
    Ok(sizes)
}

/// Stage-independent inputs of [`inner_dsgd`].
#[derive(Clone, Copy, Debug)]
pub struct InnerProblem<'a> {
    pub loss: PairLoss,
    pub reg: &'a Regularizer,
    pub sampling: PairSampling,
    pub normalization: Normalization,
}

/// `iters` steps of `w ← prox_{γΩ}(w - γ g)` on one stage subset, starting
/// at `w0`. `stage` only labels divergence errors.
pub fn inner_dsgd(
    w0: &[f64],
    stage_ds: &Dataset,
    iters: usize,
    gamma: f64,
    problem: InnerProblem<'_>,
    rng: &mut StreamRng,
    stage: usize,
) -> Result<Vec<f64>> {
    if iters == 0 {
        return Err(invalid("inner iteration count must be at least 1"));
    }
    stage_ds.require_both_classes()?;
    if stage_ds.dim() > w0.len() {
        return Err(Error::DimensionMismatch { expected: w0.len(), got: stage_ds.dim() });
    }
    let dist = PairDistribution::new(problem.sampling, stage_ds)?;
    let weight = dist.opposite_weight(problem.normalization);
    let mut w = LazyIterate::new(w0.to_vec(), *problem.reg, gamma)?;
    for t in 0..iters {
        let (i, j) = dist.sample_pair(rng, stage_ds);
        let (li, lj) = (stage_ds.label(i), stage_ds.label(j));
        let grad = if li == lj {
            // same-label draws (uniform law only) carry zero weight
            crate::data::SparseVector::zeros(w0.len())
        } else {
            let (p, q) = if li.is_positive() { (i, j) } else { (j, i) };
            let (xp, xq) = (stage_ds.row(p), stage_ds.row(q));
            let margin = w.dot(xp) - w.dot(xq);
            let slope = problem.loss.slope_at_margin(margin) * weight;
            if slope == 0.0 {
                crate::data::SparseVector::zeros(w0.len())
            } else {
                xp.sub(xq).scaled(slope)
            }
        };
        if !w.step(&grad) {
            return Err(Error::Diverged { stage, iteration: t + 1 });
        }
    }
    let out = w.into_weights();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { stage, iteration: iters });
    }
    Ok(out)
}

fn stage_objective(cfg: &TrainConfig, w: &[f64], ds: &Dataset) -> Result<f64> {
    objective(cfg.loss, w, ds, &cfg.reg, cfg.normalization)
}

fn test_auc(w: &[f64], test: Option<&Dataset>) -> Result<Option<f64>> {
    let Some(test) = test else {
        return Ok(None);
    };
    let model = Model::from_weights(w.to_vec());
    let ss = ScoredSet::new(model.scores(test), test.labels().to_vec())?;
    Ok(Some(auc_rank(&ss, TiesPolicy::Half)?))
}

fn run_stages(
    ds: &Dataset,
    cfg: &TrainConfig,
    sizes: &[usize],
    iters: &[usize],
    eval: Option<&Dataset>,
) -> Result<(Model, TrainTrace)> {
    cfg.validate()?;
    ds.require_both_classes()?;
    let perm = StagePermutation::new(ds, cfg.seed, cfg.stratify);
    let problem = InnerProblem {
        loss: cfg.loss,
        reg: &cfg.reg,
        sampling: cfg.sampling,
        normalization: cfg.normalization,
    };
    let mut w = vec![0.0; ds.dim()];
    let mut trace = TrainTrace::default();
    let mut evals = 0u64;
    for (s, (&m, &t)) in sizes.iter().zip(iters).enumerate() {
        let stage_ds = perm.prefix(ds, m)?;
        let gamma = cfg.step.gamma(m);
        let start_objective = stage_objective(cfg, &w, &stage_ds)?;
        let mut rng = rng::stream(cfg.seed, rng::TRAIN_BASE + s as u64);
        let clock = Instant::now();
        w = inner_dsgd(&w, &stage_ds, t, gamma, problem, &mut rng, s + 1)?;
        let seconds = clock.elapsed().as_secs_f64();
        evals += t as u64;
        trace.stages.push(StageRecord {
            stage: s + 1,
            m,
            inner_iters: t,
            gamma,
            seconds,
            start_objective,
            objective: stage_objective(cfg, &w, &stage_ds)?,
            test_auc: test_auc(&w, eval)?,
            grad_evals: evals,
        });
    }
    Ok((Model::from_weights(w), trace))
}

/// Inner iteration counts for the stage sizes; the first stage of a
/// multi-stage run gets `first_stage_factor` times its budget.
pub fn stage_budgets(cfg: &TrainConfig, sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .map(|(s, &m)| {
            let t = cfg.inner.iters(m).max(1);
            if s == 0 && sizes.len() > 1 {
                t * cfg.first_stage_factor
            } else {
                t
            }
        })
        .collect()
}

/// Adaptive-sample-size training on `ds`.
pub fn train_adaptive(ds: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainTrace)> {
    train_adaptive_eval(ds, cfg, None)
}

/// [`train_adaptive`], recording test AUC on `eval` after every stage.
pub fn train_adaptive_eval(ds: &Dataset, cfg: &TrainConfig, eval: Option<&Dataset>) -> Result<(Model, TrainTrace)> {
    cfg.validate()?;
    let sizes = stage_sizes(ds.len(), cfg.m0, cfg.beta)?;
    let iters = stage_budgets(cfg, &sizes);
    run_stages(ds, cfg, &sizes, &iters, eval)
}

/// Non-adaptive baseline: one stage on the whole dataset with
/// `cfg.inner.iters(n)` iterations, same sampling and prox machinery.
pub fn train_plain(ds: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainTrace)> {
    train_plain_eval(ds, cfg, None)
}

pub fn train_plain_eval(ds: &Dataset, cfg: &TrainConfig, eval: Option<&Dataset>) -> Result<(Model, TrainTrace)> {
    let n = ds.len();
    if n < 2 {
        return Err(invalid("need at least two rows"));
    }
    let cfg = TrainConfig { m0: n, ..cfg.clone() };
    run_stages(ds, &cfg, &[n], &[cfg.inner.iters(n).max(1)], eval)
}

/// Deterministic full-batch proximal gradient on the squared pairwise
/// loss, using the `O(d²)` moment form of the gradient. Used to obtain
/// reference optima.
pub fn full_batch_prox_gradient(
    moments: &SquaredPairMoments,
    reg: &Regularizer,
    w0: &[f64],
    step: f64,
    iters: usize,
) -> Result<Vec<f64>> {
    let mut w = w0.to_vec();
    for _ in 0..iters {
        let g = moments.gradient(&w);
        let z: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w - step * g).collect();
        w = prox_elastic_net(&z, step, reg)?;
    }
    Ok(w)
}
