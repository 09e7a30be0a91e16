//! Subcommand implementations. Seeds run in parallel on a pool of
//! `workers` threads; results are gathered in seed order before anything is
//! written, so output does not depend on scheduling.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adapair::data::{generate_synthetic, write_libsvm, MaxAbsScaler, SyntheticSpec};
use adapair::metrics::{auc_bruteforce, auc_rank, mean_stderr, ScoredSet, TiesPolicy};
use adapair::optimizer::{train_adaptive_eval, train_plain_eval, InnerSchedule, TrainConfig, TrainTrace};
use adapair::sampling::{variance_exact, variance_mc, PairDistribution, PairSampling, DEFAULT_ENUMERATION_CAP};
use adapair::theory::{stability_probe, StabilityMeasurement};
use adapair::{rng, Dataset, Label, PairLoss, SparseVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig};
use crate::experiment::{
    algorithm_name, load_dataset, output, prepare_split, run_seed, select_by_validation, summary_rows, test_auc,
    write_rows, ResultRow,
};
use crate::HarnessError;

const PROBE_MODEL_STREAM: u64 = 0x5052;
const STABILITY_INDEX_STREAM: u64 = 0x5354;

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Rows of a `train` run: one per seed, then the two summary rows. When a
/// seed fails, the successful rows are followed by failure markers instead
/// of the summary, and the first error is returned alongside.
pub fn train_rows(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Option<HarnessError>), HarnessError> {
    let ds = load_dataset(&cfg.data, cfg.subsample, cfg.seed)?;
    let name = cfg.data.name();
    let runs: Vec<_> =
        in_pool(cfg.workers, || (0..cfg.repeats).into_par_iter().map(|k| run_seed(&ds, &name, cfg, k)).collect())?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => rows.push(r.row),
            Err(e) => {
                let seed = cfg.seed.wrapping_add(k as u64);
                eprintln!("seed {seed}: {e}");
                failures.push(ResultRow::failure(&name, algorithm_name(cfg.plain), seed));
                first_err.get_or_insert(e);
            }
        }
    }
    if failures.is_empty() {
        let summary = summary_rows(&rows);
        rows.extend(summary);
    } else {
        rows.extend(failures);
    }
    Ok((rows, first_err))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let (rows, err) = train_rows(cfg)?;
    write_rows(output(cfg.out.as_deref())?, &rows)?;
    err.map_or(Ok(()), Err)
}

/// Trace rows: one per stage boundary.
pub const TRACE_HEADER: [&str; 10] =
    ["algorithm", "seed", "stage", "m", "inner_iters", "gamma", "grad_evals", "objective", "test_auc", "seconds"];

fn trace_records(algorithm: &str, seed: u64, trace: &TrainTrace, timing: bool) -> Vec<[String; 10]> {
    trace
        .stages
        .iter()
        .map(|s| {
            [
                algorithm.to_string(),
                seed.to_string(),
                s.stage.to_string(),
                s.m.to_string(),
                s.inner_iters.to_string(),
                s.gamma.to_string(),
                s.grad_evals.to_string(),
                s.objective.to_string(),
                s.test_auc.map_or_else(|| "NA".into(), |a| a.to_string()),
                if timing { s.seconds.to_string() } else { "NA".into() },
            ]
        })
        .collect()
}

/// `results.csv` → `results.trace.csv`.
pub fn trace_path(out: &Path) -> PathBuf {
    out.with_extension("trace.csv")
}

struct BenchSeed {
    rows: [ResultRow; 2],
    traces: Vec<[String; 10]>,
}

fn bench_seed(ds: &Dataset, name: &str, cfg: &ExperimentConfig, k: usize) -> Result<BenchSeed, HarnessError> {
    let seed = cfg.seed.wrapping_add(k as u64);
    let (train, test) = prepare_split(ds, cfg, seed)?;
    let mut tc = TrainConfig { seed, m0: cfg.train.m0.min(train.len()), ..cfg.train.clone() };
    if cfg.grid {
        tc = select_by_validation(&train, &tc, false)?.apply(&tc)?;
    }
    let clock = Instant::now();
    let (ada, ada_trace) = train_adaptive_eval(&train, &tc, Some(&test))?;
    let ada_secs = clock.elapsed().as_secs_f64();
    // plain baseline at the adaptive run's gradient budget
    let budget = ada_trace.grad_evals() as usize;
    let pc = TrainConfig { inner: InnerSchedule::Fixed(budget), ..tc.clone() };
    let clock = Instant::now();
    let (plain, plain_trace) = train_plain_eval(&train, &pc, Some(&test))?;
    let plain_secs = clock.elapsed().as_secs_f64();
    let row = |alg: &str, model, trace: &TrainTrace, secs: f64| -> Result<ResultRow, HarnessError> {
        Ok(ResultRow {
            dataset: name.to_string(),
            algorithm: alg.to_string(),
            seed: seed.to_string(),
            auc: Some(test_auc(model, &test)?),
            objective: trace.final_objective(),
            seconds: cfg.timing.then_some(secs),
            grad_evals: Some(trace.grad_evals() as f64),
            stages: Some(trace.stages.len() as f64),
        })
    };
    let mut traces = trace_records("adaptive", seed, &ada_trace, cfg.timing);
    traces.extend(trace_records("plain", seed, &plain_trace, cfg.timing));
    Ok(BenchSeed {
        rows: [row("adaptive", &ada, &ada_trace, ada_secs)?, row("plain", &plain, &plain_trace, plain_secs)?],
        traces,
    })
}

/// Adaptive vs plain at equal gradient budget. The per-seed table goes to
/// `--out` (or stdout); the stage-boundary trace goes next to it.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let ds = load_dataset(&cfg.data, cfg.subsample, cfg.seed)?;
    let name = cfg.data.name();
    let runs: Vec<_> =
        in_pool(cfg.workers, || (0..cfg.repeats).into_par_iter().map(|k| bench_seed(&ds, &name, cfg, k)).collect())?;
    let mut by_alg: [Vec<ResultRow>; 2] = Default::default();
    let mut traces = Vec::new();
    let mut first_err = None;
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok(b) => {
                let [a, p] = b.rows;
                by_alg[0].push(a);
                by_alg[1].push(p);
                traces.extend(b.traces);
            }
            Err(e) => {
                let seed = cfg.seed.wrapping_add(k as u64);
                eprintln!("seed {seed}: {e}");
                by_alg[0].push(ResultRow::failure(&name, "adaptive", seed));
                first_err.get_or_insert(e);
            }
        }
    }
    let mut rows = Vec::new();
    for group in by_alg {
        let summary = if first_err.is_none() { summary_rows(&group) } else { Vec::new() };
        rows.extend(group);
        rows.extend(summary);
    }
    write_rows(output(cfg.out.as_deref())?, &rows)?;
    if let Some(out) = &cfg.out {
        let mut w = csv::Writer::from_path(trace_path(out))?;
        w.write_record(TRACE_HEADER)?;
        for t in &traces {
            w.write_record(t)?;
        }
        w.flush()?;
    }
    first_err.map_or(Ok(()), Err)
}

/// One line of the variance table.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub probe: usize,
    pub uniform: f64,
    pub opposite: f64,
    pub uniform_stderr: f64,
    pub opposite_stderr: f64,
}

/// Probe models: the zero model, then `probes` Gaussian draws with
/// per-coordinate standard deviation `1/√d`.
pub fn probe_models(d: usize, probes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, PROBE_MODEL_STREAM);
    let normal = Normal::new(0.0, 1.0 / (d.max(1) as f64).sqrt()).expect("positive sd");
    let mut out = vec![vec![0.0; d]];
    out.extend((0..probes).map(|_| (0..d).map(|_| normal.sample(&mut r)).collect()));
    out
}

/// Exact (or, with `mc_draws`, Monte-Carlo) stochastic-gradient variance
/// of both pair distributions at each probe model.
pub fn variance_rows(
    cfg: &ExperimentConfig,
    probes: usize,
    mc_draws: Option<usize>,
) -> Result<Vec<VarianceRow>, HarnessError> {
    let mut ds = load_dataset(&cfg.data, cfg.subsample, cfg.seed)?;
    if cfg.scale {
        ds = MaxAbsScaler::fit(&ds).transform(&ds);
    }
    let tc = &cfg.train;
    let uniform = PairDistribution::new(PairSampling::Uniform, &ds)?;
    let opposite = PairDistribution::new(PairSampling::Opposite, &ds)?;
    let models = probe_models(ds.dim(), probes, cfg.seed);
    let rows: Vec<Result<VarianceRow, HarnessError>> = in_pool(cfg.workers, || {
        models
            .par_iter()
            .enumerate()
            .map(|(probe, w)| {
                let est = |dist: &PairDistribution| -> Result<(f64, f64), HarnessError> {
                    Ok(match mc_draws {
                        Some(k) => {
                            let e = variance_mc(tc.loss, w, dist, &ds, k, cfg.seed.wrapping_add(probe as u64), tc.normalization)?;
                            (e.mean, e.stderr)
                        }
                        None => (variance_exact(tc.loss, w, dist, &ds, tc.normalization, DEFAULT_ENUMERATION_CAP)?, 0.0),
                    })
                };
                let (u, us) = est(&uniform)?;
                let (o, os) = est(&opposite)?;
                Ok(VarianceRow { probe, uniform: u, opposite: o, uniform_stderr: us, opposite_stderr: os })
            })
            .collect()
    })?;
    rows.into_iter().collect()
}

pub fn cmd_variance(cfg: &ExperimentConfig, probes: usize, mc_draws: Option<usize>) -> Result<(), HarnessError> {
    let rows = variance_rows(cfg, probes, mc_draws)?;
    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);
    w.write_record(["probe", "var_uniform", "var_opposite", "stderr_uniform", "stderr_opposite"])?;
    for r in rows {
        w.write_record([
            r.probe.to_string(),
            r.uniform.to_string(),
            r.opposite.to_string(),
            r.uniform_stderr.to_string(),
            r.opposite_stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Stability summary for one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    pub measured_mean: f64,
    pub measured_stderr: Option<f64>,
    pub bound_mean: f64,
}

/// One coupled pair of trainings at sample size `n` and seed `seed`.
///
/// A synthetic draw of `n + 1 + 2·probe_pairs` rows supplies the training
/// set (first `n`), the replacement example (next row) and held-out probe
/// pairs (the rest, positives zipped with negatives).
pub fn stability_job(
    spec: SyntheticSpec,
    data_seed: u64,
    tc: &TrainConfig,
    n: usize,
    probe_pairs: usize,
    seed: u64,
) -> Result<StabilityMeasurement, HarnessError> {
    let total = n + 1 + 2 * probe_pairs;
    let mix = data_seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (n as u64).rotate_left(32);
    let all = generate_synthetic(SyntheticSpec { n: total, ..spec }, mix)?;
    let train = all.subset(&(0..n).collect::<Vec<_>>());
    let replacement: (SparseVector, Label) = (all.row(n).clone(), all.label(n));
    let rest = all.subset(&(n + 1..total).collect::<Vec<_>>());
    let probes: Vec<_> = rest
        .pos_idx()
        .iter()
        .zip(rest.neg_idx())
        .map(|(&p, &q)| (rest.row(p).clone(), rest.row(q).clone()))
        .collect();
    let i = rng::index(&mut rng::stream(seed, STABILITY_INDEX_STREAM), n);
    let tc = TrainConfig { loss: PairLoss::Hinge, seed, m0: tc.m0.min(n), ..tc.clone() };
    Ok(stability_probe(&train, &tc, i, replacement, &probes)?)
}

pub fn stability_rows(
    cfg: &ExperimentConfig,
    n_grid: &[usize],
    probe_pairs: usize,
) -> Result<Vec<StabilityRow>, HarnessError> {
    let DataSource::Synthetic { spec, seed: data_seed } = cfg.data else {
        return Err(HarnessError::Config("stability runs on synthetic data only".into()));
    };
    if cfg.train.loss != PairLoss::Hinge {
        return Err(HarnessError::Config("stability needs the hinge loss (globally Lipschitz)".into()));
    }
    let jobs: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| (0..cfg.repeats).map(move |k| (n, cfg.seed.wrapping_add(k as u64))))
        .collect();
    let results: Vec<_> = in_pool(cfg.workers, || {
        jobs.par_iter()
            .map(|&(n, seed)| stability_job(spec, data_seed, &cfg.train, n, probe_pairs, seed))
            .collect()
    })?;
    let results: Vec<StabilityMeasurement> = results.into_iter().collect::<Result<_, _>>()?;
    Ok(n_grid
        .iter()
        .zip(results.chunks(cfg.repeats))
        .map(|(&n, chunk)| {
            let measured: Vec<f64> = chunk.iter().map(|m| m.measured).collect();
            let k = chunk.len() as f64;
            StabilityRow {
                n,
                measured_mean: measured.iter().sum::<f64>() / k,
                measured_stderr: mean_stderr(&measured).ok().map(|(_, s)| s),
                bound_mean: chunk.iter().map(|m| m.bound).sum::<f64>() / k,
            }
        })
        .collect())
}

pub fn cmd_stability(cfg: &ExperimentConfig, n_grid: &[usize], probe_pairs: usize) -> Result<(), HarnessError> {
    let rows = stability_rows(cfg, n_grid, probe_pairs)?;
    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);
    w.write_record(["n", "measured_mean", "measured_stderr", "bound_mean"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.measured_mean.to_string(),
            r.measured_stderr.map_or_else(|| "NA".into(), |s| s.to_string()),
            r.bound_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_gen_synth(spec: SyntheticSpec, seed: u64, out: Option<&Path>) -> Result<(), HarnessError> {
    let ds = generate_synthetic(spec, seed)?;
    let mut w = output(out)?;
    write_libsvm(&ds, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads `score,label` lines (label `+1`/`1` positive, `-1`/`0` negative).
pub fn read_scored(path: &Path) -> Result<ScoredSet, HarnessError> {
    let file = std::fs::File::open(path)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || HarnessError::Runtime(format!("{}:{}: expected `score,label`", path.display(), lineno + 1));
        let (s, l) = line.split_once([',', ' ', '\t']).ok_or_else(bad)?;
        let score: f64 = s.trim().parse().map_err(|_| bad())?;
        let label: f64 = l.trim().parse().map_err(|_| bad())?;
        scores.push(score);
        labels.push(if label > 0.0 { Label::Positive } else { Label::Negative });
    }
    Ok(ScoredSet::new(scores, labels)?)
}

pub fn cmd_auc(input: &Path, ties: TiesPolicy, out: Option<&Path>) -> Result<(), HarnessError> {
    let ss = read_scored(input)?;
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["method", "auc"])?;
    w.write_record(["rank", &auc_rank(&ss, ties)?.to_string()])?;
    w.write_record(["bruteforce", &auc_bruteforce(&ss, ties)?.to_string()])?;
    w.flush()?;
    Ok(())
}
