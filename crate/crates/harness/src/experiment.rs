//! Per-seed pipeline: split, optional scaling, optional grid selection,
//! training, test AUC. Plus the result rows and their CSV form.

use std::io::Write;
use std::time::Instant;

use adapair::data::{self, generate_synthetic, split, MaxAbsScaler, SplitSpec};
use adapair::metrics::{auc_rank, mean_stderr, ScoredSet, TiesPolicy};
use adapair::optimizer::{train_adaptive, train_plain, TrainConfig, TrainTrace};
use adapair::{rng, Dataset, Error, Model, Regularizer};

use crate::config::{DataSource, ExperimentConfig};
use crate::HarnessError;

pub const CSV_HEADER: [&str; 8] = ["dataset", "algorithm", "seed", "auc", "objective", "seconds", "grad_evals", "stages"];

/// Regularization weights swept by `--grid`.
pub const LAMBDA_GRID: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
/// Share of the training split held out for grid validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

const SPLIT_ATTEMPTS: u64 = 16;
const SUBSAMPLE_STREAM: u64 = 0x5353;
const VALIDATION_STREAM: u64 = 0x5641;

pub fn load_dataset(src: &DataSource, subsample: Option<usize>, seed: u64) -> Result<Dataset, HarnessError> {
    let ds = match src {
        DataSource::File(path) => data::read_libsvm(path)?.binarize(seed)?,
        DataSource::Synthetic { spec, seed } => generate_synthetic(*spec, *seed)?,
    };
    Ok(match subsample {
        Some(k) if k < ds.len() => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            rng::shuffle(&mut rng::stream(seed, SUBSAMPLE_STREAM), &mut order);
            let mut keep = order[..k].to_vec();
            keep.sort_unstable();
            ds.subset(&keep)
        }
        _ => ds,
    })
}

/// Splits with `seed`, re-seeding (deterministically) when a side lacks a class.
pub fn split_retrying(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), HarnessError> {
    for attempt in 0..SPLIT_ATTEMPTS {
        match split(ds, SplitSpec::new(fraction, seed.wrapping_add(attempt << 32))) {
            Err(Error::ClassEmptySplit) => continue,
            other => return Ok(other?),
        }
    }
    Err(Error::ClassEmptySplit.into())
}

pub fn test_auc(model: &Model, test: &Dataset) -> Result<f64, HarnessError> {
    let ss = ScoredSet::new(model.scores(test), test.labels().to_vec())?;
    Ok(auc_rank(&ss, TiesPolicy::Half)?)
}

/// Trains adaptively or plainly; a class-empty stage is retried with a
/// stratified stage order when `cfg.stratify` is set.
pub fn train(ds: &Dataset, cfg: &TrainConfig, plain: bool) -> adapair::Result<(Model, TrainTrace)> {
    let run = |c: &TrainConfig| if plain { train_plain(ds, c) } else { train_adaptive(ds, c) };
    if cfg.stratify {
        match run(&TrainConfig { stratify: false, ..cfg.clone() }) {
            Err(Error::ClassEmptyStage { .. }) => run(cfg),
            other => other,
        }
    } else {
        run(cfg)
    }
}

/// Hyperparameters picked by [`select_by_validation`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub lambda2: f64,
    pub lambda1: f64,
    pub validation_auc: f64,
}

impl Selection {
    pub fn apply(&self, cfg: &TrainConfig) -> adapair::Result<TrainConfig> {
        Ok(TrainConfig { reg: Regularizer::new(self.lambda2, self.lambda1)?, ..cfg.clone() })
    }
}

/// Sweeps `(λ2, λ1)` over [`LAMBDA_GRID`]², training on 90% of `train` and scoring AUC on the
/// held-out 10%. Diverged configurations are skipped; ties keep the first
/// in sweep order.
pub fn select_by_validation(train_ds: &Dataset, cfg: &TrainConfig, plain: bool) -> Result<Selection, HarnessError> {
    let (fit, val) = split_retrying(train_ds, 1.0 - VALIDATION_FRACTION, cfg.seed ^ (VALIDATION_STREAM << 40))?;
    let mut best: Option<Selection> = None;
    for &lambda2 in &LAMBDA_GRID {
        for &lambda1 in &LAMBDA_GRID {
            let c = TrainConfig {
                reg: Regularizer::new(lambda2, lambda1)?,
                m0: cfg.m0.min(fit.len()),
                ..cfg.clone()
            };
            let model = match train(&fit, &c, plain) {
                Ok((m, _)) => m,
                Err(Error::Diverged { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let auc = test_auc(&model, &val)?;
            if best.is_none_or(|b| auc > b.validation_auc) {
                best = Some(Selection { lambda2, lambda1, validation_auc: auc });
            }
        }
    }
    best.ok_or_else(|| HarnessError::Runtime("every grid configuration diverged".into()))
}

/// One row of the results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub algorithm: String,
    pub seed: String,
    pub auc: Option<f64>,
    pub objective: Option<f64>,
    pub seconds: Option<f64>,
    pub grad_evals: Option<f64>,
    pub stages: Option<f64>,
}

impl ResultRow {
    pub fn failure(dataset: &str, algorithm: &str, seed: u64) -> Self {
        Self {
            dataset: dataset.to_string(),
            algorithm: format!("{algorithm}/failed"),
            seed: seed.to_string(),
            auc: None,
            objective: None,
            seconds: None,
            grad_evals: None,
            stages: None,
        }
    }

    fn record(&self) -> [String; 8] {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        [
            self.dataset.clone(),
            self.algorithm.clone(),
            self.seed.clone(),
            f(self.auc),
            f(self.objective),
            f(self.seconds),
            f(self.grad_evals),
            f(self.stages),
        ]
    }
}

/// Everything one seed produced.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub row: ResultRow,
    pub trace: TrainTrace,
    pub selection: Option<Selection>,
}

pub fn algorithm_name(plain: bool) -> &'static str {
    if plain {
        "plain"
    } else {
        "adaptive"
    }
}

/// Split and scale for one seed.
pub fn prepare_split(ds: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset), HarnessError> {
    let (train, test) = split_retrying(ds, cfg.train_fraction, seed)?;
    Ok(if cfg.scale {
        let s = MaxAbsScaler::fit(&train);
        (s.transform(&train), s.transform(&test))
    } else {
        (train, test)
    })
}

/// Full per-seed pipeline for `train`.
pub fn run_seed(ds: &Dataset, name: &str, cfg: &ExperimentConfig, k: usize) -> Result<SeedRun, HarnessError> {
    let seed = cfg.seed.wrapping_add(k as u64);
    let (train_ds, test) = prepare_split(ds, cfg, seed)?;
    let mut tc = TrainConfig { seed, m0: cfg.train.m0.min(train_ds.len()), ..cfg.train.clone() };
    let selection = if cfg.grid {
        let s = select_by_validation(&train_ds, &tc, cfg.plain)?;
        tc = s.apply(&tc)?;
        Some(s)
    } else {
        None
    };
    let clock = Instant::now();
    let (model, trace) = train(&train_ds, &tc, cfg.plain)?;
    let seconds = clock.elapsed().as_secs_f64();
    let row = ResultRow {
        dataset: name.to_string(),
        algorithm: algorithm_name(cfg.plain).to_string(),
        seed: seed.to_string(),
        auc: Some(test_auc(&model, &test)?),
        objective: trace.final_objective(),
        seconds: cfg.timing.then_some(seconds),
        grad_evals: Some(trace.grad_evals() as f64),
        stages: Some(trace.stages.len() as f64),
    };
    Ok(SeedRun { seed, row, trace, selection })
}

/// `<algorithm>/mean` and `<algorithm>/stderr` rows over `rows`, all of
/// which share one algorithm. The stderr row is NA for a single row.
pub fn summary_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let col = |f: fn(&ResultRow) -> Option<f64>| -> Option<Vec<f64>> { rows.iter().map(f).collect() };
    let cols = [
        col(|r| r.auc),
        col(|r| r.objective),
        col(|r| r.seconds),
        col(|r| r.grad_evals),
        col(|r| r.stages),
    ];
    let stat = |which: usize| -> [Option<f64>; 5] {
        cols.clone().map(|c| {
            let c = c?;
            match which {
                0 => Some(c.iter().sum::<f64>() / c.len() as f64),
                _ => mean_stderr(&c).ok().map(|(_, s)| s),
            }
        })
    };
    ["mean", "stderr"]
        .iter()
        .enumerate()
        .map(|(which, label)| {
            let [auc, objective, seconds, grad_evals, stages] = stat(which);
            ResultRow {
                dataset: first.dataset.clone(),
                algorithm: format!("{}/{label}", first.algorithm),
                seed: "summary".to_string(),
                auc,
                objective,
                seconds,
                grad_evals,
                stages,
            }
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Opens `--out` or falls back to stdout.
pub fn output(path: Option<&std::path::Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}
