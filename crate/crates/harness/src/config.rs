//! Experiment settings: an optional `key = value` file overlaid by CLI flags.

use std::path::{Path, PathBuf};

use adapair::data::SyntheticSpec;
use adapair::optimizer::{InnerSchedule, StepSchedule, TrainConfig};
use adapair::{Normalization, PairLoss, PairSampling, Regularizer};

use crate::HarnessError;

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    /// `synthetic:n=..,d=..,sep=..,balance=..,seed=..`
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

impl DataSource {
    pub fn name(&self) -> String {
        match self {
            DataSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            DataSource::Synthetic { .. } => "synthetic".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let Some(rest) = s.strip_prefix("synthetic:") else {
            return Ok(DataSource::File(PathBuf::from(s)));
        };
        let mut spec = SyntheticSpec { n: 1000, d: 10, separation: 2.0, class_balance: 0.5 };
        let mut seed = 0;
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| config_err(format!("synthetic spec entry `{part}` is not key=value")))?;
            match k.trim() {
                "n" => spec.n = parse_num(k, v)?,
                "d" => spec.d = parse_num(k, v)?,
                "sep" | "separation" => spec.separation = parse_num(k, v)?,
                "balance" => spec.class_balance = parse_num(k, v)?,
                "seed" => seed = parse_num(k, v)?,
                other => return Err(config_err(format!("unknown synthetic key `{other}`"))),
            }
        }
        Ok(DataSource::Synthetic { spec, seed })
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.trim()
        .parse()
        .map_err(|_| config_err(format!("invalid value `{}` for `{key}`", v.trim())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, HarnessError> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(config_err(format!("invalid boolean `{other}` for `{key}`"))),
    }
}

/// Every field optional so a file and the flags can be layered.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub data: Option<DataSource>,
    pub loss: Option<PairLoss>,
    pub dist: Option<PairSampling>,
    pub norm: Option<Normalization>,
    pub beta: Option<f64>,
    pub m0: Option<usize>,
    pub inner: Option<InnerSchedule>,
    pub gamma0: Option<f64>,
    pub step_exponent: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda1: Option<f64>,
    pub first_stage_factor: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub train_fraction: Option<f64>,
    pub subsample: Option<usize>,
    pub stratify: Option<bool>,
    pub grid: Option<bool>,
    pub scale: Option<bool>,
    pub timing: Option<bool>,
    pub plain: Option<bool>,
}

impl Settings {
    /// Sets one key from its textual value. Keys are the long flag names;
    /// `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "data" => self.data = Some(DataSource::parse(v)?),
            "loss" => {
                self.loss = Some(match v {
                    "squared" => PairLoss::Squared,
                    "hinge" => PairLoss::Hinge,
                    _ => return Err(config_err(format!("unknown loss `{v}` (squared|hinge)"))),
                })
            }
            "dist" => {
                self.dist = Some(match v {
                    "opposite" => PairSampling::Opposite,
                    "uniform" => PairSampling::Uniform,
                    _ => return Err(config_err(format!("unknown distribution `{v}` (opposite|uniform)"))),
                })
            }
            "norm" => {
                self.norm = Some(match v {
                    "opposite" => Normalization::OppositeSpace,
                    "pair" => Normalization::PairSpace,
                    _ => return Err(config_err(format!("unknown normalization `{v}` (opposite|pair)"))),
                })
            }
            "inner" => self.inner = Some(parse_inner(v)?),
            "beta" => self.beta = Some(parse_num(&key, v)?),
            "m0" => self.m0 = Some(parse_num(&key, v)?),
            "gamma0" => self.gamma0 = Some(parse_num(&key, v)?),
            "step-exponent" => self.step_exponent = Some(parse_num(&key, v)?),
            "lambda2" => self.lambda2 = Some(parse_num(&key, v)?),
            "lambda1" => self.lambda1 = Some(parse_num(&key, v)?),
            "first-stage-factor" => self.first_stage_factor = Some(parse_num(&key, v)?),
            "repeats" => self.repeats = Some(parse_num(&key, v)?),
            "seed" => self.seed = Some(parse_num(&key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "workers" => self.workers = Some(parse_num(&key, v)?),
            "train-fraction" => self.train_fraction = Some(parse_num(&key, v)?),
            "subsample" => self.subsample = Some(parse_num(&key, v)?),
            "stratify" => self.stratify = Some(parse_bool(&key, v)?),
            "grid" => self.grid = Some(parse_bool(&key, v)?),
            "scale" => self.scale = Some(parse_bool(&key, v)?),
            "timing" => self.timing = Some(parse_bool(&key, v)?),
            "plain" => self.plain = Some(parse_bool(&key, v)?),
            _ => return Err(config_err(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_lines(&text)
    }

    pub fn from_str_lines(text: &str) -> Result<Self, HarnessError> {
        let mut s = Settings::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("config line {}: expected key = value", lineno + 1)))?;
            s.set(k, v)
                .map_err(|e| config_err(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(s)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            data, loss, dist, norm, beta, m0, inner, gamma0, step_exponent, lambda2, lambda1,
            first_stage_factor, repeats, seed, out, workers, train_fraction, subsample, stratify,
            grid, scale, timing, plain
        )
    }

    pub fn train_config(&self) -> Result<TrainConfig, HarnessError> {
        let d = TrainConfig::default();
        let (d_gamma0, d_exp) = match d.step {
            StepSchedule::PerStage { gamma0, exponent } => (gamma0, exponent),
            StepSchedule::Constant(g) => (g, 0.0),
        };
        let reg = Regularizer::new(
            self.lambda2.unwrap_or(d.reg.lambda2),
            self.lambda1.unwrap_or(d.reg.lambda1),
        )
        .map_err(|e| config_err(e.to_string()))?;
        let cfg = TrainConfig {
            beta: self.beta.unwrap_or(d.beta),
            m0: self.m0.unwrap_or(d.m0),
            step: StepSchedule::PerStage {
                gamma0: self.gamma0.unwrap_or(d_gamma0),
                exponent: self.step_exponent.unwrap_or(d_exp),
            },
            inner: self.inner.unwrap_or(d.inner),
            loss: self.loss.unwrap_or(d.loss),
            reg,
            sampling: self.dist.unwrap_or(d.sampling),
            normalization: self.norm.unwrap_or(d.normalization),
            first_stage_factor: self.first_stage_factor.unwrap_or(d.first_stage_factor),
            stratify: self.stratify.unwrap_or(false),
            ..d
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn resolve(&self, default_repeats: usize) -> Result<ExperimentConfig, HarnessError> {
        let data = self.data.clone().ok_or_else(|| config_err("no dataset given (--data)"))?;
        if let DataSource::File(p) = &data {
            if !p.is_file() {
                return Err(config_err(format!("dataset {} does not exist", p.display())));
            }
        }
        let repeats = self.repeats.unwrap_or(default_repeats);
        if repeats == 0 {
            return Err(config_err("repeats must be at least 1"));
        }
        let workers = self.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        let train_fraction = self.train_fraction.unwrap_or(0.8);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(config_err(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        if self.subsample == Some(0) {
            return Err(config_err("subsample must be positive"));
        }
        Ok(ExperimentConfig {
            data,
            train: self.train_config()?,
            repeats,
            seed: self.seed.unwrap_or(0),
            out: self.out.clone(),
            workers,
            train_fraction,
            subsample: self.subsample,
            grid: self.grid.unwrap_or(false),
            scale: self.scale.unwrap_or(false),
            timing: self.timing.unwrap_or(false),
            plain: self.plain.unwrap_or(false),
        })
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_inner(v: &str) -> Result<InnerSchedule, HarnessError> {
    match v {
        "linear" => Ok(InnerSchedule::LinearInM),
        "n43" => Ok(InnerSchedule::PowerLaw { c: 1.0 }),
        _ => {
            let t = v
                .strip_prefix("fixed:")
                .and_then(|t| t.parse::<usize>().ok())
                .filter(|&t| t >= 1)
                .ok_or_else(|| config_err(format!("unknown inner schedule `{v}` (linear|n43|fixed:T)")))?;
            Ok(InnerSchedule::Fixed(t))
        }
    }
}

/// Fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    pub repeats: usize,
    /// Run `k` uses seed `seed + k`.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub train_fraction: f64,
    pub subsample: Option<usize>,
    /// Select `(γ0, λ2, λ1)` by validation AUC.
    pub grid: bool,
    /// Max-abs feature scaling fitted on each training split.
    pub scale: bool,
    /// Record wall-clock seconds; off keeps output byte-reproducible.
    pub timing: bool,
    pub plain: bool,
}
