use std::path::PathBuf;
use std::process::ExitCode;

use adapair::data::SyntheticSpec;
use adapair::metrics::TiesPolicy;
use adapair::{Normalization, PairLoss};
use adapair_harness::commands;
use adapair_harness::config::{DataSource, Settings};
use adapair_harness::HarnessError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "adapair", version, about = "Adaptive-sample-size pairwise learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multi-seed split/train/test AUC runs
    Train(RunArgs),
    /// Adaptive vs plain at equal gradient budget, with stage traces
    Bench(RunArgs),
    /// Stochastic-gradient variance of uniform vs opposite-pair sampling
    Variance {
        #[command(flatten)]
        run: RunArgs,
        /// Number of random probe models (the zero model is always included)
        #[arg(long, default_value_t = 10)]
        probes: usize,
        /// Estimate by Monte Carlo with this many draws instead of enumerating
        #[arg(long)]
        mc_draws: Option<usize>,
    },
    /// Uniform-stability probe over a grid of sample sizes (hinge loss)
    Stability {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
        n_grid: Vec<usize>,
        /// Held-out (positive, negative) pairs the loss change is measured on
        #[arg(long, default_value_t = 50)]
        probe_pairs: usize,
    },
    /// Write a synthetic two-Gaussian dataset in LIBSVM format
    GenSynth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.5)]
        balance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AUC of a `score,label` file, by ranks and by enumeration
    Auc {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Ties::Half)]
        ties: Ties,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ties {
    Half,
    Strict,
}

/// Flags shared by the experiment commands. Values are parsed by the same
/// code as the config file, so both accept identical syntax.
#[derive(Args)]
struct RunArgs {
    /// `key = value` file; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM file, or `synthetic:n=..,d=..,sep=..,balance=..,seed=..`
    #[arg(long)]
    data: Option<String>,
    /// squared | hinge
    #[arg(long)]
    loss: Option<String>,
    /// opposite | uniform
    #[arg(long)]
    dist: Option<String>,
    /// Objective normalization: opposite | pair
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    m0: Option<String>,
    /// linear | n43 | fixed:T
    #[arg(long)]
    inner: Option<String>,
    #[arg(long)]
    gamma0: Option<String>,
    /// Stage step size is gamma0 / m^exponent
    #[arg(long)]
    step_exponent: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    /// Budget multiplier for the cold-started first stage
    #[arg(long)]
    first_stage_factor: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    /// Keep a seeded random subset of this many rows
    #[arg(long)]
    subsample: Option<String>,
    /// Retry class-empty stages with a class-interleaved stage order
    #[arg(long)]
    stratify: bool,
    /// Select (gamma0, lambda2, lambda1) by validation AUC
    #[arg(long)]
    grid: bool,
    /// Max-abs feature scaling fitted on each training split
    #[arg(long)]
    scale: bool,
    /// Record wall-clock seconds (otherwise NA, keeping output reproducible)
    #[arg(long)]
    timing: bool,
    /// Train the non-adaptive baseline instead
    #[arg(long)]
    plain: bool,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, HarnessError> {
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        let values = [
            ("data", &self.data),
            ("loss", &self.loss),
            ("dist", &self.dist),
            ("norm", &self.norm),
            ("beta", &self.beta),
            ("m0", &self.m0),
            ("inner", &self.inner),
            ("gamma0", &self.gamma0),
            ("step-exponent", &self.step_exponent),
            ("lambda2", &self.lambda2),
            ("lambda1", &self.lambda1),
            ("first-stage-factor", &self.first_stage_factor),
            ("repeats", &self.repeats),
            ("seed", &self.seed),
            ("out", &self.out),
            ("workers", &self.workers),
            ("train-fraction", &self.train_fraction),
            ("subsample", &self.subsample),
        ];
        for (k, v) in values {
            if let Some(v) = v {
                flags.set(k, v)?;
            }
        }
        let switches = [
            ("stratify", self.stratify),
            ("grid", self.grid),
            ("scale", self.scale),
            ("timing", self.timing),
            ("plain", self.plain),
        ];
        for (k, on) in switches {
            if on {
                flags.set(k, "true")?;
            }
        }
        Ok(file.overlay(flags))
    }
}

fn run(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Train(args) => commands::cmd_train(&args.settings()?.resolve(25)?),
        Cmd::Bench(args) => commands::cmd_bench(&args.settings()?.resolve(25)?),
        Cmd::Variance { run, probes, mc_draws } => {
            let mut s = run.settings()?;
            s.norm.get_or_insert(Normalization::PairSpace);
            if mc_draws.is_some_and(|k| k < 2) {
                return Err(HarnessError::Config("--mc-draws must be at least 2".into()));
            }
            commands::cmd_variance(&s.resolve(1)?, probes, mc_draws)
        }
        Cmd::Stability { run, n_grid, probe_pairs } => {
            let mut s = run.settings()?;
            if s.loss == Some(PairLoss::Squared) {
                return Err(HarnessError::Config("stability requires --loss hinge".into()));
            }
            s.loss = Some(PairLoss::Hinge);
            s.data.get_or_insert(DataSource::parse("synthetic:")?);
            if n_grid.iter().any(|&n| n < 2) || probe_pairs == 0 {
                return Err(HarnessError::Config("n grid entries must be at least 2 and probe pairs positive".into()));
            }
            commands::cmd_stability(&s.resolve(10)?, &n_grid, probe_pairs)
        }
        Cmd::GenSynth { n, d, separation, balance, seed, out } => {
            let spec = SyntheticSpec { n, d, separation, class_balance: balance };
            commands::cmd_gen_synth(spec, seed, out.as_deref()).map_err(|e| match e {
                // bad flag values, not a runtime failure
                HarnessError::Core(adapair::Error::InvalidArgument(m)) => HarnessError::Config(m),
                e => e,
            })
        }
        Cmd::Auc { input, ties, out } => {
            let ties = match ties {
                Ties::Half => TiesPolicy::Half,
                Ties::Strict => TiesPolicy::Strict,
            };
            commands::cmd_auc(&input, ties, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
