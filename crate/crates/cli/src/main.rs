//! `tmmsb`: simulate, fit and evaluate transactional mixed-membership models.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{ArgAction, Args, Parser, Subcommand};

use config::Resolver;
use manifest::RunManifest;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "TMMSB_THREADS";

/// Bad flags, config values or flag combinations. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "tmmsb",
    version,
    about = "Transactional mixed-membership stochastic block-model"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Log format for files written, and for files read whose extension is
    /// not .jsonl or .csv.
    #[arg(long, global = true, value_parser = ["jsonl", "csv"])]
    pub format: Option<String>,
    /// TOML config file (or a previous run's manifest.json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to $TMMSB_THREADS, then to the core count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

/// Variational EM settings shared by `fit` and `select`.
#[derive(Args, Debug, Default)]
pub struct FitArgs {
    /// Dirichlet concentration, the same for every group.
    #[arg(long, visible_alias = "alpha-value")]
    pub alpha: Option<f64>,
    /// Cap on B re-estimations.
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Cap on phi/gamma sweeps per outer iteration.
    #[arg(long)]
    pub max_inner_iters: Option<usize>,
    /// Relative ELBO change that counts as converged.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// uniform-jitter or baseline-clusters.
    #[arg(long)]
    pub init: Option<String>,
    /// Half-width of the multiplicative init jitter, in [0, 1).
    #[arg(long)]
    pub jitter_scale: Option<f64>,
    /// Independent starts; the highest final ELBO wins.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Merge-and-split rounds after convergence.
    #[arg(long)]
    pub refine_rounds: Option<usize>,
    /// Extrapolate gamma between sweeps.
    #[arg(long, action = ArgAction::Set)]
    pub extrapolate: Option<bool>,
    /// euclidean or cosine; used by baseline-clusters init.
    #[arg(long)]
    pub baseline_distance: Option<String>,
    /// B entries are clamped to [eps, 1 - eps].
    #[arg(long)]
    pub clamp_eps: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a transaction log with known memberships.
    Simulate(commands::SimulateArgs),
    /// Fit the model to a log.
    Fit(commands::FitCmdArgs),
    /// Scan K and pick the BIC maximizer.
    Select(commands::SelectArgs),
    /// Score a fitted model or baseline against truth and/or held-out messages.
    Evaluate(commands::EvaluateArgs),
    /// Per-group summaries and predicted message frequencies.
    Summarize(commands::SummarizeArgs),
    /// Hold out messages of the most active senders.
    Split(commands::SplitArgs),
    /// Count and socio matrices of a log.
    Reduce(commands::ReduceArgs),
    /// Average-linkage clustering baseline.
    Baseline(commands::BaselineArgs),
    /// Time fits over a size grid and fit scaling exponents.
    Bench(commands::BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Fit(_) => "fit",
            Self::Select(_) => "select",
            Self::Evaluate(_) => "evaluate",
            Self::Summarize(_) => "summarize",
            Self::Split(_) => "split",
            Self::Reduce(_) => "reduce",
            Self::Baseline(_) => "baseline",
            Self::Bench(_) => "bench",
        }
    }
}

fn thread_count(flag: Option<usize>) -> anyhow::Result<usize> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(UsageError(format!("{THREADS_ENV}=`{v}` is not a positive integer")).into()),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let name = cli.command.name();
    let mut resolver = match &cli.common.config {
        Some(path) => Resolver::load(path, name)?,
        None => Resolver::empty(),
    };
    let threads = thread_count(cli.common.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    let out_dir: PathBuf = resolver.value("out_dir", cli.common.out_dir.clone(), "out".into())?;
    std::fs::create_dir_all(&out_dir)?;
    let format = resolver.optional("format", cli.common.format.clone())?;
    let mut ctx = commands::Context::new(resolver, out_dir, format, cli.common.seed);
    let started = SystemTime::now();
    let clock = Instant::now();
    match cli.command {
        Command::Simulate(a) => commands::simulate(&mut ctx, a),
        Command::Fit(a) => commands::fit(&mut ctx, a),
        Command::Select(a) => commands::select(&mut ctx, a),
        Command::Evaluate(a) => commands::evaluate(&mut ctx, a),
        Command::Summarize(a) => commands::summarize(&mut ctx, a),
        Command::Split(a) => commands::split(&mut ctx, a),
        Command::Reduce(a) => commands::reduce(&mut ctx, a),
        Command::Baseline(a) => commands::baseline(&mut ctx, a),
        Command::Bench(a) => commands::bench(&mut ctx, a),
    }?;
    let elapsed = clock.elapsed();
    let (resolver, out_dir, seed, inputs, outputs) = ctx.finish();
    let manifest = RunManifest::new(
        name,
        seed,
        threads,
        resolver.into_resolved(),
        &inputs,
        &outputs,
        started,
        elapsed,
    )?;
    let path = manifest.write(&out_dir)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
