//! One function per subcommand. Each resolves its settings, reads inputs,
//! writes artifacts into the output directory and reports on stdout.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;

use tmmsb::data::export::{matrix_csv, read_matrix_csv};
use tmmsb::data::{
    baseline_with_distance, holdout_split, load_log, ordered_adjacency, save_log, to_counts,
    to_socio, Baseline, LogFormat, RowDistance,
};
use tmmsb::inference::{align_labels, FitConfig, InitStrategy, ModelDocument};
use tmmsb::metrics::{
    group_summaries_with, predicted_frequency_with, rank_at_full_recall_with, select_k,
    soft_bcubed, SoftClusterScore,
};
use tmmsb::scaling::{fit_scaling, run_bench, BenchGrid};
use tmmsb::simulate::{SimulationConfig, TransactionCount};
use tmmsb::{simulate as simulate_network, MembershipMatrix, Preset, TransactionLog};

use crate::config::Resolver;
use crate::{FitArgs, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Context {
    resolver: Resolver,
    out_dir: PathBuf,
    format: Option<String>,
    seed_flag: Option<u64>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Context {
    pub fn new(
        resolver: Resolver,
        out_dir: PathBuf,
        format: Option<String>,
        seed_flag: Option<u64>,
    ) -> Self {
        Self {
            resolver,
            out_dir,
            format,
            seed_flag,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(self) -> (Resolver, PathBuf, Option<u64>, Vec<PathBuf>, Vec<PathBuf>) {
        (
            self.resolver,
            self.out_dir,
            self.seed,
            self.inputs,
            self.outputs,
        )
    }

    fn seed(&mut self) -> anyhow::Result<u64> {
        let s = self.resolver.value("seed", self.seed_flag, 0u64)?;
        self.seed = Some(s);
        Ok(s)
    }

    fn flag_format(&self) -> anyhow::Result<Option<LogFormat>> {
        self.format
            .as_deref()
            .map(|f| f.parse().map_err(|e| usage(format!("--format: {e}"))))
            .transpose()
    }

    fn output_format(&self, fallback: LogFormat) -> anyhow::Result<LogFormat> {
        Ok(self.flag_format()?.unwrap_or(fallback))
    }

    fn input_format(&self, path: &Path) -> anyhow::Result<LogFormat> {
        match LogFormat::from_path(path) {
            Ok(f) => Ok(f),
            Err(_) => self.flag_format()?.ok_or_else(|| {
                usage(format!(
                    "cannot tell the format of {}; pass --format",
                    path.display()
                ))
            }),
        }
    }

    fn read_log(&mut self, path: &Path) -> anyhow::Result<TransactionLog> {
        let format = self.input_format(path)?;
        let log = load_log(path, format).with_context(|| format!("loading {}", path.display()))?;
        self.inputs.push(path.to_path_buf());
        Ok(log)
    }

    fn read_input(&mut self, path: &Path) -> anyhow::Result<String> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(path.to_path_buf());
        Ok(text)
    }

    fn output_path(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let p = self.output_path(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    fn write_log(
        &mut self,
        stem: &str,
        log: &TransactionLog,
        format: LogFormat,
    ) -> anyhow::Result<()> {
        let ext = match format {
            LogFormat::Jsonl => "jsonl",
            LogFormat::Csv => "csv",
        };
        let p = self.output_path(&format!("{stem}.{ext}"));
        save_log(log, &p, format).with_context(|| format!("writing {}", p.display()))
    }
}

/// Parses `B` from a scalar (filled to `k x k`), a `"a,b;c,d"` string or an
/// array of rows.
fn matrix_from_value(v: &Value, k: Option<usize>) -> anyhow::Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = match v {
        Value::Number(x) => {
            let x = x.as_f64().ok_or_else(|| usage("--b: not a number"))?;
            let k = k.ok_or_else(|| usage("a scalar --b needs --k"))?;
            vec![vec![x; k]; k]
        }
        Value::String(s) => {
            let rows: Vec<Vec<f64>> = s
                .split(';')
                .map(|row| {
                    row.split(',')
                        .map(|x| {
                            x.trim()
                                .parse::<f64>()
                                .map_err(|e| usage(format!("--b entry `{x}`: {e}")))
                        })
                        .collect::<anyhow::Result<Vec<_>>>()
                })
                .collect::<anyhow::Result<_>>()?;
            if rows.len() == 1 && rows[0].len() == 1 {
                return matrix_from_value(&serde_json::json!(rows[0][0]), k);
            }
            rows
        }
        Value::Array(_) => serde_json::from_value(v.clone())
            .map_err(|e| usage(format!("--b: expected an array of rows: {e}")))?,
        _ => {
            return Err(usage(
                "--b: expected a number, a string or an array of rows",
            ))
        }
    };
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(usage(format!(
            "--b must be square, got {n} rows of unequal or wrong length"
        )));
    }
    if let Some(k) = k {
        if k != n {
            return Err(usage(format!("--k {k} disagrees with a {n}x{n} --b")));
        }
    }
    Ok(Array2::from_shape_vec((n, n), rows.concat())?)
}

fn parse_list(key: &str, flag: Option<String>) -> anyhow::Result<Option<Vec<usize>>> {
    flag.map(|s| {
        s.split(',')
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|e| usage(format!("--{key} entry `{x}`: {e}")))
            })
            .collect()
    })
    .transpose()
}

fn fit_config(ctx: &mut Context, a: FitArgs, k: usize) -> anyhow::Result<FitConfig> {
    let d = FitConfig::default();
    let seed = ctx.seed()?;
    let r = &mut ctx.resolver;
    let config = FitConfig {
        k,
        alpha_value: r.value("alpha", a.alpha, d.alpha_value)?,
        max_outer_iters: r.value("max_outer_iters", a.max_outer_iters, d.max_outer_iters)?,
        max_inner_iters: r.value("max_inner_iters", a.max_inner_iters, d.max_inner_iters)?,
        rel_tol: r.value("rel_tol", a.rel_tol, d.rel_tol)?,
        init: r.parsed::<InitStrategy>("init", a.init, "uniform-jitter")?,
        jitter_scale: r.value("jitter_scale", a.jitter_scale, d.jitter_scale)?,
        seed,
        clamp_eps: r.value("clamp_eps", a.clamp_eps, d.clamp_eps)?,
        restarts: r.value("restarts", a.restarts, d.restarts)?,
        refine_rounds: r.value("refine_rounds", a.refine_rounds, d.refine_rounds)?,
        extrapolate: r.value("extrapolate", a.extrapolate, d.extrapolate)?,
        baseline_distance: r.parsed::<RowDistance>(
            "baseline_distance",
            a.baseline_distance,
            "euclidean",
        )?,
    };
    if config.init == InitStrategy::GroundTruth {
        return Err(usage(
            "--init ground-truth is only available through the library",
        ));
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// table1:1 .. table1:4 or reddit-like; other flags override its fields.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of nodes.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of transactions.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of groups; needed when --b is a single value.
    #[arg(long)]
    pub k: Option<usize>,
    /// Dirichlet concentration, the same for every group.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Interaction matrix: one value for every cell, or rows as "a,b;c,d".
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    /// Draw the transaction count from Poisson(rate) instead of --n.
    #[arg(long)]
    pub poisson_rate: Option<f64>,
    /// Redraws allowed per transaction while it has no recipient.
    #[arg(long)]
    pub max_rejections: Option<usize>,
}

#[derive(Serialize)]
struct SimulationRecord<'a> {
    config: &'a SimulationConfig,
    transactions: usize,
    rejections: usize,
}

pub fn simulate(ctx: &mut Context, a: SimulateArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let r = &mut ctx.resolver;
    let preset = r.optional::<String>("preset", a.preset)?;
    let mut config = match &preset {
        Some(p) => p
            .parse::<Preset>()
            .and_then(|p| p.config(seed))
            .map_err(|e| usage(format!("--preset: {e}")))?,
        None => SimulationConfig::new(0, 0, 0.1, Array2::zeros((0, 0)), seed),
    };
    let k = r.optional::<usize>("k", a.k)?;
    match r.optional::<Value>("b", a.b.map(Value::String))? {
        Some(v) => config.b = matrix_from_value(&v, k)?,
        None if preset.is_none() => return Err(usage("--b is required without --preset")),
        None => {}
    }
    if let Some(k) = k {
        if k != config.k() {
            return Err(usage(format!(
                "--k {k} disagrees with the {0}x{0} B",
                config.k()
            )));
        }
    }
    if let Some(m) = r.optional::<usize>("m", a.m)? {
        if config.sender_weights.as_ref().is_some_and(|w| w.len() != m) {
            config.sender_weights = None;
        }
        config.m = m;
    } else if preset.is_none() {
        return Err(usage("--m is required without --preset"));
    }
    let alpha = r.value(
        "alpha",
        a.alpha,
        config.alpha.first().copied().unwrap_or(0.1),
    )?;
    config.alpha = vec![alpha; config.k()];
    match (
        r.optional::<usize>("n", a.n)?,
        r.optional::<f64>("poisson_rate", a.poisson_rate)?,
    ) {
        (Some(_), Some(_)) => return Err(usage("--n and --poisson-rate are exclusive")),
        (Some(n), None) => config.count = TransactionCount::Fixed(n),
        (None, Some(rate)) => config.count = TransactionCount::Poisson(rate),
        (None, None) if preset.is_none() => {
            return Err(usage("--n or --poisson-rate is required without --preset"))
        }
        (None, None) => {}
    }
    config.max_rejections = r.value("max_rejections", a.max_rejections, config.max_rejections)?;
    config.validate().map_err(|e| usage(e.to_string()))?;

    let net = simulate_network(&config)?;
    let format = ctx.output_format(LogFormat::Jsonl)?;
    ctx.write_log("log", &net.log, format)?;
    ctx.write("truth_pi.csv", matrix_csv(net.memberships.as_array()))?;
    let groups = Array2::from_shape_fn((net.groups.len(), config.m), |(t, i)| net.groups[t][i]);
    ctx.write("truth_groups.csv", matrix_csv(&groups))?;
    ctx.write_json(
        "simulation.json",
        &SimulationRecord {
            config: &config,
            transactions: net.log.len(),
            rejections: net.rejections,
        },
    )?;
    println!(
        "simulated {} transactions over {} nodes in {} groups ({} rejected draws)",
        net.log.len(),
        config.m,
        config.k(),
        net.rejections
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitCmdArgs {
    /// Transaction log (.jsonl or .csv).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Number of groups.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

fn write_ordered_counts(
    ctx: &mut Context,
    log: &TransactionLog,
    pi: &MembershipMatrix,
) -> anyhow::Result<()> {
    let ordered = ordered_adjacency(&to_counts(log).counts, pi)?;
    ctx.write("ordered_adjacency.csv", matrix_csv(&ordered.matrix))?;
    ctx.write_json(
        "ordered_adjacency.json",
        &serde_json::json!({
            "order": ordered.order,
            "boundaries": ordered.boundaries,
            "groups": ordered.groups,
        }),
    )
}

pub fn fit(ctx: &mut Context, a: FitCmdArgs) -> anyhow::Result<()> {
    let path: PathBuf = ctx.resolver.required("log", a.log)?;
    let k = ctx.resolver.value("k", a.k, 2usize)?;
    let config = fit_config(ctx, a.fit, k)?;
    let log = ctx.read_log(&path)?;
    let model = tmmsb::fit(&log, &config)?;
    ctx.write_json("model.json", &model.to_document())?;
    let trace: String = std::iter::once("iteration,elbo\n".to_string())
        .chain(
            model
                .trace
                .iter()
                .enumerate()
                .map(|(i, e)| format!("{},{e}\n", i + 1)),
        )
        .collect();
    ctx.write("trace.csv", trace)?;
    ctx.write("pi.csv", matrix_csv(model.memberships.as_array()))?;
    ctx.write("b.csv", matrix_csv(model.b()))?;
    write_ordered_counts(ctx, &log, &model.memberships)?;
    let freq = predicted_frequency_with(&model.memberships, model.b(), &log)?;
    ctx.write("predicted_frequency.csv", matrix_csv(&freq))?;
    if !model.converged {
        eprintln!(
            "warning: not converged after {} outer iterations; outputs carry converged = false",
            model.iterations
        );
    }
    println!(
        "K = {k}: final ELBO {:.4} after {} outer iterations (converged: {})",
        model.final_elbo(),
        model.iterations,
        model.converged
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Smallest K scanned.
    #[arg(long)]
    pub k_min: Option<usize>,
    /// Largest K scanned.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

pub fn select(ctx: &mut Context, a: SelectArgs) -> anyhow::Result<()> {
    let path: PathBuf = ctx.resolver.required("log", a.log)?;
    let k_min = ctx.resolver.value("k_min", a.k_min, 2usize)?;
    let k_max = ctx.resolver.value("k_max", a.k_max, 7usize)?;
    if k_min == 0 || k_min > k_max {
        return Err(usage(format!("empty K range {k_min}..={k_max}")));
    }
    let base = fit_config(ctx, a.fit, k_min)?;
    let log = ctx.read_log(&path)?;
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let report = select_k(&log, &ks, &base)?;
    ctx.write_json("bic.json", &report)?;
    let table = report.render_table();
    ctx.write("bic.txt", &table)?;
    for r in report.records.iter().filter(|r| !r.converged) {
        eprintln!(
            "warning: K = {} not converged after {} outer iterations",
            r.k, r.iterations
        );
    }
    print!("{table}");
    println!("best K = {}", report.best_k);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// baseline.json written by `baseline`.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Ground-truth memberships as CSV (e.g. truth_pi.csv).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Held-out log for rank at full recall.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport {
    source: &'static str,
    soft_bcubed: Option<SoftClusterScore>,
    /// Share of nodes whose argmax group matches the truth after alignment;
    /// only when both sides have the same K.
    aligned_accuracy: Option<f64>,
    mean_rank: Option<f64>,
    heldout_messages: Option<usize>,
    mean_recipients: Option<f64>,
}

fn load_scored(
    ctx: &mut Context,
    a: &EvaluateArgs,
) -> anyhow::Result<(&'static str, MembershipMatrix, Array2<f64>)> {
    let model: Option<PathBuf> = ctx.resolver.optional("model", a.model.clone())?;
    let baseline: Option<PathBuf> = ctx.resolver.optional("baseline", a.baseline.clone())?;
    match (model, baseline) {
        (Some(p), None) => {
            let doc: ModelDocument = serde_json::from_str(&ctx.read_input(&p)?)
                .with_context(|| format!("parsing {}", p.display()))?;
            let model = doc.into_model()?;
            let b = model.b().clone();
            Ok(("model", model.memberships, b))
        }
        (None, Some(p)) => {
            let base: Baseline = serde_json::from_str(&ctx.read_input(&p)?)
                .with_context(|| format!("parsing {}", p.display()))?;
            let pi = MembershipMatrix::one_hot(&base.labels, base.crude_b.nrows())?;
            Ok(("baseline", pi, base.crude_b))
        }
        _ => Err(usage("pass exactly one of --model and --baseline")),
    }
}

pub fn evaluate(ctx: &mut Context, a: EvaluateArgs) -> anyhow::Result<()> {
    let (source, pi, b) = load_scored(ctx, &a)?;
    let truth: Option<PathBuf> = ctx.resolver.optional("truth", a.truth)?;
    let heldout: Option<PathBuf> = ctx.resolver.optional("heldout", a.heldout)?;
    if truth.is_none() && heldout.is_none() {
        return Err(usage("nothing to score: pass --truth and/or --heldout"));
    }
    let mut report = EvalReport {
        source,
        soft_bcubed: None,
        aligned_accuracy: None,
        mean_rank: None,
        heldout_messages: None,
        mean_recipients: None,
    };
    if let Some(p) = truth {
        let text = ctx.read_input(&p)?;
        let truth = MembershipMatrix::new(read_matrix_csv(text.as_bytes())?)
            .with_context(|| format!("truth memberships in {}", p.display()))?;
        let score = soft_bcubed(&pi, &truth)?;
        println!(
            "soft BCubed: precision {:.4} recall {:.4} F {:.4}",
            score.precision, score.recall, score.f_measure
        );
        report.soft_bcubed = Some(score);
        if truth.k() == pi.k() && truth.num_nodes() == pi.num_nodes() {
            let perm = align_labels(&truth, &pi)?;
            let aligned = pi.permute_columns(&perm).hard_labels();
            let hits = aligned
                .iter()
                .zip(truth.hard_labels())
                .filter(|(a, b)| **a == *b)
                .count();
            let acc = hits as f64 / aligned.len() as f64;
            println!("aligned argmax accuracy {acc:.4}");
            report.aligned_accuracy = Some(acc);
        }
    }
    if let Some(p) = heldout {
        let log = ctx.read_log(&p)?;
        let rank = rank_at_full_recall_with(&pi, &b, &log)?;
        let mean_recipients = log.total_recipients() as f64 / log.len() as f64;
        println!(
            "mean rank at full recall {rank:.3} over {} messages (mean recipients {mean_recipients:.3})",
            log.len()
        );
        report.mean_rank = Some(rank);
        report.heldout_messages = Some(log.len());
        report.mean_recipients = Some(mean_recipients);
    }
    ctx.write_json("eval.json", &report)
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Log the model was fitted on.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn summarize(ctx: &mut Context, a: SummarizeArgs) -> anyhow::Result<()> {
    let model_path: PathBuf = ctx.resolver.required("model", a.model)?;
    let log_path: PathBuf = ctx.resolver.required("log", a.log)?;
    let doc: ModelDocument = serde_json::from_str(&ctx.read_input(&model_path)?)
        .with_context(|| format!("parsing {}", model_path.display()))?;
    let model = doc.into_model()?;
    let log = ctx.read_log(&log_path)?;
    let summary = group_summaries_with(&model.memberships, model.b(), &log)?;
    let table = summary.render_table();
    ctx.write_json("summary.json", &summary)?;
    ctx.write("summary.txt", &table)?;
    ctx.write("weighted_b.csv", matrix_csv(&summary.weighted_b))?;
    let freq = predicted_frequency_with(&model.memberships, model.b(), &log)?;
    ctx.write("predicted_frequency.csv", matrix_csv(&freq))?;
    print!("{table}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Messages to hold out.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Held-out messages come from this many most active senders.
    #[arg(long)]
    pub top_senders: Option<usize>,
}

pub fn split(ctx: &mut Context, a: SplitArgs) -> anyhow::Result<()> {
    let path: PathBuf = ctx.resolver.required("log", a.log)?;
    let n_test = ctx.resolver.value("n_test", a.n_test, 500usize)?;
    let top = ctx.resolver.value("top_senders", a.top_senders, 10usize)?;
    let seed = ctx.seed()?;
    let in_format = ctx.input_format(&path)?;
    let log = ctx.read_log(&path)?;
    let (train, test) = holdout_split(&log, n_test, top, seed)?;
    let format = ctx.output_format(in_format)?;
    ctx.write_log("train", &train, format)?;
    ctx.write_log("test", &test, format)?;
    println!(
        "{} training and {} held-out transactions",
        train.len(),
        test.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also write the socio-matrix of counts at or above this value.
    #[arg(long)]
    pub threshold: Option<u64>,
}

pub fn reduce(ctx: &mut Context, a: ReduceArgs) -> anyhow::Result<()> {
    let path: PathBuf = ctx.resolver.required("log", a.log)?;
    let threshold = ctx.resolver.optional::<u64>("threshold", a.threshold)?;
    let log = ctx.read_log(&path)?;
    let counts = to_counts(&log);
    ctx.write("counts.csv", matrix_csv(&counts.counts))?;
    let sent = Array2::from_shape_vec((counts.sent.len(), 1), counts.sent.clone())?;
    ctx.write("sent.csv", matrix_csv(&sent))?;
    if let Some(t) = threshold {
        let socio = to_socio(&counts, t).map_err(|e| usage(e.to_string()))?;
        ctx.write("socio.csv", matrix_csv(&socio.adj))?;
    }
    println!(
        "{} nodes, {} recipient slots in {} transactions",
        counts.num_nodes(),
        counts.total(),
        log.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// euclidean or cosine row distance.
    #[arg(long)]
    pub distance: Option<String>,
    #[arg(long)]
    pub clamp_eps: Option<f64>,
}

pub fn baseline(ctx: &mut Context, a: BaselineArgs) -> anyhow::Result<()> {
    let path: PathBuf = ctx.resolver.required("log", a.log)?;
    let k = ctx.resolver.required::<usize>("k", a.k)?;
    let distance = ctx
        .resolver
        .parsed::<RowDistance>("distance", a.distance, "euclidean")?;
    let eps = ctx.resolver.value(
        "clamp_eps",
        a.clamp_eps,
        tmmsb::inference::fit::DEFAULT_CLAMP_EPS,
    )?;
    let log = ctx.read_log(&path)?;
    if k == 0 || k > log.num_nodes() {
        return Err(usage(format!("--k must lie in 1..={}", log.num_nodes())));
    }
    let base = baseline_with_distance(&to_counts(&log), k, distance, eps)?;
    ctx.write_json("baseline.json", &base)?;
    ctx.write("crude_b.csv", matrix_csv(&base.crude_b))?;
    let pi = MembershipMatrix::one_hot(&base.labels, k)?;
    write_ordered_counts(ctx, &log, &pi)?;
    let mut sizes = vec![0usize; k];
    for &l in &base.labels {
        sizes[l] += 1;
    }
    println!("cluster sizes {sizes:?}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long)]
    pub m: Option<String>,
    /// Comma-separated transaction counts.
    #[arg(long)]
    pub n: Option<String>,
    /// Comma-separated group counts.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Timed fits per grid point; the median is kept.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Outer and inner iterations per fit; 0 runs every fit to convergence.
    #[arg(long)]
    pub fixed_iterations: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

pub fn bench(ctx: &mut Context, a: BenchArgs) -> anyhow::Result<()> {
    let d = BenchGrid::default();
    let seed = ctx.seed()?;
    let r = &mut ctx.resolver;
    let grid = BenchGrid {
        m: r.value("m", parse_list("m", a.m)?, d.m)?,
        n: r.value("n", parse_list("n", a.n)?, d.n)?,
        k: r.value("k", parse_list("k", a.k)?, d.k)?,
        alpha: r.value("alpha", a.alpha, d.alpha)?,
        repeats: r.value("repeats", a.repeats, d.repeats)?,
        seed,
        fixed_iterations: match r.value("fixed_iterations", a.fixed_iterations, 5usize)? {
            0 => None,
            it => Some(it),
        },
    };
    let base = FitConfig {
        rel_tol: r.value("rel_tol", a.rel_tol, FitConfig::default().rel_tol)?,
        seed,
        ..FitConfig::default()
    };
    grid.validate().map_err(|e| usage(e.to_string()))?;
    let points = run_bench(&grid, &base)?;
    let fit = fit_scaling(&points)?;
    let mut csv = String::from("m,n,k,seconds,iterations,converged\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.m, p.n, p.k, p.seconds, p.iterations, p.converged
        ));
    }
    ctx.write("bench.csv", csv)?;
    ctx.write_json(
        "scaling.json",
        &serde_json::json!({ "grid": grid, "fit": fit }),
    )?;
    println!(
        "time ~ M^{:.3} N^{:.3} K^{:.3}  (R^2 = {:.4}, {} points)",
        fit.exponent_m,
        fit.exponent_n,
        fit.exponent_k,
        fit.r_squared,
        points.len()
    );
    Ok(())
}
