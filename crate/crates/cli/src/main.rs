//! `knn-kl` command-line interface.
//!
//! Exit codes: 0 on success, 2 for unreadable or invalid input and
//! configuration, 3 when the samples are too small or degenerate for the
//! requested neighbor orders.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use knn_kl::estimators::{entropy_estimate_with, jitter, kl_estimate_with, EstimateOptions};
use knn_kl::experiment::{
    convergence_sweep, diagnose_limit_law, ConvergenceResult, ExperimentConfig, Target,
};
use knn_kl::functionals::{condition_report, FunctionalParams};
use knn_kl::special::IterLevel;
use knn_kl::{
    DensityModel, EntropyOrders, Error, EstimateReport, OrderSpec, PointSample, SearchMethod,
    SeededStream,
};
use serde::Serialize;

/// Stream id of the jitter noise; the seed comes from `--seed`.
const JITTER_STREAM_X: u64 = 0;
const JITTER_STREAM_Y: u64 = 1;

#[derive(Parser)]
#[command(
    name = "knn-kl",
    version,
    about = "k-nearest-neighbor estimates of KL divergence and entropy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate D(P‖Q) from a sample of P (--x) and a sample of Q (--y).
    EstimateKl(KlArgs),
    /// Estimate the Shannon entropy of the law behind --x.
    EstimateEntropy(EntropyArgs),
    /// Evaluate the K, Q, T and L regularity functionals for a model pair.
    CheckConditions(ConditionArgs),
    /// Bias / variance / MSE of the estimator across sample sizes.
    ExperimentConvergence(ConvergenceArgs),
    /// Kolmogorov–Smirnov check of m‖x − Y_(l)‖^d against its Erlang limit.
    DiagnoseLimitLaw(LimitLawArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    KdTree,
    BruteForce,
}

impl From<Method> for SearchMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::KdTree => SearchMethod::KdTree,
            Method::BruteForce => SearchMethod::BruteForce,
        }
    }
}

#[derive(clap::Args)]
struct SampleOpts {
    /// Add Uniform[-MAG, MAG] noise to every coordinate before estimating.
    #[arg(long, value_name = "MAG")]
    jitter: Option<f64>,
    /// Seed of the jitter noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the per-point logarithmic terms in the output.
    #[arg(long)]
    terms: bool,
    #[arg(long, value_enum, default_value = "kd-tree")]
    method: Method,
}

#[derive(clap::Args)]
struct KlArgs {
    #[arg(long = "x", value_name = "PATH")]
    x: PathBuf,
    #[arg(long = "y", value_name = "PATH")]
    y: PathBuf,
    /// Neighbor order inside the X sample.
    #[arg(
        short = 'k',
        required_unless_present = "orders_k",
        conflicts_with = "orders_k"
    )]
    k: Option<usize>,
    /// Neighbor order into the Y sample.
    #[arg(
        short = 'l',
        required_unless_present = "orders_l",
        conflicts_with = "orders_l"
    )]
    l: Option<usize>,
    /// File with one order per X point.
    #[arg(long, value_name = "PATH")]
    orders_k: Option<PathBuf>,
    /// File with one Y-order per X point.
    #[arg(long, value_name = "PATH")]
    orders_l: Option<PathBuf>,
    #[command(flatten)]
    sample: SampleOpts,
}

#[derive(clap::Args)]
struct EntropyArgs {
    #[arg(long = "x", value_name = "PATH")]
    x: PathBuf,
    #[arg(
        short = 'k',
        required_unless_present = "orders_k",
        conflicts_with = "orders_k"
    )]
    k: Option<usize>,
    #[arg(long, value_name = "PATH")]
    orders_k: Option<PathBuf>,
    #[command(flatten)]
    sample: SampleOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(clap::Args)]
struct ConditionArgs {
    #[arg(long, value_name = "SPEC")]
    model_p: String,
    #[arg(long, value_name = "SPEC")]
    model_q: String,
    /// Exponent ν of L(ν).
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Iteration level N of the G_N gauge.
    #[arg(long, default_value_t = 1)]
    level: u32,
    /// Exponent ε of Q and T.
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Radius R of the ball averages.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Distance threshold of K; defaults to e_[N].
    #[arg(long)]
    threshold: Option<f64>,
    /// Monte-Carlo pairs / points per functional.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = knn_kl::functionals::DEFAULT_RADII_GRID)]
    radii_grid: usize,
    #[arg(long, default_value_t = knn_kl::functionals::DEFAULT_QUAD_BUDGET)]
    quad_budget: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Kl,
    Entropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct ConvergenceArgs {
    #[arg(long, value_name = "SPEC")]
    model_p: String,
    /// Required for --target kl.
    #[arg(long, value_name = "SPEC")]
    model_q: Option<String>,
    #[arg(long, value_enum, default_value = "kl")]
    target: TargetArg,
    /// Comma-separated n:m pairs, ascending in n. For entropy a bare n is accepted.
    #[arg(long, value_name = "N1:M1,N2:M2,...")]
    sizes: String,
    #[arg(short = 'k')]
    k: usize,
    /// Defaults to k.
    #[arg(short = 'l')]
    l: Option<usize>,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws for the Monte-Carlo KL oracle when no closed form exists.
    #[arg(long)]
    oracle_budget: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: TableFormat,
}

#[derive(clap::Args)]
struct LimitLawArgs {
    #[arg(long, value_name = "SPEC")]
    model_q: String,
    /// Comma-separated coordinates of the point x.
    #[arg(long = "x", value_name = "X1,X2,...", allow_hyphen_values = true)]
    x: String,
    #[arg(short = 'l')]
    l: usize,
    #[arg(short = 'm', long = "m")]
    m: usize,
    #[arg(long)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Capacity { .. } | Error::DegenerateSample { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}

fn with_path(path: &Path, e: Error) -> Failure {
    let detail = match &e {
        Error::Parse { reason, .. } => reason.clone(),
        other => other.to_string(),
    };
    let mut f = Failure::from(e);
    f.message = format!("{}: {detail}", path.display());
    f
}

fn read_sample(path: &Path) -> Result<PointSample, Failure> {
    PointSample::from_text(&read_text(path)?).map_err(|e| with_path(path, e))
}

/// One positive integer per line; blank lines and `#` comments are skipped.
fn read_orders(path: &Path) -> Result<Vec<usize>, Failure> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line.parse().map_err(|_| {
            input_error(format!(
                "{}: line {}: {line:?} is not an order",
                path.display(),
                i + 1
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

fn parse_model(text: &str, flag: &str) -> Result<DensityModel, Failure> {
    DensityModel::parse(text).map_err(|e| input_error(format!("{flag}: {e}")))
}

fn maybe_jitter(x: PointSample, opts: &SampleOpts, stream: u64) -> Result<PointSample, Failure> {
    match opts.jitter {
        Some(mag) => Ok(jitter(&x, mag, SeededStream::new(opts.seed, stream))?),
        None => Ok(x),
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter_seed: Option<u64>,
}

fn print_estimate(report: EstimateReport, opts: &SampleOpts) -> Result<String, Failure> {
    let out = EstimateOutput {
        report,
        jitter: opts.jitter,
        jitter_seed: opts.jitter.map(|_| opts.seed),
    };
    Ok(serde_json::to_string_pretty(&out).expect("report serializes") + "\n")
}

fn estimate_kl(args: KlArgs) -> Result<String, Failure> {
    let x = maybe_jitter(read_sample(&args.x)?, &args.sample, JITTER_STREAM_X)?;
    let y = maybe_jitter(read_sample(&args.y)?, &args.sample, JITTER_STREAM_Y)?;
    let n = x.len();
    let per_point =
        |uniform: Option<usize>, file: &Option<PathBuf>| -> Result<Vec<usize>, Failure> {
            match file {
                Some(path) => read_orders(path),
                None => Ok(vec![uniform.expect("clap enforces one of the two"); n]),
            }
        };
    let orders = match (args.k, args.l, &args.orders_k, &args.orders_l) {
        (Some(k), Some(l), None, None) => OrderSpec::uniform(k, l),
        _ => OrderSpec::PerSample {
            ks: per_point(args.k, &args.orders_k)?,
            ls: per_point(args.l, &args.orders_l)?,
        },
    };
    let opts = EstimateOptions {
        method: args.sample.method.into(),
        keep_terms: args.sample.terms,
    };
    print_estimate(kl_estimate_with(&x, &y, &orders, opts)?, &args.sample)
}

fn estimate_entropy(args: EntropyArgs) -> Result<String, Failure> {
    let x = maybe_jitter(read_sample(&args.x)?, &args.sample, JITTER_STREAM_X)?;
    let orders = match (&args.orders_k, args.k) {
        (Some(path), _) => EntropyOrders::PerSample {
            ks: read_orders(path)?,
        },
        (None, Some(k)) => EntropyOrders::Uniform { k },
        (None, None) => unreachable!("clap enforces one of -k and --orders-k"),
    };
    let opts = EstimateOptions {
        method: args.sample.method.into(),
        keep_terms: args.sample.terms,
    };
    print_estimate(entropy_estimate_with(&x, &orders, opts)?, &args.sample)
}

fn check_conditions(args: ConditionArgs) -> Result<String, Failure> {
    let p = parse_model(&args.model_p, "--model-p")?;
    let q = parse_model(&args.model_q, "--model-q")?;
    let mut params =
        FunctionalParams::new(args.nu, IterLevel::new(args.level)?, args.eps, args.radius)?
            .with_grid(args.radii_grid, args.quad_budget)?;
    if let Some(t) = args.threshold {
        params = params.with_threshold(t)?;
    }
    let report = condition_report(&p, &q, &params, args.budget, args.seed)?;
    Ok(match args.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => {
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
    })
}

fn parse_sizes(text: &str, target: Target) -> Result<Vec<(usize, usize)>, Failure> {
    let bad = |item: &str| input_error(format!("--sizes: cannot parse {item:?} as n:m"));
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(item));
            match item.split_once(':') {
                Some((n, m)) => Ok((num(n)?, num(m)?)),
                None if target == Target::Entropy => Ok((num(item)?, 0)),
                None => Err(bad(item)),
            }
        })
        .collect()
}

const CSV_COLUMNS: &str =
    "n,m,mean_estimate,bias,variance,mse,trials,mse_std_error,degenerate_trials";

fn convergence_csv(cfg: &ExperimentConfig, result: &ConvergenceResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# oracle = {}", result.oracle);
    let _ = writeln!(out, "# oracle_source = {}", result.oracle_source);
    let _ = writeln!(out, "# model_p = {}", cfg.model_p);
    if cfg.target == Target::Divergence {
        let _ = writeln!(out, "# model_q = {}", cfg.model_q);
    }
    let _ = writeln!(
        out,
        "# k = {}, l = {}, trials = {}, seed = {}",
        cfg.k, cfg.l, cfg.trials, cfg.master_seed
    );
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.mean_estimate,
            r.bias,
            r.variance,
            r.mse,
            r.trials,
            r.mse_std_error,
            r.degenerate_trials
        );
    }
    out
}

#[derive(Serialize)]
struct ConvergenceOutput<'a> {
    model_p: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_q: Option<String>,
    target: Target,
    k: usize,
    l: usize,
    trials: usize,
    seed: u64,
    #[serde(flatten)]
    result: &'a ConvergenceResult,
}

fn experiment_convergence(args: ConvergenceArgs) -> Result<Option<String>, Failure> {
    let target = match args.target {
        TargetArg::Kl => Target::Divergence,
        TargetArg::Entropy => Target::Entropy,
    };
    let model_p = parse_model(&args.model_p, "--model-p")?;
    let model_q = match (&args.model_q, target) {
        (Some(text), _) => parse_model(text, "--model-q")?,
        (None, Target::Entropy) => model_p.clone(),
        (None, Target::Divergence) => {
            return Err(input_error("--model-q is required for --target kl"))
        }
    };
    let cfg = ExperimentConfig {
        model_p,
        model_q,
        target,
        sizes: parse_sizes(&args.sizes, target)?,
        k: args.k,
        l: args.l.unwrap_or(args.k),
        trials: args.trials,
        master_seed: args.seed,
        oracle_budget: args.oracle_budget,
    };
    let result = convergence_sweep(&cfg)?;
    if result.low_trials() {
        eprintln!(
            "warning: fewer than 2 usable trials in some rows; their variance is reported as 0"
        );
    }
    for r in result.rows.iter().filter(|r| r.degenerate_trials > 0) {
        eprintln!(
            "warning: n = {}: {} degenerate replicate(s) skipped",
            r.n, r.degenerate_trials
        );
    }
    let text = match args.format {
        TableFormat::Csv => convergence_csv(&cfg, &result),
        TableFormat::Json => {
            let out = ConvergenceOutput {
                model_p: cfg.model_p.spec_string(),
                model_q: (target == Target::Divergence).then(|| cfg.model_q.spec_string()),
                target,
                k: cfg.k,
                l: cfg.l,
                trials: cfg.trials,
                seed: cfg.master_seed,
                result: &result,
            };
            serde_json::to_string_pretty(&out).expect("result serializes") + "\n"
        }
    };
    match args.out {
        Some(path) => {
            std::fs::write(&path, text)
                .map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

fn diagnose(args: LimitLawArgs) -> Result<String, Failure> {
    let q = parse_model(&args.model_q, "--model-q")?;
    let x = args
        .x
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| input_error(format!("--x: cannot parse {c:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if x.len() != q.dim() {
        return Err(Error::DimensionMismatch(x.len(), q.dim()).into());
    }
    let report = diagnose_limit_law(&q, &x, args.l, args.m, args.replicates, args.seed)?;
    Ok(serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
}

fn run(cli: Cli) -> Result<Option<String>, Failure> {
    match cli.command {
        Command::EstimateKl(a) => estimate_kl(a).map(Some),
        Command::EstimateEntropy(a) => estimate_entropy(a).map(Some),
        Command::CheckConditions(a) => check_conditions(a).map(Some),
        Command::ExperimentConvergence(a) => experiment_convergence(a),
        Command::DiagnoseLimitLaw(a) => diagnose(a).map(Some),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
