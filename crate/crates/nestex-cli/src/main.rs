//! `nestex` — nested-expectation estimation from joint samples.
//!
//! Three subcommands: `sample` draws joint samples from a built-in problem
//! into a CSV, `estimate` runs a post-stratified estimator over such a CSV
//! (no model code needed), and `benchmark` sweeps estimators over a grid of
//! sample sizes and writes MSE tables and a convergence chart.
//!
//! Exit codes: 0 on success, 1 for runtime/domain failures (I/O, `log` of a
//! non-positive stratum mean, a singular regression), 2 for usage and
//! format errors (unknown tags, malformed CSV, impossible grids). Every
//! subcommand is deterministic given its flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nestex::{
    check_stratifiable, emit_outputs, estimate_post_strat, estimate_post_strat_reg,
    fit_loglog_slope, read_csv, run_benchmark, write_csv, BenchConfig, Error, EstimateResult,
    Method, NestedProblem, OuterFunction,
};

const ENV_THREADS: &str = "NESTEX_THREADS";

#[derive(Parser)]
#[command(
    name = "nestex",
    version,
    about = "Nested-expectation estimation by post-stratification of joint samples",
    after_help = "Environment:\n  NESTEX_THREADS  cap benchmark worker threads; 0 or unset picks the core count"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw joint samples from a built-in problem and write them to CSV
    Sample(SampleArgs),
    /// Estimate the nested expectation from a CSV of joint samples
    Estimate(EstimateArgs),
    /// Sweep estimators over an m-grid and write MSE tables and a chart
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// Problem tag: eig-toy, evsi-simple, or evsi-medical
    problem: String,
    /// Number of samples to draw (at least 1)
    #[arg(long)]
    n: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV with header x1..xJ,y1..yK
    input: PathBuf,
    /// Estimator: post-strat or post-strat-reg (nmc needs a model, not a file)
    #[arg(long)]
    method: String,
    /// Branching factor; the file must hold exactly m^(2K) rows
    #[arg(long)]
    m: u32,
    /// Outer function: identity, log, max, or linear (with --weights)
    #[arg(long)]
    f: String,
    /// Comma-separated weights for --f linear, one per X column
    #[arg(long)]
    weights: Option<String>,
    /// Accepted for interface stability; stratified estimation from a file
    /// is deterministic and draws no randomness
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Problem tag: eig-toy, evsi-simple, or evsi-medical
    #[arg(long)]
    problem: String,
    /// Comma-separated methods from post-strat, post-strat-reg, nmc
    #[arg(long)]
    methods: String,
    /// Comma-separated ascending branching factors, each at least 2
    #[arg(long = "m-grid")]
    m_grid: String,
    /// Replications per cell
    #[arg(long, default_value_t = 100)]
    reps: u32,
    /// Base seed for all cells
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for raw.csv, summary.csv, mse.svg
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_class(&error))
        }
    }
}

/// Applies `NESTEX_THREADS` to the global worker pool before any parallel
/// work starts. Unset or `0` keeps the automatic core count.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(ENV_THREADS) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{ENV_THREADS} must be a non-negative integer, got {raw:?}"))?;
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("could not configure {threads} worker threads: {e}"))
}

/// Maps library errors to the documented exit codes: 2 for usage/format
/// problems the caller can fix by changing flags or the input file, 1 for
/// runtime failures.
fn exit_class(error: &Error) -> u8 {
    match error {
        Error::Header { .. }
        | Error::Parse { .. }
        | Error::NonFinite { .. }
        | Error::RowWidth { .. }
        | Error::EmptyDataset
        | Error::InvalidSample { .. }
        | Error::InconsistentDimensions { .. }
        | Error::InvalidM { .. }
        | Error::NotStratifiable { .. }
        | Error::FunctionArity { .. }
        | Error::InvalidWeights { .. }
        | Error::ConditionalUnavailable { .. }
        | Error::NotEvsi { .. }
        | Error::UnknownProblem { .. }
        | Error::UnknownMethod { .. }
        | Error::InvalidConfig { .. } => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Sample(args) => cmd_sample(&args),
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Benchmark(args) => cmd_benchmark(&args),
    }
}

fn cmd_sample(args: &SampleArgs) -> Result<(), Error> {
    let problem: NestedProblem = args.problem.parse()?;
    if args.n == 0 {
        return Err(Error::InvalidConfig {
            detail: "--n must be at least 1".to_string(),
        });
    }
    let dataset = problem.sample_joint(args.n, args.seed);
    write_csv(&dataset, &args.out)?;
    println!(
        "wrote {} samples of {} ({} x + {} y columns) to {}",
        dataset.n(),
        problem,
        dataset.j_dim(),
        dataset.k_dim(),
        args.out.display()
    );
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Error> {
    let method: Method = args.method.parse()?;
    if method == Method::Nmc {
        return Err(Error::InvalidConfig {
            detail: "nmc draws from a problem's conditional sampler and cannot run on a \
                     dataset file; use post-strat or post-strat-reg"
                .to_string(),
        });
    }
    let f = parse_outer_function(&args.f, args.weights.as_deref())?;
    let dataset = read_csv(&args.input)?;
    check_stratifiable(&dataset, args.m)?;
    let result: EstimateResult = match method {
        Method::PostStrat => estimate_post_strat(&dataset, &f, args.m)?,
        Method::PostStratReg => estimate_post_strat_reg(&dataset, &f, args.m)?,
        Method::Nmc => unreachable!("rejected above"),
    };
    println!("estimate: {}", result.value);
    println!("method: {}", result.method);
    println!("N: {}", result.n_total);
    println!("m: {}", args.m);
    Ok(())
}

fn parse_outer_function(tag: &str, weights: Option<&str>) -> Result<OuterFunction, Error> {
    let require_no_weights = |f: OuterFunction| {
        if weights.is_some() {
            Err(Error::InvalidConfig {
                detail: format!("--weights only applies to --f linear, not --f {tag}"),
            })
        } else {
            Ok(f)
        }
    };
    match tag {
        "identity" => require_no_weights(OuterFunction::Identity),
        "log" => require_no_weights(OuterFunction::Log),
        "max" => require_no_weights(OuterFunction::MaxCoordinate),
        "linear" => {
            let Some(raw) = weights else {
                return Err(Error::InvalidConfig {
                    detail: "--f linear needs --weights w1,w2,... (one per x column)".to_string(),
                });
            };
            let weights = parse_list(raw, "--weights", |item| item.parse::<f64>().ok())?;
            Ok(OuterFunction::Linear(weights))
        }
        other => Err(Error::InvalidConfig {
            detail: format!("unknown outer function {other:?}: expected identity, log, max, or linear"),
        }),
    }
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), Error> {
    let problem: NestedProblem = args.problem.parse()?;
    let methods: Vec<Method> = parse_list(&args.methods, "--methods", |item| {
        item.parse::<Method>().ok()
    })?;
    let m_grid: Vec<u32> = parse_list(&args.m_grid, "--m-grid", |item| item.parse::<u32>().ok())?;

    if !problem.has_conditional() && methods.contains(&Method::Nmc) {
        eprintln!(
            "warning: {problem} has no conditional sampler; dropping nmc from the method list"
        );
    }

    let config = BenchConfig {
        problem,
        methods,
        m_grid,
        replications: args.reps,
        base_seed: args.seed,
        output_dir: args.out.clone(),
    };
    let table = run_benchmark(&config)?;
    emit_outputs(&table, &config.output_dir)?;

    println!("problem: {problem}  reference: {}", table.reference);
    println!("{:<16} {:>10} {:>13} {:>13} {:>6}", "method", "N", "mse", "stderr", "count");
    for s in &table.summary {
        println!(
            "{:<16} {:>10} {:>13.6e} {:>13.6e} {:>6}",
            s.method.to_string(),
            s.n_total,
            s.mse,
            s.stderr,
            s.count
        );
    }
    println!("log-log slopes of mse against N:");
    for &method in &config.effective_methods() {
        match fit_loglog_slope(&table, method) {
            Ok(slope) => println!("{:<16} {slope:>8.3}", method.to_string()),
            Err(Error::InsufficientPoints { have, need, .. }) => println!(
                "{:<16} not fitted ({have} valid cells, need {need})",
                method.to_string()
            ),
            Err(other) => return Err(other),
        }
    }
    for name in ["raw.csv", "summary.csv", "mse.svg"] {
        println!("wrote {}", config.output_dir.join(name).display());
    }
    Ok(())
}

/// Splits a comma-separated flag value, parsing each item with `parse` and
/// reporting the flag name and offending item on failure.
fn parse_list<T>(
    raw: &str,
    flag: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, Error> {
    let mut out = Vec::new();
    for item in raw.split(',') {
        let item = item.trim();
        let Some(value) = parse(item).filter(|_| !item.is_empty()) else {
            return Err(Error::InvalidConfig {
                detail: format!("{flag} has an unparseable item {item:?} in {raw:?}"),
            });
        };
        out.push(value);
    }
    Ok(out)
}
