//! Command-line surface: fit matrices from CSV, estimate rank, generate
//! test signals, and run simulation scenarios.
//!
//! Exit codes: 0 success, 1 I/O or configuration problems, 2 algorithmic
//! failures (rank collapse, insufficient screening selection, violated
//! preconditions).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ssvd::io::{read_matrix_csv_path, write_frame_csv, write_vector_csv};
use ssvd::sim::EvalReport;
use ssvd::{
    estimate_rank, fit, make_test_signal, parse_scenario, run_scenario, DenseMatrix, FitError,
    FoldScheme, RankEstimate, Scenario, SignalKind, SsvdConfig, SsvdFit, ThresholdKind,
};

const EXIT_CONFIG: i32 = 1;
const EXIT_ALGORITHM: i32 = 2;

#[derive(Parser)]
#[command(
    name = "ssvd",
    version,
    about = "Sparse SVD by thresholded subspace iteration",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for internal parallelism (0 = one per core). Output
    /// is identical for any value; only wall-clock changes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a sparse SVD to a CSV matrix.
    Fit(FitArgs),
    /// Estimate the signal rank by bi-cross-validation.
    Rank(RankArgs),
    /// Run a simulation scenario file and report losses.
    Simulate(SimulateArgs),
    /// Emit a test signal (optionally its wavelet coefficients).
    Signal(SignalArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input matrix (CSV, one row per line).
    matrix: PathBuf,
    /// Target rank, or `auto` to run rank selection first.
    #[arg(long)]
    rank: String,
    /// Thresholding rule: hard, soft or scad.
    #[arg(long, default_value = "hard")]
    threshold: String,
    /// SCAD shape parameter (with --threshold scad).
    #[arg(long, default_value_t = ssvd::threshold::SCAD_DEFAULT_A)]
    scad_a: f64,
    /// Convergence tolerance on successive projection distances.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Huberization quantile for the screening step.
    #[arg(long, default_value_t = 0.95)]
    beta: f64,
    /// Family-wise error rate of the screening test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replications per threshold-level estimate.
    #[arg(long, default_value_t = 100)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidate-rank cap for --rank auto.
    #[arg(long, default_value_t = 10)]
    rmax: usize,
    /// Output directory.
    #[arg(long, default_value = "ssvd-out")]
    out: PathBuf,
    /// Skip one header line in the input CSV.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct RankArgs {
    matrix: PathBuf,
    #[arg(long, default_value_t = 10)]
    rmax: usize,
    #[arg(long, default_value_t = 0.95)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Row and column fold counts, e.g. 2,2.
    #[arg(long, default_value = "2,2")]
    folds: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "ssvd-out")]
    out: PathBuf,
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (key = value format).
    scenario: PathBuf,
    #[arg(long, default_value = "ssvd-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SignalArgs {
    /// One of: peak, poly, step, sing.
    #[arg(long)]
    name: String,
    /// Number of samples (power of two, at least 64).
    #[arg(long)]
    length: usize,
    /// Emit wavelet coefficients instead of raw samples.
    #[arg(long)]
    dwt: bool,
    /// Output directory; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Algorithm(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Algorithm(_) => EXIT_ALGORITHM,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Algorithm(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Algorithm(e.to_string())
    }
}

#[derive(Serialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    argv: Vec<String>,
    seed: u64,
    threads: usize,
    config: serde_json::Value,
    input: Option<String>,
    outputs: Vec<String>,
    timings_seconds: BTreeMap<String, f64>,
    status: String,
    rank_estimate: Option<RankEstimate>,
}

impl RunManifest {
    fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        Self {
            tool: "ssvd".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            seed,
            threads,
            config,
            input: None,
            outputs: Vec::new(),
            timings_seconds: BTreeMap::new(),
            status: "ok".to_string(),
            rank_estimate: None,
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body).map_err(config_err)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(EXIT_CONFIG);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            std::process::exit(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args, cli.threads),
        Command::Rank(args) => cmd_rank(args, cli.threads),
        Command::Simulate(args) => cmd_simulate(args, cli.threads),
        Command::Signal(args) => cmd_signal(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn parse_threshold(name: &str, scad_a: f64) -> Result<ThresholdKind, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "hard" => Ok(ThresholdKind::Hard),
        "soft" => Ok(ThresholdKind::Soft),
        "scad" => ThresholdKind::scad(scad_a).map_err(config_err),
        other => Err(CliError::Config(format!(
            "unknown threshold kind `{other}` (use hard, soft or scad)"
        ))),
    }
}

fn load_matrix(path: &Path, header: bool) -> Result<DenseMatrix, CliError> {
    read_matrix_csv_path(path, header)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(config_err)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(config_err)?;
    Ok(path)
}

fn cmd_fit(args: FitArgs, threads: usize) -> Result<(), CliError> {
    if args.rmax == 0 {
        return Err(CliError::Config("--rmax must be at least 1".into()));
    }
    let kind = parse_threshold(&args.threshold, args.scad_a)?;
    ensure_out_dir(&args.out)?;

    let config_json = serde_json::json!({
        "rank": args.rank,
        "threshold": format!("{kind}"),
        "epsilon": args.epsilon,
        "max_iters": args.max_iters,
        "beta": args.beta,
        "alpha": args.alpha,
        "boot": args.boot,
        "rmax": args.rmax,
        "header": args.header,
    });
    let mut manifest = RunManifest::new("fit", args.seed, threads, config_json);
    manifest.input = Some(args.matrix.display().to_string());

    let t_read = Instant::now();
    let x = load_matrix(&args.matrix, args.header)?;
    manifest
        .timings_seconds
        .insert("read".into(), t_read.elapsed().as_secs_f64());

    let rank = match args.rank.as_str() {
        "auto" => {
            let t_rank = Instant::now();
            let est = estimate_rank(
                &x,
                args.rmax,
                args.beta,
                args.alpha,
                FoldScheme::default(),
                args.seed,
            )
            .map_err(|e| {
                let err = CliError::Algorithm(e.to_string());
                manifest.status = e.to_string();
                let _ = manifest.write(&args.out);
                err
            })?;
            manifest
                .timings_seconds
                .insert("rank_select".into(), t_rank.elapsed().as_secs_f64());
            let r_hat = est.r_hat;
            manifest.rank_estimate = Some(est);
            if r_hat == 0 {
                manifest.status = "estimated rank is 0 (no detectable signal)".into();
                manifest.write(&args.out)?;
                return Err(CliError::Algorithm(
                    "estimated rank is 0 (no detectable signal); nothing to fit".into(),
                ));
            }
            r_hat
        }
        text => text
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("--rank must be a number or `auto`, got `{text}`")))?,
    };

    let config = SsvdConfig {
        rank,
        kind,
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        beta: args.beta,
        alpha: args.alpha,
        m_boot: args.boot,
        seed: args.seed,
    };
    let t_fit = Instant::now();
    let result = fit(&x, &config);
    manifest
        .timings_seconds
        .insert("fit".into(), t_fit.elapsed().as_secs_f64());
    let fitted = match result {
        Ok(f) => f,
        Err(e) => {
            manifest.status = e.to_string();
            manifest.write(&args.out)?;
            return Err(e.into());
        }
    };

    let t_write = Instant::now();
    write_fit_outputs(&args.out, &fitted, &mut manifest)?;
    manifest
        .timings_seconds
        .insert("write".into(), t_write.elapsed().as_secs_f64());
    manifest.write(&args.out)?;

    println!(
        "fit: rank {} converged={} iterations={} d_hat={:?}",
        rank, fitted.converged, fitted.iterations, fitted.d_hat
    );
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn write_fit_outputs(
    dir: &Path,
    fitted: &SsvdFit,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let mut u_buf = Vec::new();
    write_frame_csv(&mut u_buf, &fitted.u_hat).map_err(config_err)?;
    let mut v_buf = Vec::new();
    write_frame_csv(&mut v_buf, &fitted.v_hat).map_err(config_err)?;
    let mut d_buf = Vec::new();
    write_vector_csv(&mut d_buf, &fitted.d_hat).map_err(config_err)?;
    for (name, body) in [
        ("u_hat.csv", u_buf),
        ("v_hat.csv", v_buf),
        ("d_hat.csv", d_buf),
    ] {
        let path = write_file(dir, name, std::str::from_utf8(&body).expect("ascii csv"))?;
        manifest.outputs.push(path.display().to_string());
    }

    let diag = serde_json::json!({
        "iterations": fitted.iterations,
        "converged": fitted.converged,
        "sigma_hat": fitted.sigma_hat.value(),
        "d_hat": fitted.d_hat,
        "u_support": fitted.u_support,
        "v_support": fitted.v_support,
        "screening": {
            "rows": fitted.selection.rows,
            "cols": fitted.selection.cols,
            "huber_delta": fitted.selection.huber_delta,
        },
        "trace": fitted.trace,
    });
    let path = write_file(dir, "fit.json", &serde_json::to_string_pretty(&diag).unwrap())?;
    manifest.outputs.push(path.display().to_string());
    Ok(())
}

fn cmd_rank(args: RankArgs, threads: usize) -> Result<(), CliError> {
    if args.rmax == 0 {
        return Err(CliError::Config("--rmax must be at least 1".into()));
    }
    let folds = parse_folds(&args.folds)?;
    ensure_out_dir(&args.out)?;
    let config_json = serde_json::json!({
        "rmax": args.rmax,
        "beta": args.beta,
        "alpha": args.alpha,
        "folds": [folds.rows, folds.cols],
        "header": args.header,
    });
    let mut manifest = RunManifest::new("rank", args.seed, threads, config_json);
    manifest.input = Some(args.matrix.display().to_string());

    let t_read = Instant::now();
    let x = load_matrix(&args.matrix, args.header)?;
    manifest
        .timings_seconds
        .insert("read".into(), t_read.elapsed().as_secs_f64());

    let t_est = Instant::now();
    let est = estimate_rank(&x, args.rmax, args.beta, args.alpha, folds, args.seed).map_err(
        |e| {
            manifest.status = e.to_string();
            let _ = manifest.write(&args.out);
            CliError::Algorithm(e.to_string())
        },
    )?;
    manifest
        .timings_seconds
        .insert("estimate".into(), t_est.elapsed().as_secs_f64());

    let path = write_file(
        &args.out,
        "rank.json",
        &serde_json::to_string_pretty(&est).unwrap(),
    )?;
    manifest.outputs.push(path.display().to_string());
    manifest.rank_estimate = Some(est.clone());
    manifest.write(&args.out)?;

    println!("estimated rank: {}", est.r_hat);
    println!("bcv errors by candidate rank: {:?}", est.bcv_errors);
    Ok(())
}

fn parse_folds(text: &str) -> Result<FoldScheme, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!(
            "--folds expects `rows,cols`, got `{text}`"
        )));
    }
    let rows = parts[0].parse::<usize>().map_err(config_err)?;
    let cols = parts[1].parse::<usize>().map_err(config_err)?;
    if rows < 2 || cols < 2 {
        return Err(CliError::Config("fold counts must be at least 2".into()));
    }
    Ok(FoldScheme { rows, cols })
}

fn cmd_simulate(args: SimulateArgs, threads: usize) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.scenario.display())))?;
    let scenario = parse_scenario(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.scenario.display())))?;
    ensure_out_dir(&args.out)?;

    let mut manifest = RunManifest::new(
        "simulate",
        scenario.seed,
        threads,
        serde_json::to_value(&scenario).unwrap(),
    );
    manifest.input = Some(args.scenario.display().to_string());

    let t_run = Instant::now();
    let report = run_scenario(&scenario).map_err(|e| {
        manifest.status = e.to_string();
        let _ = manifest.write(&args.out);
        CliError::Algorithm(e.to_string())
    })?;
    manifest
        .timings_seconds
        .insert("run".into(), t_run.elapsed().as_secs_f64());

    // report.json holds the seed-determined metrics and is byte-identical
    // across runs and thread counts; wall-clock goes to timing.json.
    let path = write_file(&args.out, "report.json", &report.metrics_json())?;
    manifest.outputs.push(path.display().to_string());
    let path = write_file(&args.out, "timing.json", &report.timing_json())?;
    manifest.outputs.push(path.display().to_string());
    let table = render_table(&scenario, &report);
    let path = write_file(&args.out, "report.txt", &table)?;
    manifest.outputs.push(path.display().to_string());
    manifest.write(&args.out)?;

    print!("{table}");
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn render_table(scenario: &Scenario, report: &EvalReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    out.push_str(&format!(
        "scenario {} (n={} p={} rank={} d={:?} noise={} reps={} seed={})\n",
        scenario.name,
        scenario.n,
        scenario.p,
        scenario.rank,
        scenario.singular_values,
        scenario.noise,
        scenario.reps,
        scenario.seed
    ));
    out.push_str(&format!(
        "completed {}/{} repetitions ({} failed)\n\n",
        m.reps_completed, scenario.reps, m.reps_failed
    ));
    out.push_str(&format!(
        "{:<22} {:>12} {:>10} {:>12} {:>10}\n",
        "metric", "sparse med", "MAD", "svd med", "MAD"
    ));
    let mut row = |name: &str, a: &ssvd::MetricSummary, b: &ssvd::MetricSummary| {
        out.push_str(&format!(
            "{:<22} {:>12.4} {:>10.4} {:>12.4} {:>10.4}\n",
            name, a.median, a.mad, b.median, b.mad
        ));
    };
    row("L_space(U)", &m.sparse.space_loss_u, &m.svd_baseline.space_loss_u);
    row("L_space(V)", &m.sparse.space_loss_v, &m.svd_baseline.space_loss_v);
    row("L(Xi)", &m.sparse.recovery_loss, &m.svd_baseline.recovery_loss);
    row("||u_1||_0", &m.sparse.u_l0_first, &m.svd_baseline.u_l0_first);
    row("||v_1||_0", &m.sparse.v_l0_first, &m.svd_baseline.v_l0_first);
    row(
        "|supp(U)|",
        &m.sparse.u_joint_support,
        &m.svd_baseline.u_joint_support,
    );
    row(
        "|supp(V)|",
        &m.sparse.v_joint_support,
        &m.svd_baseline.v_joint_support,
    );
    out.push_str(&format!(
        "{:<22} {:>12.4} {:>10.4} {:>12} {:>10}\n",
        "time vs full SVD",
        report.timing.time_ratio.median,
        report.timing.time_ratio.mad,
        "1.0000",
        "-"
    ));
    out
}

fn cmd_signal(args: SignalArgs) -> Result<(), CliError> {
    let kind: SignalKind = args.name.parse().map_err(config_err)?;
    let signal = make_test_signal(kind, args.length).map_err(config_err)?;
    let values = if args.dwt {
        ssvd::dwt_symmlet8(&signal.values, ssvd::default_levels(args.length))
            .map_err(config_err)?
    } else {
        signal.values
    };
    let mut buf = Vec::new();
    write_vector_csv(&mut buf, &values).map_err(config_err)?;
    match args.out {
        None => {
            std::io::stdout().write_all(&buf).map_err(config_err)?;
        }
        Some(dir) => {
            ensure_out_dir(&dir)?;
            let name = if args.dwt {
                format!("{kind}_wc.csv")
            } else {
                format!("{kind}.csv")
            };
            let mut manifest = RunManifest::new(
                "signal",
                0,
                0,
                serde_json::json!({
                    "name": format!("{kind}"),
                    "length": args.length,
                    "dwt": args.dwt,
                }),
            );
            let path = write_file(&dir, &name, std::str::from_utf8(&buf).expect("ascii"))?;
            manifest.outputs.push(path.display().to_string());
            manifest.write(&dir)?;
            println!("wrote {}", dir.join(&name).display());
        }
    }
    Ok(())
}
