//! `heston`: simulate Heston paths, estimate drift parameters and run the
//! limit-theorem experiments.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heston_core::estimator::prepare_stats;
use heston_core::experiment::run_experiment;
use heston_core::rng::domain;
use heston_core::{
    derive_stream, diffusion_matrix_estimate, mle, simulate_heston_path, DyOverYMode, Error, EstimateOptions,
    ExperimentConfig, ExperimentKind, PathGrid, Quadrature,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "heston",
    version,
    about = "Heston model simulation and drift estimation"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write it as `t,y,x` CSV.
    Simulate(SimulateArgs),
    /// Estimate drift and diffusion parameters from a path CSV.
    Estimate(EstimateArgs),
    /// Check that estimates concentrate around the true parameters.
    Consistency(RunArgs),
    /// Subcritical central limit theorem with deterministic scaling.
    Clt(RunArgs),
    /// Subcritical central limit theorem with random scaling.
    RandomScalingClt(RunArgs),
    /// Critical regime (b = 0) limit law.
    CriticalLimit(RunArgs),
    /// Supercritical regime (b < 0) limit law.
    SupercriticalLimit(RunArgs),
    /// Recover sigma1, sigma2 and rho from quadratic variation.
    DiffusionRecovery(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with `horizon`, `dt` and a `[params]` table.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadratureArg {
    LeftPoint,
    Trapezoid,
}

#[derive(Args)]
struct EstimateArgs {
    /// Path CSV with header `t,y,x`.
    input: PathBuf,
    /// Replace the Ito sum of dY/Y by the log identity with this sigma1.
    #[arg(long)]
    log_identity_sigma1: Option<f64>,
    #[arg(long, value_enum, default_value = "left-point")]
    quadrature: QuadratureArg,
    /// Output JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON (overrides `output` in the config; stdout if neither).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-replicate estimates as CSV.
    #[arg(long)]
    estimates: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter { .. } | Error::Regime { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path, kind: ExperimentKind, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_toml_str(&text, Some(kind))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                Failure::Usage(format!("cannot create {}: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Result<bool, Failure> {
    let config = load_config(&args.config, ExperimentKind::Consistency, args.seed)?;
    // The same stream replicate 0 of an experiment with this seed uses.
    let mut rng = derive_stream(config.seed, domain::PATHS, 0);
    let path = simulate_heston_path(&config.params, config.n_steps(), config.dt, &mut rng)?;
    let mut out = sink(args.out.as_deref())?;
    path.write_csv(&mut out)?;
    out.flush()?;
    Ok(true)
}

fn estimate(args: EstimateArgs) -> Result<bool, Failure> {
    let file = File::open(&args.input)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.input.display())))?;
    let path = PathGrid::read_csv(BufReader::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
    let options = EstimateOptions {
        dy_over_y: match args.log_identity_sigma1 {
            Some(sigma1) => DyOverYMode::LogIdentity { sigma1 },
            None => DyOverYMode::RawSum,
        },
        quadrature: match args.quadrature {
            QuadratureArg::LeftPoint => Quadrature::LeftPoint,
            QuadratureArg::Trapezoid => Quadrature::Trapezoid,
        },
    };
    let stats = prepare_stats(&path, &options)?;
    let mut estimate = mle(&stats)?;
    estimate.used_log_identity = matches!(options.dy_over_y, DyOverYMode::LogIdentity { .. });
    let diffusion = diffusion_matrix_estimate(&path)?;
    let mut warnings = Vec::new();
    let threshold = 0.5 * diffusion.sigma1_hat * diffusion.sigma1_hat;
    if estimate.a_hat < threshold {
        warnings.push(format!(
            "a_hat = {:.4} is below sigma1_hat^2 / 2 = {threshold:.4}; the estimator's limit theory assumes otherwise",
            estimate.a_hat
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = json!({
        "estimate": estimate,
        "diffusion": diffusion,
        "stats": stats,
        "steps": path.steps(),
        "dt": path.dt(),
        "min_y": path.min_y(),
        "warnings": warnings,
    });
    let mut out = sink(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(true)
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, Failure> {
    let config = load_config(&args.config, kind, args.seed)?;
    let start = Instant::now();
    let report = run_experiment(&config)?;
    eprintln!(
        "{} replicates in {:.1}s",
        report.replicates,
        start.elapsed().as_secs_f64()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.criteria {
        eprintln!(
            "[{}] {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let target = args.out.or_else(|| config.output.clone());
    let mut out = sink(target.as_deref())?;
    writeln!(out, "{}", report.to_json()?)?;
    out.flush()?;
    if let Some(path) = args.estimates {
        let file = File::create(&path)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?;
        report.write_estimates_csv(BufWriter::new(file))?;
    }
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Consistency(a) => run(ExperimentKind::Consistency, a),
        Command::Clt(a) => run(ExperimentKind::Clt, a),
        Command::RandomScalingClt(a) => run(ExperimentKind::RandomScalingClt, a),
        Command::CriticalLimit(a) => run(ExperimentKind::CriticalLimit, a),
        Command::SupercriticalLimit(a) => run(ExperimentKind::SupercriticalLimit, a),
        Command::DiffusionRecovery(a) => run(ExperimentKind::DiffusionRecovery, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
