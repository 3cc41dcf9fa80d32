//! Command-line front end: Monte Carlo sweeps, denoiser characteristic
//! dumps, shrinkage tuning, the genie-aided ablation preset, and the
//! reference cross-checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dcs_core::harness::report::{emit_csv, emit_svg, DEFAULT_SER_FLOOR};
use dcs_core::harness::{
    run_curve, tune_ist_tau, Algorithm, AlgorithmEntry, EnsembleMode, ExperimentConfig, SerCurve,
};
use dcs_core::signal::SignalPrior;
use dcs_core::{estimators, verify};

/// Environment variable naming the default directory for emitted files.
const OUT_DIR_ENV: &str = "DCS_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "dcs",
    version,
    about = "Recovery of discrete-valued sparse vectors from noisy underdetermined measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured Monte Carlo sweep and emit a CSV (optionally SVG).
    Run(RunArgs),
    /// Dump soft-feedback characteristic curves over a grid of variances.
    Curves(CurvesArgs),
    /// Grid-search the soft-threshold shrinkage per noise level.
    TuneIst(TuneIstArgs),
    /// Compare plain recovery against genie-aided variants.
    Genie(GenieArgs),
    /// Cross-check the fast numerical paths against reference
    /// implementations.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Signal length L.
    #[arg(long)]
    l: Option<usize>,
    /// Measurement count K.
    #[arg(long)]
    k: Option<usize>,
    /// Nonzero symbols s.
    #[arg(long)]
    s: Option<usize>,
    /// Noise grid in dB, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    /// Trials per noise level.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; every trial seed derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (`# dcs-config v1` format); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeArgs,
    /// Algorithms to run, comma separated (see `dcs run --help-algorithms`).
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<String>,
    /// `fresh_per_trial` or `fixed`.
    #[arg(long)]
    ensemble_mode: Option<String>,
    /// Output CSV path; defaults to curve.csv under $DCS_OUT_DIR.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Optional SVG plot path.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Plot position for exact-zero rates.
    #[arg(long, default_value_t = DEFAULT_SER_FLOOR)]
    floor: f64,
    /// List the recognized algorithm labels and exit.
    #[arg(long)]
    help_algorithms: bool,
}

#[derive(Args)]
struct CurvesArgs {
    /// Signal length L of the prior.
    #[arg(long, default_value_t = 258)]
    l: usize,
    /// Nonzero symbols s of the prior.
    #[arg(long, default_value_t = 20)]
    s: usize,
    /// Error variances to trace, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.5, 1.0])]
    sigma_sq: Vec<f64>,
    /// Half-width of the input range; inputs sweep [-range, range].
    #[arg(long, default_value_t = 2.0)]
    range: f64,
    /// Samples per curve.
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Output CSV path; defaults to characteristics.csv under $DCS_OUT_DIR.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TuneIstArgs {
    /// Config file supplying the shape and grid.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeArgs,
    /// Optional file to write the table to, one `level:tau` per line plus a
    /// config-ready `ist_tau_table = ...` line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenieArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Output CSV path; defaults to genie.csv under $DCS_OUT_DIR.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Optional SVG plot path.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Plot position for exact-zero rates.
    #[arg(long, default_value_t = DEFAULT_SER_FLOOR)]
    floor: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seed for the randomized checks.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Curves(args) => cmd_curves(args),
        Command::TuneIst(args) => cmd_tune_ist(args),
        Command::Genie(args) => cmd_genie(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

/// Default location for an emitted file: explicit path, else $DCS_OUT_DIR,
/// else the working directory.
fn out_path(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(name),
        None => PathBuf::from(name),
    })
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}

/// Builds the experiment from an optional config file plus flag overrides.
fn assemble_config(
    config: Option<&Path>,
    shape: &ShapeArgs,
    algorithms: &[String],
    ensemble_mode: Option<&str>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => {
            let l = shape.l.context("--l is required without --config")?;
            let k = shape.k.context("--k is required without --config")?;
            let s = shape.s.context("--s is required without --config")?;
            let mut cfg = ExperimentConfig::new(
                l,
                k,
                s,
                ExperimentConfig::default_grid(),
                shape.trials.unwrap_or(2000),
                shape.seed.unwrap_or(1),
            );
            cfg.algorithms = ExperimentConfig::reference_experiment(0).algorithms;
            cfg
        }
    };
    if let Some(l) = shape.l {
        cfg.l = l;
    }
    if let Some(k) = shape.k {
        cfg.k = k;
    }
    if let Some(s) = shape.s {
        cfg.s = s;
    }
    if !shape.levels.is_empty() {
        cfg.noise_levels_db = shape.levels.clone();
    }
    if let Some(trials) = shape.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = shape.seed {
        cfg.master_seed = seed;
    }
    if !algorithms.is_empty() {
        cfg.algorithms = algorithms
            .iter()
            .map(|label| Algorithm::from_str(label).map(AlgorithmEntry::new))
            .collect::<dcs_core::Result<_>>()?;
    }
    if let Some(mode) = ensemble_mode {
        cfg.ensemble_mode = match mode {
            "fresh_per_trial" => EnsembleMode::FreshPerTrial,
            "fixed" => EnsembleMode::Fixed,
            other => bail!("unknown ensemble mode `{other}`"),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Fills the shrinkage table by tuning when the roster includes the
/// soft-threshold baseline but no shrinkage was configured.
fn ensure_ist_tau(cfg: &mut ExperimentConfig) -> anyhow::Result<()> {
    let needs_tau = cfg
        .algorithms
        .iter()
        .any(|e| e.algorithm == Algorithm::IstQ && e.config.ist_tau.is_none());
    if needs_tau && cfg.ist_tau_table.is_empty() {
        eprintln!("no shrinkage configured; tuning on held-out trials first");
        cfg.ist_tau_table = tune_ist_tau(cfg)?;
        for (db, tau) in &cfg.ist_tau_table {
            eprintln!("  {db} dB: tau = {tau}");
        }
    }
    Ok(())
}

fn print_curve(curve: &SerCurve) {
    println!(
        "{:<18} {:>8} {:>10} {:>12} {:>24} {:>9}",
        "algorithm", "dB", "errors", "ser", "95% interval", "diverged"
    );
    for p in &curve.points {
        println!(
            "{:<18} {:>8.1} {:>10} {:>12.4e} [{:>10.4e}, {:>10.4e}] {:>9}",
            p.algorithm, p.noise_db, p.errors, p.ser, p.ci_low, p.ci_high, p.diverged
        );
    }
}

fn emit_outputs(
    curve: &SerCurve,
    csv: PathBuf,
    svg: Option<PathBuf>,
    floor: f64,
) -> anyhow::Result<()> {
    ensure_parent(&csv)?;
    emit_csv(curve, &csv)?;
    println!("wrote {}", csv.display());
    if let Some(svg_path) = svg {
        ensure_parent(&svg_path)?;
        emit_svg(curve, &svg_path, floor)?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    if args.help_algorithms {
        for label in Algorithm::all_labels() {
            println!("{label}");
        }
        return Ok(());
    }
    let mut cfg = assemble_config(
        args.config.as_deref(),
        &args.shape,
        &args.algorithms,
        args.ensemble_mode.as_deref(),
    )?;
    ensure_ist_tau(&mut cfg)?;
    let curve = run_curve(&cfg)?;
    print_curve(&curve);
    let csv = args.csv.or_else(|| cfg.csv_path.clone());
    let svg = args.svg.or_else(|| cfg.svg_path.clone());
    emit_outputs(&curve, out_path(csv, "curve.csv"), svg, args.floor)
}

fn cmd_curves(args: CurvesArgs) -> anyhow::Result<()> {
    if args.points < 2 {
        bail!("--points must be at least 2");
    }
    if !(args.range.is_finite() && args.range > 0.0) {
        bail!("--range must be positive");
    }
    let prior = SignalPrior::ternary(args.l, args.s)?;
    let mut text = String::from("sigma_sq,x_tilde,x_hat,sigma_d_sq\n");
    for &sigma_sq in &args.sigma_sq {
        for i in 0..args.points {
            let x_tilde =
                -args.range + 2.0 * args.range * i as f64 / (args.points - 1) as f64;
            let (x_hat, sigma_d_sq) = estimators::soft_feedback(x_tilde, sigma_sq, &prior)?;
            let _ = writeln!(text, "{sigma_sq},{x_tilde},{x_hat},{sigma_d_sq}");
        }
    }
    let path = out_path(args.csv, "characteristics.csv");
    ensure_parent(&path)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_tune_ist(args: TuneIstArgs) -> anyhow::Result<()> {
    let cfg = assemble_config(args.config.as_deref(), &args.shape, &[], None)?;
    let table = tune_ist_tau(&cfg)?;
    let mut lines = String::new();
    for (db, tau) in &table {
        let _ = writeln!(lines, "{db}:{tau}");
    }
    let config_line = format!(
        "ist_tau_table = {}",
        table
            .iter()
            .map(|(db, tau)| format!("{db}:{tau}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    print!("{lines}");
    println!("{config_line}");
    if let Some(path) = args.out {
        ensure_parent(&path)?;
        std::fs::write(&path, format!("{lines}{config_line}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_genie(args: GenieArgs) -> anyhow::Result<()> {
    let mut cfg = assemble_config(None, &args.shape, &[], None)?;
    cfg.algorithms = [
        "ims_q",
        "ims_q_genie_ee",
        "ims_q_genie_dd",
        "ims_q_genie_both",
    ]
    .iter()
    .map(|label| Algorithm::from_str(label).map(AlgorithmEntry::new))
    .collect::<dcs_core::Result<_>>()?;
    let curve = run_curve(&cfg)?;
    print_curve(&curve);
    let csv = out_path(args.csv, "genie.csv");
    emit_outputs(&curve, csv, args.svg, args.floor)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<()> {
    let outcomes = verify::run_all(args.seed)?;
    let mut all_passed = true;
    for outcome in &outcomes {
        println!("{outcome}");
        all_passed &= outcome.passed();
    }
    if !all_passed {
        bail!("verification failed");
    }
    println!("all checks passed");
    Ok(())
}
