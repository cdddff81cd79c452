//! `mipt`: sweeps, steady-state statistics, scaling fits and checks for
//! monitored Clifford+T circuits.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mipt_core::analysis::{self, AnalysisReport, CriticalPoint, FTestRow, FitRow};
use mipt_core::circuit::EngineKind;
use mipt_core::ensemble::{
    self, AggregateRow, Quantity, SweepConfig, SweepGrid, AGGREGATE_FILE, MANIFEST_FILE, RAW_FILE,
};
use mipt_core::mps::TruncationPolicy;
use mipt_core::verify::{self, Level};
use serde::Serialize;

use config::{resolve_workers, RunConfig};

/// Marks an error as caused by bad user input (exit code 2).
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

impl From<serde_json::Error> for InvalidInput {
    fn from(e: serde_json::Error) -> Self {
        InvalidInput(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "mipt", version, about = "Monitored Clifford+T circuit sweeps and analysis")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "MIPT_WORKERS")]
    workers: Option<usize>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute and overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured sweep and write raw.csv and aggregate.csv.
    Run,
    /// Recompute aggregate.csv from a raw file.
    Stats {
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Fit all scaling laws, form the ln F series and extract critical rates.
    Fit {
        #[arg(long)]
        aggregate: Option<PathBuf>,
        #[arg(long)]
        quantity: Option<Quantity>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Critical rates from an existing f_test.json.
    Critical {
        #[arg(long)]
        f_test: Option<PathBuf>,
        #[arg(long)]
        quantity: Option<Quantity>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Compare the separable-model prediction with single-site simulations.
    Separable {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5, 0.7])]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [32])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        trajectories: usize,
        #[arg(long, default_value_t = mipt_core::magic::DEFAULT_MAGIC_SAMPLES)]
        magic_samples: usize,
    },
    /// Cross-engine consistency checks.
    Verify {
        #[arg(long, default_value = "fast")]
        level: Level,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|cause| {
        cause.is::<InvalidInput>()
            || matches!(
                cause.downcast_ref::<mipt_core::Error>(),
                Some(
                    mipt_core::Error::InvalidParam { .. }
                        | mipt_core::Error::Json(_)
                        | mipt_core::Error::Csv(_)
                        | mipt_core::Error::Fit(_)
                        | mipt_core::Error::TooFewSamples { .. }
                )
            )
    });
    if invalid {
        2
    } else {
        1
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    let file_cfg = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let out = cli
        .out
        .clone()
        .or_else(|| file_cfg.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let workers = resolve_workers(cli.workers, file_cfg.as_ref().and_then(|c| c.workers))?;
    let seed = cli.seed.or_else(|| file_cfg.as_ref().map(|c| c.master_seed)).unwrap_or(0);
    match &cli.command {
        Command::Run => {
            let Some(mut cfg) = file_cfg else {
                return Err(InvalidInput("`run` needs --config".into()).into());
            };
            cfg.master_seed = seed;
            cmd_run(&cfg.sweep(), workers, &out, cli.force)
        }
        Command::Stats { raw } => {
            let raw = raw.clone().unwrap_or_else(|| out.join(RAW_FILE));
            cmd_stats(&raw, &out, cli.force)
        }
        Command::Fit {
            aggregate,
            quantity,
            eta,
        } => {
            let agg = aggregate.clone().unwrap_or_else(|| out.join(AGGREGATE_FILE));
            cmd_fit(&agg, *quantity, *eta, &out, cli.force)
        }
        Command::Critical { f_test, quantity, eta } => {
            let path = f_test.clone().unwrap_or_else(|| out.join("f_test.json"));
            cmd_critical(&path, *quantity, *eta, &out, cli.force)
        }
        Command::Separable {
            eta,
            beta,
            p,
            n,
            trajectories,
            magic_samples,
        } => {
            let cfg = SweepConfig {
                grid: SweepGrid {
                    eta_values: vec![*eta],
                    p_values: p.clone(),
                    n_values: n.clone(),
                    beta: *beta,
                    n_trajectories: *trajectories,
                    exclusions: Vec::new(),
                },
                engine: EngineKind::Mps,
                truncation: TruncationPolicy::default(),
                magic_samples: *magic_samples,
                master_seed: seed,
                brickwork: false,
                step_order: Default::default(),
            };
            cmd_separable(&cfg, workers, &out, cli.force)
        }
        Command::Verify { level } => cmd_verify(*level, seed),
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn remove_if_exists(path: &Path) -> anyhow::Result<()> {
    let res = if path.is_dir() {
        fs::remove_dir_all(path)
    } else {
        fs::remove_file(path)
    };
    match res {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(e).with_context(|| format!("removing {}", path.display()))
        }
        _ => Ok(()),
    }
}

fn clear_sweep(dir: &Path) -> anyhow::Result<()> {
    for name in [MANIFEST_FILE, RAW_FILE, AGGREGATE_FILE, "points"] {
        remove_if_exists(&dir.join(name))?;
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// True when every listed output exists and `--force` was not given.
fn up_to_date(paths: &[PathBuf], force: bool) -> bool {
    if !force && paths.iter().all(|p| p.exists()) {
        println!(
            "outputs exist, nothing to do (use --force to recompute): {}",
            paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        );
        return true;
    }
    false
}

fn print_aggregate(rows: &[AggregateRow]) {
    println!("{:>6} {:>6} {:>5} {:>5} {:>13} {:>12} {:>10}", "eta", "p", "beta", "N", "quantity", "mean", "raw_std");
    for r in rows {
        match (r.mean, r.raw_std) {
            (Some(m), Some(s)) => println!(
                "{:>6} {:>6} {:>5} {:>5} {:>13} {:>12.6} {:>10.6}",
                r.eta, r.p, r.beta, r.n, r.quantity, m, s
            ),
            _ => println!("{:>6} {:>6} {:>5} {:>5} {:>13} {:>12} {:>10}", r.eta, r.p, r.beta, r.n, r.quantity, "absent", ""),
        }
    }
}

fn cmd_run(cfg: &SweepConfig, workers: usize, out: &Path, force: bool) -> anyhow::Result<ExitCode> {
    cfg.validate()?;
    ensure_dir(out)?;
    if force {
        clear_sweep(out)?;
    }
    let outcome = ensemble::run_sweep(cfg, workers, Some(out))?;
    let rows = ensemble::aggregate(cfg, &outcome)?;
    ensemble::write_aggregate_csv(&out.join(AGGREGATE_FILE), &rows)?;
    print_aggregate(&rows);
    println!(
        "{} points ({} resumed), {} excluded, {} failed; wrote {}",
        outcome.points.len(),
        outcome.resumed,
        outcome.excluded.len(),
        outcome.failures.len(),
        out.display()
    );
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("failed: eta={} p={} N={}: {}", f.key.eta, f.key.p, f.key.n, f.error);
        }
        bail!("{} grid points failed", outcome.failures.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(raw: &Path, out: &Path, force: bool) -> anyhow::Result<ExitCode> {
    let target = out.join(AGGREGATE_FILE);
    if up_to_date(std::slice::from_ref(&target), force) {
        return Ok(ExitCode::SUCCESS);
    }
    let records = ensemble::read_raw_csv(raw)?;
    let mut rows = Vec::new();
    for (key, recs) in ensemble::group_by_point(records) {
        let stats = ensemble::steady_state_stats(&recs)
            .with_context(|| format!("eta={} p={} N={}", key.eta, key.p, key.n))?;
        rows.extend(AggregateRow::from_stats(&stats));
    }
    ensure_dir(out)?;
    ensemble::write_aggregate_csv(&target, &rows)?;
    print_aggregate(&rows);
    Ok(ExitCode::SUCCESS)
}

fn slices(
    pairs: impl Iterator<Item = (Quantity, f64)>,
    quantity: Option<Quantity>,
    eta: Option<f64>,
) -> Vec<(Quantity, f64)> {
    let mut out: Vec<(Quantity, f64)> = Vec::new();
    for (q, e) in pairs {
        let wanted = quantity.is_none_or(|x| x == q) && eta.is_none_or(|x| x.to_bits() == e.to_bits());
        if wanted && !out.iter().any(|&(q2, e2)| q2 == q && e2.to_bits() == e.to_bits()) {
            out.push((q, e));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

fn print_critical(c: &CriticalPoint) {
    println!(
        "{} eta={}: p_c = {:.4} ± {:.4} (sigma_A {:.4}{}, sigma_B {:.4})",
        c.quantity,
        c.eta,
        c.p_c,
        c.sigma,
        c.sigma_a,
        if c.boundary_capped { ", capped at scan boundary" } else { "" },
        c.sigma_b
    );
}

fn cmd_fit(
    aggregate: &Path,
    quantity: Option<Quantity>,
    eta: Option<f64>,
    out: &Path,
    force: bool,
) -> anyhow::Result<ExitCode> {
    let targets = ["fits.json", "f_test.json", "critical.json"].map(|f| out.join(f));
    if up_to_date(&targets, force) {
        return Ok(ExitCode::SUCCESS);
    }
    let rows = ensemble::read_aggregate_csv(aggregate)?;
    let cells = slices(rows.iter().map(|r| (r.quantity, r.eta)), quantity, eta);
    if cells.is_empty() {
        return Err(InvalidInput(format!("no matching rows in {}", aggregate.display())).into());
    }
    let mut fits: Vec<FitRow> = Vec::new();
    let mut f_test: Vec<FTestRow> = Vec::new();
    let mut critical: Vec<CriticalPoint> = Vec::new();
    let mut missing = Vec::new();
    for (q, e) in cells {
        let AnalysisReport {
            fits: f,
            f_test: ft,
            critical: c,
            critical_error,
        } = analysis::analyze(&rows, q, e)?;
        fits.extend(f);
        f_test.extend(ft);
        match c {
            Some(c) => {
                print_critical(&c);
                critical.push(c);
            }
            None => {
                let why = critical_error.unwrap_or_default();
                println!("{q} eta={e}: {why}");
                missing.push(format!("{q} eta={e}: {why}"));
            }
        }
    }
    ensure_dir(out)?;
    write_json(&targets[0], &fits)?;
    write_json(&targets[1], &f_test)?;
    write_json(&targets[2], &critical)?;
    if !missing.is_empty() {
        bail!("no critical point for {}", missing.join("; "));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_critical(
    path: &Path,
    quantity: Option<Quantity>,
    eta: Option<f64>,
    out: &Path,
    force: bool,
) -> anyhow::Result<ExitCode> {
    let target = out.join("critical.json");
    if up_to_date(std::slice::from_ref(&target), force) {
        return Ok(ExitCode::SUCCESS);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<FTestRow> = serde_json::from_str(&text).map_err(InvalidInput::from)?;
    let mut critical = Vec::new();
    let mut failed = Vec::new();
    for (q, e) in slices(rows.iter().map(|r| (r.quantity, r.eta)), quantity, eta) {
        let mut cell: Vec<&FTestRow> = rows
            .iter()
            .filter(|r| r.quantity == q && r.eta.to_bits() == e.to_bits())
            .collect();
        cell.sort_by(|a, b| a.p.total_cmp(&b.p));
        let series: Vec<(f64, f64)> = cell.iter().map(|r| (r.p, r.ln_f)).collect();
        let restricted: Vec<(f64, f64)> = cell.iter().map(|r| (r.p, r.ln_f_restricted)).collect();
        match analysis::critical_rate(&series, &restricted, q, e) {
            Ok(c) => {
                print_critical(&c);
                critical.push(c);
            }
            Err(err) => {
                println!("{q} eta={e}: {err}");
                failed.push(format!("{q} eta={e}"));
            }
        }
    }
    ensure_dir(out)?;
    write_json(&target, &critical)?;
    if !failed.is_empty() {
        bail!("no transition in scanned range for {}", failed.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SeparableRow {
    eta: f64,
    p: f64,
    beta: f64,
    #[serde(rename = "N")]
    n: usize,
    prediction: f64,
    mean: f64,
    error: f64,
    pull: f64,
    n_traj: usize,
}

fn cmd_separable(cfg: &SweepConfig, workers: usize, out: &Path, force: bool) -> anyhow::Result<ExitCode> {
    let target = out.join("separable.json");
    if up_to_date(std::slice::from_ref(&target), force) {
        return Ok(ExitCode::SUCCESS);
    }
    cfg.validate()?;
    for &p in &cfg.grid.p_values {
        analysis::separable_prediction(cfg.grid.eta_values[0], p, cfg.grid.beta, 1)?;
    }
    let dir = out.join("separable");
    ensure_dir(&dir)?;
    if force {
        clear_sweep(&dir)?;
    }
    let outcome = ensemble::run_sweep(cfg, workers, Some(&dir))?;
    if let Some(f) = outcome.failures.first() {
        bail!("eta={} p={} N={}: {}", f.key.eta, f.key.p, f.key.n, f.error);
    }
    println!("{:>6} {:>5} {:>11} {:>11} {:>9} {:>7}", "p", "N", "prediction", "simulation", "error", "pull");
    let mut table = Vec::new();
    for (key, recs) in &outcome.points {
        let stats = ensemble::steady_state_stats(recs)?;
        let magic = stats.magic.context("magic missing from separable run")?;
        let prediction = analysis::separable_prediction(key.eta, key.p, key.beta, key.n)?;
        let pull = (magic.mean - prediction) / magic.rescaled_std;
        println!(
            "{:>6} {:>5} {:>11.6} {:>11.6} {:>9.6} {:>7.2}",
            key.p, key.n, prediction, magic.mean, magic.rescaled_std, pull
        );
        table.push(SeparableRow {
            eta: key.eta,
            p: key.p,
            beta: key.beta,
            n: key.n,
            prediction,
            mean: magic.mean,
            error: magic.rescaled_std,
            pull,
            n_traj: stats.n_traj,
        });
    }
    write_json(&target, &table)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(level: Level, seed: u64) -> anyhow::Result<ExitCode> {
    let results = verify::run(level, seed)?;
    let mut ok = true;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
