//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bandwidth::{cv_bandwidth, optimal_bandwidth_plugin, parse_h_grid, IntegrationGrid};
use crate::error::{Error, Result};
use crate::estimator::{fit_surface, SurfacePoint};
use crate::io::{read_dataset, read_targets, write_fits_to};
use crate::kernel::{kernel_moments, KernelFamily, KernelSpec, RadialKernel};
use crate::mlwe::{mlwe_fit_local_with, BandwidthMatrix, MlweOptions};
use crate::simlab::{compare_estimators, generate_field, run_simulation, write_csv_cells, SimulationScenario};
use crate::types::{validate_dataset, Dataset, FitConfig, ScaleMatrix};

#[derive(Parser, Debug)]
#[command(name = "gwle", version, about = "Geographically weighted locally linear estimation")]
struct Cli {
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "GWLE_THREADS")]
    threads: Option<usize>,
    /// Master seed; overrides the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the timestamp field from JSON reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit local coefficients at target locations.
    Fit(FitArgs),
    /// Select a bandwidth by cross-validation or the plug-in rule.
    Bandwidth(BandwidthArgs),
    /// Run a conditional Monte Carlo scenario.
    Simulate(SimArgs),
    /// Compare GWLE and MLWE variances across the lattice sweep.
    Compare(SimArgs),
    /// Kernel moment constants.
    Moments(MomentsArgs),
    /// Check a dataset against the lattice and record invariants.
    Validate(DataArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset CSV (columns i1..iM, u1..ud, x1..xp, y).
    #[arg(long)]
    data: PathBuf,
    /// JSON sidecar with intercept and lattice sizes (default: <data>.json if present).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Lattice sizes N1,...,NM (default: sidecar, else largest index per axis).
    #[arg(long, value_delimiter = ',')]
    lattice_sizes: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    Gwle,
    Mlwe,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Targets CSV with columns u1..ud, or "data" for the dataset locations.
    #[arg(long)]
    targets: String,
    #[arg(long, value_enum, default_value = "gwle")]
    estimator: Estimator,
    /// Bandwidth h (gwle).
    #[arg(long, required_if_eq("estimator", "gwle"))]
    h: Option<f64>,
    /// Per-dimension bandwidths h1,...,hd (mlwe).
    #[arg(long = "H", value_delimiter = ',', required_if_eq("estimator", "mlwe"))]
    bandwidths: Option<Vec<f64>>,
    /// Scale parameters a1,...,ad (default: all 1).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    /// Ridge factor for degenerate local designs (0 disables).
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, default_value_t = 0)]
    min_neighbors: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Cv,
    Plugin,
}

#[derive(Args, Debug)]
struct BandwidthArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Dataset for cross-validation.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Scenario: truth for the plug-in rule; for cv without --data, the
    /// first lattice of the scenario is generated and used.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Candidate grid lo:hi:n (cv).
    #[arg(long)]
    h_grid: Option<String>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Ñ for the plug-in rule (default: first lattice of the scenario).
    #[arg(long)]
    n_total: Option<usize>,
    /// Integration box lower corner (default: bounding box of eval points).
    #[arg(long, value_delimiter = ',')]
    grid_lo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_hi: Option<Vec<f64>>,
    /// Midpoint cells per axis.
    #[arg(long, default_value_t = 5)]
    grid_cells: usize,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override the replica count.
    #[arg(long)]
    replicas: Option<usize>,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one CSV row per (cell, eval point).
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    /// Dimension for the product constants κ and the radial normalization.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

struct Context {
    seed: Option<u64>,
    timestamp: bool,
}

fn long_version() -> &'static str {
    let s = format!(
        "{} ({}-{}, {} build)",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    );
    Box::leak(s.into_boxed_str())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    let matches = match Cli::command().long_version(long_version()).try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if code != 0 && json_errors {
                emit_json_error("usage", &e.to_string(), code);
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return report_error(
                &Error::InvalidParameter("--threads must be >= 1".into()),
                cli.json_errors,
            );
        }
        // A pool may already exist when run is called more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Context {
        seed: cli.seed,
        timestamp: !cli.no_timestamp,
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Bandwidth(a) => cmd_bandwidth(a, &ctx),
        Command::Simulate(a) => cmd_simulate(a, &ctx, false),
        Command::Compare(a) => cmd_simulate(a, &ctx, true),
        Command::Moments(a) => cmd_moments(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e, cli.json_errors),
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn emit_json_error(kind: &str, message: &str, code: i32) {
    let v = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{v}");
}

fn report_error(e: &Error, json_errors: bool) -> i32 {
    let code = exit_code(e);
    if json_errors {
        emit_json_error(e.kind(), &e.to_string(), code);
    } else {
        eprintln!("error: {e}");
    }
    code
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn guard_output(out: Option<&Path>, inputs: &[&Path]) -> Result<()> {
    if let Some(o) = out {
        for i in inputs {
            if o == *i || (o.exists() && i.exists() && std::fs::canonicalize(o)? == std::fs::canonicalize(i)?) {
                return Err(Error::InvalidParameter(format!(
                    "output {} would overwrite an input file",
                    o.display()
                )));
            }
        }
    }
    Ok(())
}

fn load_dataset(a: &DataArgs) -> Result<Dataset> {
    read_dataset(&a.data, a.meta.as_deref(), a.lattice_sizes.clone())
}

fn require_valid(ds: &Dataset) -> Result<()> {
    let report = validate_dataset(ds);
    if report.is_pass() {
        Ok(())
    } else {
        let list: Vec<String> = report.violations.iter().take(5).map(|v| v.to_string()).collect();
        Err(Error::InvalidDataset(format!(
            "{} violation(s): {}",
            report.violations.len(),
            list.join("; ")
        )))
    }
}

fn scales_or_identity(scales: Option<Vec<f64>>, d: usize) -> Result<ScaleMatrix> {
    match scales {
        Some(s) => {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "--scales",
                    expected: d,
                    found: s.len(),
                });
            }
            ScaleMatrix::new(s)
        }
        None => Ok(ScaleMatrix::identity(d)),
    }
}

fn cmd_fit(a: FitArgs) -> Result<i32> {
    guard_output(a.out.as_deref(), &[&a.data.data])?;
    let ds = load_dataset(&a.data)?;
    require_valid(&ds)?;
    let targets = if a.targets == "data" {
        ds.locations()
    } else {
        read_targets(Path::new(&a.targets), ds.d())?
    };
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target locations".into()));
    }
    let kernel = KernelSpec::new(a.kernel);
    let fits: Vec<SurfacePoint> = match a.estimator {
        Estimator::Gwle => {
            let h = a.h.ok_or_else(|| Error::InvalidParameter("--h is required".into()))?;
            let cfg = FitConfig::new(kernel, scales_or_identity(a.scales, ds.d())?, h)?
                .with_ridge(a.ridge)?
                .with_min_neighbors(a.min_neighbors);
            fit_surface(&ds, &targets, &cfg)?
        }
        Estimator::Mlwe => {
            let hm = BandwidthMatrix::new(a.bandwidths.unwrap_or_default())?;
            let y = ds.responses();
            let opts = MlweOptions {
                ridge_fallback: a.ridge,
                min_effective_neighbors: a.min_neighbors,
            };
            targets
                .par_iter()
                .enumerate()
                .map(|(target, u0)| SurfacePoint {
                    target,
                    result: mlwe_fit_local_with(&ds, &y, u0, &hm, kernel, opts),
                })
                .collect()
        }
    };
    let mut buf = Vec::new();
    write_fits_to(&mut buf, &targets, &fits, ds.p())?;
    write_output(a.out.as_deref(), &String::from_utf8(buf).expect("utf-8"))?;
    let failed: Vec<&SurfacePoint> = fits.iter().filter(|f| f.result.is_err()).collect();
    if let Some(first) = failed.first() {
        let e = first.result.as_ref().unwrap_err();
        eprintln!(
            "{} of {} targets failed; first (target {}): {e}",
            failed.len(),
            fits.len(),
            first.target
        );
        return Ok(
            if failed.iter().all(|f| f.result.as_ref().unwrap_err().is_numerical()) {
                2
            } else {
                1
            },
        );
    }
    Ok(0)
}

fn load_scenario(path: &Path, ctx: &Context) -> Result<SimulationScenario> {
    let mut s = SimulationScenario::from_path(path)?;
    if let Some(seed) = ctx.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn to_json<T: Serialize>(kind: &str, body: &T, ctx: &Context) -> Result<String> {
    let mut v = json!({
        "kind": kind,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if ctx.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        v["timestamp"] = Value::from(secs);
    }
    v["report"] = serde_json::to_value(body)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn cmd_bandwidth(a: BandwidthArgs, ctx: &Context) -> Result<i32> {
    let inputs: Vec<&Path> = a.data.iter().chain(a.scenario.iter()).map(|p| p.as_path()).collect();
    guard_output(a.out.as_deref(), &inputs)?;
    let scenario = a.scenario.as_deref().map(|p| load_scenario(p, ctx)).transpose()?;
    let kernel = KernelSpec::new(
        a.kernel
            .or_else(|| scenario.as_ref().map(|s| s.kernel.family))
            .unwrap_or_default(),
    );
    let body = match a.method {
        Method::Cv => {
            let grid_spec = a
                .h_grid
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("cv needs --h-grid lo:hi:n".into()))?;
            let grid = parse_h_grid(grid_spec)?;
            let ds = match (&a.data, &scenario) {
                (Some(path), _) => read_dataset(path, a.meta.as_deref(), None)?,
                (None, Some(s)) => generate_field(s, 0)?.0,
                (None, None) => return Err(Error::InvalidParameter("cv needs --data or --scenario".into())),
            };
            require_valid(&ds)?;
            let scales = match (&a.scales, &scenario) {
                (None, Some(s)) => s.scale_matrix(),
                _ => scales_or_identity(a.scales.clone(), ds.d())?,
            };
            let template = FitConfig::new(kernel, scales, grid[0])?.with_ridge(a.ridge)?;
            let res = cv_bandwidth(&ds, &template, &grid)?;
            json!({ "method": "cv", "h": res.h, "grid": res.grid, "scores": res.scores })
        }
        Method::Plugin => {
            let s = scenario
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("plugin needs --scenario".into()))?;
            let d = s.d();
            let scales = match &a.scales {
                Some(_) => scales_or_identity(a.scales.clone(), d)?,
                None => s.scale_matrix(),
            };
            let n_total = a.n_total.unwrap_or_else(|| s.n_total(0));
            let bbox = |pick: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
                (0..d)
                    .map(|k| s.eval_points.iter().map(|u| u[k]).fold(init, pick))
                    .collect()
            };
            let lo = a.grid_lo.clone().unwrap_or_else(|| bbox(f64::min, f64::INFINITY));
            let hi = a.grid_hi.clone().unwrap_or_else(|| bbox(f64::max, f64::NEG_INFINITY));
            let grid = IntegrationGrid::midpoint(&lo, &hi, &vec![a.grid_cells; d])?;
            let h = optimal_bandwidth_plugin(&s.truth, &scales, kernel, n_total, &grid)?;
            json!({ "method": "plugin", "h": h, "n_total": n_total, "grid_lo": lo, "grid_hi": hi, "grid_cells": a.grid_cells })
        }
    };
    write_output(a.out.as_deref(), &to_json("bandwidth", &body, ctx)?)?;
    Ok(0)
}

fn cmd_simulate(a: SimArgs, ctx: &Context, compare: bool) -> Result<i32> {
    let inputs = [a.scenario.as_path()];
    guard_output(a.out.as_deref(), &inputs)?;
    guard_output(a.emit_csv.as_deref(), &inputs)?;
    let mut s = load_scenario(&a.scenario, ctx)?;
    if let Some(r) = a.replicas {
        s.replicas = r;
        s.validate()?;
    }
    let (text, cells) = if compare {
        let rep = compare_estimators(&s)?;
        (to_json("compare", &rep, ctx)?, rep.cells)
    } else {
        let rep = run_simulation(&s)?;
        (to_json("simulate", &rep, ctx)?, rep.cells)
    };
    write_output(a.out.as_deref(), &text)?;
    if let Some(path) = &a.emit_csv {
        write_csv_cells(path, &cells)?;
    }
    Ok(0)
}

fn cmd_moments(a: MomentsArgs) -> Result<i32> {
    if a.dim == 0 {
        return Err(Error::InvalidParameter("--dim must be >= 1".into()));
    }
    let kernel = KernelSpec::new(a.kernel);
    let m = kernel_moments(kernel)?;
    let radial = RadialKernel::new(kernel, a.dim)?;
    let body = json!({
        "kernel": kernel.to_string(),
        "dim": a.dim,
        "kappa0": m.kappa(0),
        "kappa1": m.kappa(1),
        "kappa2": m.kappa(2),
        "kappa3": m.kappa(3),
        "kappa4": m.kappa(4),
        "int_k_squared": m.kappa_sq_1d,
        "kappa": m.kappa_d(a.dim),
        "radial_normalization": radial.normalization(),
    });
    write_output(None, &(serde_json::to_string_pretty(&body)? + "\n"))?;
    Ok(0)
}

fn cmd_validate(a: DataArgs) -> Result<i32> {
    let ds = load_dataset(&a)?;
    let report = validate_dataset(&ds);
    let body = json!({
        "pass": report.is_pass(),
        "n_total": ds.n_total(),
        "records": ds.len(),
        "violations": report.violations,
        "warnings": report.warnings,
    });
    write_output(None, &(serde_json::to_string_pretty(&body)? + "\n"))?;
    Ok(if report.is_pass() { 0 } else { 1 })
}
