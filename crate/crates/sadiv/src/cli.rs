//! Command-line front end: parse one JSON run configuration, dispatch a
//! workflow, write machine-readable outputs.
//!
//! Subcommands:
//!
//! - `solve` — solve the variational inequality and export the value
//!   surface (CSV), the candidate free boundary (CSV), and the residual
//!   report (JSON).
//! - `simulate` — Monte Carlo policy evaluation at each probe point
//!   (JSON estimates; `--trace` additionally dumps the first path's events
//!   per probe as CSV).
//! - `verify` — solve, then run the structural check suite (plus the
//!   dynamic programming cross-check when an `mc` block is present); exit 1
//!   if any check fails.
//! - `bounds` — print the analytic envelope quantities at one probe point;
//!   pure, no files.
//!
//! Exit codes: `0` success, `1` property-check failure, `2` numerical guard
//! (CFL violation, non-finite values), `64` usage or configuration errors.
//!
//! Outputs are deterministic: re-running a subcommand with the same config
//! and seed reproduces byte-identical files, independent of `--threads`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjbgrid::{
    distance_to_boundary, extract_free_boundary, residual_check, residual_field, solve_vi, subsolution_bound,
    supersolution_bound, AnalyticBounds, GridSpec, ValueField,
};
use crate::model::{ClaimDistribution, HazardFunction, ModelParams};
use crate::montecarlo::{estimate_value, path_seed, EstimateWithCI};
use crate::paths::{simulate_path, BarrierLevel, Strategy};
use crate::verify::{dpp_cross_check, run_grid_checks, ProbePoint};

/// Slope-activity tolerance used when exporting the candidate free
/// boundary: the projection makes the constraint exact, so detection only
/// needs to absorb floating-point noise.
pub const FREE_BOUNDARY_TOL: f64 = 1e-9;

// ======================================================================
// Run configuration
// ======================================================================

/// The model block: problem constants plus the hazard and claim laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    /// Problem constants (premium, discount, horizon, hazard bound,
    /// validation mode), inlined into the same JSON object.
    #[serde(flatten)]
    pub params: ModelParams,
    /// Interarrival hazard `λ(w)`.
    pub hazard: HazardFunction,
    /// Claim-size law `G`.
    pub claims: ClaimDistribution,
}

impl ModelBlock {
    /// Validate the constants and both laws together.
    pub fn validated(&self) -> Result<(ModelParams, &HazardFunction, &ClaimDistribution)> {
        self.params.validate()?;
        self.hazard.validate(&self.params)?;
        self.claims.validate()?;
        Ok((self.params, &self.hazard, &self.claims))
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    /// Number of simulated paths per estimate (≥ 2).
    pub n_paths: u64,
    /// Master seed; every path derives its own stream from it.
    pub seed: u64,
    /// Dynamic-programming check step `h` (must be a multiple of Δ);
    /// defaults to evaluating each probe all the way to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpp_step: Option<f64>,
    /// Extra slack granted to the best family member in the dynamic
    /// programming check (the family is finite, so it may not attain the
    /// supremum); defaults to twice the scheme tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_slack: Option<f64>,
}

/// Output file names, resolved relative to `--out-dir` unless absolute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Value-surface CSV (default `surface.csv`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<PathBuf>,
    /// Free-boundary CSV (default `free_boundary.csv`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_boundary: Option<PathBuf>,
    /// Residual-report JSON (default `residual.json`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<PathBuf>,
    /// Estimates JSON (default `estimates.json`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<PathBuf>,
    /// Property-report JSON (default `report.json`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// One parsed run configuration (a single JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model constants, hazard, and claim law.
    pub model: ModelBlock,
    /// Grid block; required by `solve` and `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Monte Carlo block; required by `simulate`, enables the dynamic
    /// programming check in `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McBlock>,
    /// Strategy to evaluate in `simulate` (also joined into the `verify`
    /// strategy family).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    /// Probe points `(s, x, w)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbePoint>,
    /// Tolerance the `verify` suite is judged at; defaults to the solved
    /// field's scheme tolerance `5(Δ + Δx)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Output file names.
    #[serde(default)]
    pub output: OutputBlock,
}

/// Read and parse a run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ======================================================================
// Command-line surface
// ======================================================================

/// Top-level argument parser.
#[derive(Debug, Parser)]
#[command(
    name = "sadiv",
    version,
    about = "Finite-horizon singular dividend toolkit for renewal risk models: \
             HJB variational-inequality solver, path simulator, and structural checks"
)]
pub struct Cli {
    /// Which workflow to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Arguments shared by the file-producing subcommands.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Size of the worker thread pool (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// `simulate`-specific arguments.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Common arguments.
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also dump the first simulated path per probe as an event CSV.
    #[arg(long)]
    pub trace: bool,
}

/// `bounds`-specific arguments.
#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Path to the JSON run configuration (only the model block is used).
    #[arg(long)]
    pub config: PathBuf,
    /// Probe point as `s,x,w`.
    #[arg(long)]
    pub probe: String,
}

/// The subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the variational inequality and export surface/boundary/residual.
    Solve(CommonArgs),
    /// Monte Carlo policy evaluation at the configured probes.
    Simulate(SimulateArgs),
    /// Solve, then run the structural check suite (exit 1 on any failure).
    Verify(CommonArgs),
    /// Print the analytic envelope quantities at one probe point.
    Bounds(BoundsArgs),
}

/// Dispatch a parsed command line. Returns the process exit code for
/// completed runs (0, or 1 for a failed verification); errors carry their
/// own exit codes (2 for numerical guards, 64 otherwise).
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            configure_threads(args.threads);
            run_solve(&load_config(&args.config)?, &args.out_dir)
        }
        Command::Simulate(args) => {
            configure_threads(args.common.threads);
            run_simulate(&load_config(&args.common.config)?, &args.common.out_dir, args.trace)
        }
        Command::Verify(args) => {
            configure_threads(args.threads);
            run_verify(&load_config(&args.config)?, &args.out_dir)
        }
        Command::Bounds(args) => run_bounds(&load_config(&args.config)?, &args.probe),
    }
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            // Results are thread-count independent; a pool that was already
            // configured only affects speed, so report and continue.
            eprintln!("note: could not resize the thread pool: {e}");
        }
    }
}

// ======================================================================
// solve
// ======================================================================

fn resolve(out_dir: &Path, chosen: &Option<PathBuf>, default_name: &str) -> PathBuf {
    let name = chosen.clone().unwrap_or_else(|| PathBuf::from(default_name));
    if name.is_absolute() {
        name
    } else {
        out_dir.join(name)
    }
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = create_file(path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

/// Write the full value surface with its envelopes and per-node residuals.
/// Columns: `s,x,w,V,Vbar,Vunder,residual`; the residual field is empty
/// where it is undefined (terminal slice, truncation column).
fn write_surface_csv(
    path: &Path,
    field: &ValueField,
    residuals: &[Vec<f64>],
    params: &ModelParams,
    bounds: &AnalyticBounds,
) -> Result<()> {
    let mut file = create_file(path)?;
    writeln!(file, "s,x,w,V,Vbar,Vunder,residual")?;
    let width = field.n_x + 1;
    for (i, residual_slice) in residuals.iter().enumerate() {
        let s = field.s_at(i).min(params.horizon);
        for k in 0..=i {
            let w = field.w_at(k).min(s);
            for j in 0..=field.n_x {
                let x = field.x_at(j);
                let upper = supersolution_bound(s, x, w, bounds)?;
                let lower = subsolution_bound(s, x, w, bounds)?;
                let r = residual_slice[k * width + j];
                write!(file, "{s},{x},{w},{},{upper},{lower},", field.value(i, j, k))?;
                if r.is_nan() {
                    writeln!(file)?;
                } else {
                    writeln!(file, "{r}")?;
                }
            }
        }
    }
    file.flush()?;
    Ok(())
}

fn write_free_boundary_csv(path: &Path, field: &ValueField) -> Result<()> {
    let mut file = create_file(path)?;
    writeln!(file, "s,w,b")?;
    for point in extract_free_boundary(field, FREE_BOUNDARY_TOL) {
        writeln!(file, "{},{},{}", point.s, point.w, point.b)?;
    }
    file.flush()?;
    Ok(())
}

fn run_solve(config: &RunConfig, out_dir: &Path) -> Result<i32> {
    let (params, hazard, claims) = config.model.validated()?;
    let spec = config
        .grid
        .ok_or_else(|| Error::Config("solve needs a grid block in the config".into()))?;
    let field = solve_vi(&spec, &params, hazard, claims)?;
    let residuals = residual_field(&field, &params, hazard, claims)?;
    let report = residual_check(&field, &params, hazard, claims)?;
    let bounds = AnalyticBounds::new(&params);

    let surface_path = resolve(out_dir, &config.output.surface, "surface.csv");
    let boundary_path = resolve(out_dir, &config.output.free_boundary, "free_boundary.csv");
    let residual_path = resolve(out_dir, &config.output.residual, "residual.json");
    write_surface_csv(&surface_path, &field, &residuals, &params, &bounds)?;
    write_free_boundary_csv(&boundary_path, &field)?;
    write_json(&residual_path, &report)?;

    println!(
        "solved {} slices x {} surplus levels (dt = {}, dx = {})",
        field.n_s + 1,
        field.n_x + 1,
        field.ds,
        field.dx
    );
    println!(
        "max residual {:.6e} at (s = {:.4}, x = {:.4}, w = {:.4}); signed max {:.6e}",
        report.max_abs_residual,
        report.at_max_abs.s,
        report.at_max_abs.x,
        report.at_max_abs.w,
        report.max_signed_residual
    );
    println!(
        "wrote {}, {}, {}",
        surface_path.display(),
        boundary_path.display(),
        residual_path.display()
    );
    Ok(0)
}

// ======================================================================
// simulate
// ======================================================================

/// One probe's estimate as emitted to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    /// The evaluated point.
    pub point: ProbePoint,
    /// The strategy that was evaluated.
    pub strategy: Strategy,
    /// The Monte Carlo estimate.
    #[serde(flatten)]
    pub estimate: EstimateWithCI,
}

fn write_trace_csv(
    path: &Path,
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    probe: &ProbePoint,
    seed: u64,
) -> Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::from_seed(path_seed(seed, 0));
    let record = simulate_path(params, hazard, claims, strategy, probe.s, probe.x, probe.w, &mut rng)?;
    let mut file = create_file(path)?;
    writeln!(file, "time,kind,amount,surplus_after,w_after")?;
    for event in &record.events {
        writeln!(
            file,
            "{},{},{},{},{}",
            event.time, event.kind, event.amount, event.surplus_after, event.w_after
        )?;
    }
    file.flush()?;
    Ok(())
}

fn run_simulate(config: &RunConfig, out_dir: &Path, trace: bool) -> Result<i32> {
    let (params, hazard, claims) = config.model.validated()?;
    let mc = config
        .mc
        .ok_or_else(|| Error::Config("simulate needs an mc block in the config".into()))?;
    let strategy = config
        .strategy
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a strategy block in the config".into()))?;
    if config.probes.is_empty() {
        return Err(Error::Config("simulate needs at least one probe point".into()));
    }

    let mut records = Vec::with_capacity(config.probes.len());
    for (idx, probe) in config.probes.iter().enumerate() {
        let estimate = estimate_value(
            &params, hazard, claims, strategy, probe.s, probe.x, probe.w, mc.n_paths, mc.seed,
        )?;
        println!(
            "probe (s = {}, x = {}, w = {}): mean {:.6} stderr {:.3e} ci95 [{:.6}, {:.6}] ({} paths)",
            probe.s, probe.x, probe.w, estimate.mean, estimate.stderr, estimate.ci95_low, estimate.ci95_high,
            estimate.n_paths
        );
        if trace {
            let trace_path = resolve(out_dir, &None, &format!("trace_probe_{idx}.csv"));
            write_trace_csv(&trace_path, &params, hazard, claims, strategy, probe, mc.seed)?;
            println!("wrote {}", trace_path.display());
        }
        records.push(EstimateRecord {
            point: *probe,
            strategy: strategy.clone(),
            estimate,
        });
    }

    let estimates_path = resolve(out_dir, &config.output.estimates, "estimates.json");
    write_json(&estimates_path, &records)?;
    println!("wrote {}", estimates_path.display());
    Ok(0)
}

// ======================================================================
// verify
// ======================================================================

/// The built-in strategy family for the dynamic programming check: constant
/// barriers at a few heights plus the two degenerate timing strategies.
fn default_strategy_family() -> Vec<Strategy> {
    let mut family: Vec<Strategy> = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&level| Strategy::Barrier {
            level: BarrierLevel::Constant { level },
        })
        .collect();
    family.push(Strategy::LiquidateNow);
    family.push(Strategy::PayAllAtT);
    family
}

fn run_verify(config: &RunConfig, out_dir: &Path) -> Result<i32> {
    let (params, hazard, claims) = config.model.validated()?;
    let spec = config
        .grid
        .ok_or_else(|| Error::Config("verify needs a grid block in the config".into()))?;
    let field = solve_vi(&spec, &params, hazard, claims)?;
    let tol = config.tolerance.unwrap_or_else(|| field.scheme_tolerance());

    let mut report = run_grid_checks(&field, &params, hazard, tol)?;

    if let Some(mc) = config.mc {
        let mut family = default_strategy_family();
        if let Some(extra) = &config.strategy {
            if !family.contains(extra) {
                family.push(extra.clone());
            }
        }
        let family_slack = mc.family_slack.unwrap_or(2.0 * tol);
        for probe in &config.probes {
            let step = mc.dpp_step.unwrap_or(params.horizon - probe.s);
            report.push(dpp_cross_check(
                &field,
                &params,
                hazard,
                claims,
                std::slice::from_ref(probe),
                step,
                &family,
                mc.n_paths,
                mc.seed,
                tol,
                family_slack,
            )?);
        }
    }

    let report_path = resolve(out_dir, &config.output.report, "report.json");
    write_json(&report_path, &report)?;
    print!("{}", report.render_table());
    println!("wrote {}", report_path.display());

    if report.pass() {
        println!("all {} checks passed (tolerance {tol:.4e})", report.checks.len());
        Ok(0)
    } else {
        if let Some(worst) = report.worst_failure() {
            println!(
                "FAILURE: {} violated by {:.6e} against tolerance {:.4e}",
                worst.name, worst.worst_violation, worst.tolerance
            );
        }
        Ok(1)
    }
}

// ======================================================================
// bounds
// ======================================================================

fn parse_probe(text: &str) -> Result<ProbePoint> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("--probe expects s,x,w — got {text:?}")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("--probe component {p:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(ProbePoint {
        s: nums[0],
        x: nums[1],
        w: nums[2],
    })
}

/// Render the analytic quantities at one probe; pure string building so the
/// table is testable without capturing stdout.
fn bounds_table(params: &ModelParams, probe: &ProbePoint) -> Result<String> {
    let bounds = AnalyticBounds::new(params);
    let d = distance_to_boundary(probe.s, probe.x, probe.w, params.horizon)?;
    let upper = supersolution_bound(probe.s, probe.x, probe.w, &bounds)?;
    let lower = subsolution_bound(probe.s, probe.x, probe.w, &bounds)?;
    let mut out = String::new();
    let _ = writeln!(out, "probe       s = {}, x = {}, w = {}", probe.s, probe.x, probe.w);
    let _ = writeln!(out, "d           {d:.6}");
    let _ = writeln!(out, "Vbar        {upper:.6}");
    let _ = writeln!(out, "Vunder      {lower:.6}");
    let _ = writeln!(out, "x           {:.6}", probe.x);
    let _ = writeln!(
        out,
        "x+p(T-s)    {:.6}",
        probe.x + params.premium_rate * (params.horizon - probe.s)
    );
    let _ = writeln!(out, "M1          {:.6}", bounds.m1);
    let _ = writeln!(out, "M2          {:.6}", bounds.m2);
    Ok(out)
}

fn run_bounds(config: &RunConfig, probe_text: &str) -> Result<i32> {
    let (params, _hazard, _claims) = config.model.validated()?;
    let probe = parse_probe(probe_text)?;
    print!("{}", bounds_table(&params, &probe)?);
    Ok(0)
}

// ======================================================================
// Tests
// ======================================================================
