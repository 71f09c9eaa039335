//! Command-line driver for the two-mode blockade simulator.
//!
//! Reads a single JSON experiment description, fans the requested parameter
//! grid over a bounded worker pool, and serializes plot-ready tables. All
//! quantities cross this interface in the units of the physics: rates in γ,
//! angles in units of π (`mu_over_pi`); radians and absolute rates stay
//! internal. Grid rows come back in grid order whatever the worker count,
//! and the output file carries no timing, so a rerun with the same
//! configuration is byte-identical; wall time and failure counts go to
//! stderr as a one-line JSON summary.
//!
//! Exit codes: 0 success, 2 malformed configuration, 3 more than 5% of grid
//! rows failed to converge, 4 requested condition has no solution.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nhblockade_core::hilbert::FockLayout;
use nhblockade_core::liouville::{
    evolve_to_steady, steady_by_eigen, validate_full_vs_effective, SolveOptions, SteadyStateReport,
};
use nhblockade_core::model::ModelParams;
use nhblockade_core::observables::{
    g2_zero, photon_distribution, subspace_spectrum, SpectralSubspace,
};
use nhblockade_core::{analytics, C64, Error as CoreError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_NOT_FOUND: u8 = 4;
/// Fraction of failed grid rows above which the run exits nonzero.
const FAILURE_THRESHOLD: f64 = 0.05;

#[derive(Parser)]
#[command(
    name = "nhblockade",
    about = "Photon statistics of a driven two-mode resonator with nonreciprocal backscattering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter axis and tabulate steady-state observables.
    Sweep(CommonArgs),
    /// Sweep μ × Δ and tabulate observables plus log₁₀ g²(0).
    Heatmap(CommonArgs),
    /// Angles where one scattering rate vanishes (JSON document).
    Eps(CommonArgs),
    /// Solve one optimal-blockade condition (JSON document).
    Conditions {
        #[command(flatten)]
        common: CommonArgs,
        /// Which condition to solve.
        #[arg(long, value_enum)]
        kind: ConditionKindArg,
    },
    /// Compare the Kerr model against the full optomechanical model.
    ValidateFull(CommonArgs),
    /// Photon-number distribution of both modes against a Poissonian.
    Distribution(CommonArgs),
}

#[derive(Parser)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path; stdout when omitted. Overrides the config key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format. Overrides the config key.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker count. Overrides NHBLOCKADE_WORKERS and the config key.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionKindArg {
    Cpb,
    CpbNonEp,
    Upb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// One failure carrying the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NOT_FOUND, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(args) => run_table(args, Table::Sweep),
        Command::Heatmap(args) => run_table(args, Table::Heatmap),
        Command::Eps(args) => run_conditions(args, None),
        Command::Conditions { common, kind } => run_conditions(common, Some(kind)),
        Command::ValidateFull(args) => run_validate_full(args),
        Command::Distribution(args) => run_distribution(args),
    }
}

// ------------------------------------------------------------------
// Configuration document
// ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    model: ModelSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSection>,
    #[serde(default)]
    output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    lambda1: C64,
    lambda2: C64,
    m: u32,
    #[serde(default)]
    mu_over_pi: f64,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    u: f64,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default)]
    drive: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
}

fn default_gamma() -> f64 {
    1.0
}

impl ModelSection {
    fn params(&self) -> ModelParams {
        ModelParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            m: self.m,
            mu: self.mu_over_pi * PI,
            delta: self.delta,
            u: self.u,
            gamma: self.gamma,
            drive: self.drive,
            omega_m: self.omega_m,
            g: self.g,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverSection {
    method: Method,
    dims: Vec<usize>,
    mech_dim: usize,
    dt: f64,
    t_max: f64,
    tol: f64,
    dissipator_rate: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let opts = SolveOptions::default();
        SolverSection {
            method: Method::Evolve,
            dims: vec![5, 5],
            mech_dim: 6,
            dt: opts.dt,
            t_max: opts.t_max,
            tol: opts.tol,
            dissipator_rate: None,
        }
    }
}

impl SolverSection {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            dt: self.dt,
            t_max: self.t_max,
            tol: self.tol,
            dissipator_rate: self.dissipator_rate,
        }
    }

    /// Loss width entering the damped analytic overlay, w = c/γ-rate.
    fn width(&self, gamma: f64) -> f64 {
        self.dissipator_rate.unwrap_or(gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Evolve,
    Eigen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    axis: Axis,
    start: f64,
    stop: f64,
    points: usize,
    /// Δ range of a μ×Δ sweep; the primary range is then μ in units of π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    second_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    second_stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    second_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Axis {
    Mu,
    Delta,
    MuXDelta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OutputSection {
    path: Option<PathBuf>,
    format: Option<Format>,
}

/// Loads the config, folds in flag and environment overrides, and checks
/// every invariant that can fail before any solver runs.
fn load_config(args: &CommonArgs, needs_sweep: bool) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Failure::config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("config does not parse: {e}")))?;

    if let Some(out) = &args.out {
        config.output.path = Some(out.clone());
    }
    if let Some(format) = args.format {
        config.output.format = Some(format);
    }
    let env_workers = match std::env::var("NHBLOCKADE_WORKERS") {
        Ok(text) => Some(text.parse::<usize>().map_err(|_| {
            Failure::config(format!("NHBLOCKADE_WORKERS must be a positive integer, got {text:?}"))
        })?),
        Err(_) => None,
    };
    config.workers = args.workers.or(env_workers).or(config.workers).or(Some(1));
    if config.workers == Some(0) {
        return Err(Failure::config("workers must be at least 1"));
    }

    config
        .model
        .params()
        .validate()
        .map_err(|e| Failure::config(format!("model: {e}")))?;
    let solver = &config.solver;
    if solver.dims.is_empty() || solver.dims.iter().any(|&d| d == 0) {
        return Err(Failure::config("solver.dims must list positive mode dimensions"));
    }
    if solver.method == Method::Eigen && solver.dims.len() != 2 {
        return Err(Failure::config(
            "the eigenvector route diagonalizes the two-mode generator; use method \"evolve\" \
             for other layouts",
        ));
    }
    for (name, v) in [("dt", solver.dt), ("t_max", solver.t_max), ("tol", solver.tol)] {
        if v <= 0.0 || !v.is_finite() {
            return Err(Failure::config(format!(
                "solver.{name} must be positive and finite, got {v}"
            )));
        }
    }
    if solver.mech_dim < 2 {
        return Err(Failure::config("solver.mech_dim must be at least 2"));
    }

    if needs_sweep {
        let Some(sweep) = &config.sweep else {
            return Err(Failure::config("this subcommand needs a sweep section"));
        };
        check_range("sweep", sweep.start, sweep.stop, sweep.points)?;
        if sweep.axis == Axis::MuXDelta {
            let (Some(start), Some(stop), Some(points)) =
                (sweep.second_start, sweep.second_stop, sweep.second_points)
            else {
                return Err(Failure::config(
                    "a mu_x_delta sweep needs second_start, second_stop, second_points for Δ",
                ));
            };
            check_range("sweep (second axis)", start, stop, points)?;
        } else if sweep.second_start.is_some()
            || sweep.second_stop.is_some()
            || sweep.second_points.is_some()
        {
            return Err(Failure::config("second_* keys apply only to axis mu_x_delta"));
        }
    }
    Ok(config)
}

/// A grid needs points ≥ 2 with start < stop; a single point (start = stop,
/// points = 1) is the documented degenerate case for spot checks.
fn check_range(what: &str, start: f64, stop: f64, points: usize) -> Result<(), Failure> {
    if !start.is_finite() || !stop.is_finite() {
        return Err(Failure::config(format!("{what}: bounds must be finite")));
    }
    match points {
        0 => Err(Failure::config(format!("{what}: grid must be non-empty"))),
        1 if start == stop => Ok(()),
        1 => Err(Failure::config(format!(
            "{what}: a one-point grid needs start = stop, got [{start}, {stop}]"
        ))),
        _ if start < stop => Ok(()),
        _ => Err(Failure::config(format!(
            "{what}: start < stop required, got [{start}, {stop}]"
        ))),
    }
}

fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points)
        .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Grid tuples (μ/π, Δ) in row-major order, μ outer.
fn build_grid(model: &ModelSection, sweep: &SweepSection) -> Vec<(f64, f64)> {
    match sweep.axis {
        Axis::Mu => linspace(sweep.start, sweep.stop, sweep.points)
            .into_iter()
            .map(|mu| (mu, model.delta))
            .collect(),
        Axis::Delta => linspace(sweep.start, sweep.stop, sweep.points)
            .into_iter()
            .map(|delta| (model.mu_over_pi, delta))
            .collect(),
        Axis::MuXDelta => {
            let mus = linspace(sweep.start, sweep.stop, sweep.points);
            let deltas = linspace(
                sweep.second_start.expect("validated"),
                sweep.second_stop.expect("validated"),
                sweep.second_points.expect("validated"),
            );
            let mut grid = Vec::with_capacity(mus.len() * deltas.len());
            for &mu in &mus {
                for &delta in &deltas {
                    grid.push((mu, delta));
                }
            }
            grid
        }
    }
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::io(format!("cannot start worker pool: {e}")))
}

// ------------------------------------------------------------------
// Sweep and heatmap tables
// ------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Table {
    Sweep,
    Heatmap,
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    mu_over_pi: f64,
    delta: f64,
    g2_numeric: Option<f64>,
    g2_analytic: Option<f64>,
    n1: Option<f64>,
    n2: Option<f64>,
    splitting_re: f64,
    splitting_im: f64,
    overlap: f64,
    r1: Option<f64>,
    r2: Option<f64>,
    residual: Option<f64>,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    log10_g2_numeric: Option<f64>,
}

#[derive(Serialize)]
struct TableMetadata {
    config: ExperimentConfig,
    rows_total: usize,
    rows_failed: usize,
    max_residual: Option<f64>,
}

#[derive(Serialize)]
struct TableDocument {
    metadata: TableMetadata,
    rows: Vec<SweepRow>,
}

fn run_table(args: CommonArgs, table: Table) -> Result<(), Failure> {
    let config = load_config(&args, true)?;
    let sweep = config.sweep.as_ref().expect("validated");
    if table == Table::Heatmap && sweep.axis != Axis::MuXDelta {
        return Err(Failure::config("heatmap needs sweep.axis = \"mu_x_delta\""));
    }
    let layout = FockLayout::new(&config.solver.dims)
        .map_err(|e| Failure::config(format!("solver.dims: {e}")))?;
    let grid = build_grid(&config.model, sweep);
    let workers = config.workers.expect("resolved");

    let started = Instant::now();
    let pool = worker_pool(workers)?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .map(|&(mu_over_pi, delta)| {
                sweep_point(&config.model, &config.solver, &layout, mu_over_pi, delta, table)
            })
            .collect()
    });
    let wall_time = started.elapsed().as_secs_f64();

    finish_table(&config, rows, wall_time, workers)
}

/// Solves one grid point. Solver failures surface as a flagged row, never
/// as a dropped one.
fn sweep_point(
    model: &ModelSection,
    solver: &SolverSection,
    layout: &FockLayout,
    mu_over_pi: f64,
    delta: f64,
    table: Table,
) -> SweepRow {
    let mut params = model.params();
    params.mu = mu_over_pi * PI;
    params.delta = delta;
    let opts = solver.options();

    let spectrum = subspace_spectrum(&params, SpectralSubspace::SingleExcitation);
    let (splitting_re, splitting_im, overlap) = match &spectrum {
        Ok(report) => (report.splitting.re, report.splitting.im, report.overlap),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    let g2_analytic = analytics::g2_analytic_damped(&params, solver.width(params.gamma)).ok();

    let mut row = SweepRow {
        mu_over_pi,
        delta,
        g2_numeric: None,
        g2_analytic,
        n1: None,
        n2: None,
        splitting_re,
        splitting_im,
        overlap,
        r1: None,
        r2: None,
        residual: None,
        converged: false,
        log10_g2_numeric: None,
    };

    let report = match solver.method {
        Method::Evolve => evolve_to_steady(&params, layout, &opts),
        Method::Eigen => steady_by_eigen(&params, layout, &opts),
    };
    match report {
        Ok(report) => fill_observables(&mut row, &report, table),
        Err(e) => eprintln!("row (mu_over_pi = {mu_over_pi}, delta = {delta}) failed: {e}"),
    }
    row
}

fn fill_observables(row: &mut SweepRow, report: &SteadyStateReport, table: Table) {
    row.converged = true;
    row.residual = Some(report.residual);
    row.g2_numeric = g2_zero(&report.rho, 0).ok();
    if table == Table::Heatmap {
        row.log10_g2_numeric = row.g2_numeric.map(f64::log10);
    }
    if let Ok(dist) = photon_distribution(&report.rho, 0) {
        row.n1 = Some(dist.mean);
        row.r1 = dist.relative.get(1).copied().flatten();
        row.r2 = dist.relative.get(2).copied().flatten();
    }
    if let Ok(dist) = photon_distribution(&report.rho, 1) {
        row.n2 = Some(dist.mean);
    }
}

fn finish_table(
    config: &ExperimentConfig,
    rows: Vec<SweepRow>,
    wall_time: f64,
    workers: usize,
) -> Result<(), Failure> {
    let rows_total = rows.len();
    let rows_failed = rows.iter().filter(|r| !r.converged).count();
    let max_residual = rows
        .iter()
        .filter_map(|r| r.residual)
        .max_by(f64::total_cmp);

    let format = config.output.format.unwrap_or(Format::Csv);
    let with_log = rows.iter().any(|r| r.log10_g2_numeric.is_some());
    let document = match format {
        Format::Csv => sweep_csv(&rows, with_log),
        Format::Json => {
            let doc = TableDocument {
                metadata: TableMetadata {
                    config: config.clone(),
                    rows_total,
                    rows_failed,
                    max_residual,
                },
                rows,
            };
            to_json(&doc)?
        }
    };
    emit(&config.output.path, &document)?;
    summary(rows_total, rows_failed, max_residual, wall_time, workers);

    if rows_total > 0 && rows_failed as f64 > FAILURE_THRESHOLD * rows_total as f64 {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("{rows_failed} of {rows_total} grid rows failed to converge"),
        });
    }
    Ok(())
}

fn sweep_csv(rows: &[SweepRow], with_log: bool) -> String {
    let mut out = String::from(
        "mu_over_pi,delta,g2_numeric,g2_analytic,n1,n2,splitting_re,splitting_im,overlap,r1,r2,residual,converged",
    );
    if with_log {
        out.push_str(",log10_g2_numeric");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sig(row.mu_over_pi),
            sig(row.delta),
            sig_opt(row.g2_numeric),
            sig_opt(row.g2_analytic),
            sig_opt(row.n1),
            sig_opt(row.n2),
            sig(row.splitting_re),
            sig(row.splitting_im),
            sig(row.overlap),
            sig_opt(row.r1),
            sig_opt(row.r2),
            sig_opt(row.residual),
            row.converged,
        );
        if with_log {
            let _ = write!(out, ",{}", sig_opt(row.log10_g2_numeric));
        }
        out.push('\n');
    }
    out
}

// ------------------------------------------------------------------
// Condition documents
// ------------------------------------------------------------------

#[derive(Serialize)]
struct ConditionDocument {
    kind: &'static str,
    mu_over_pi: Vec<f64>,
    delta: Vec<f64>,
    diagnostics: Vec<f64>,
    notes: Vec<String>,
}

fn run_conditions(args: CommonArgs, kind: Option<ConditionKindArg>) -> Result<(), Failure> {
    let config = load_config(&args, false)?;
    let params = config.model.params();
    let (label, solved) = match kind {
        None => (
            "ep-locus",
            analytics::find_eps(
                params.lambda1,
                params.lambda2,
                params.m,
                1..=(2 * params.m as i32 - 1),
            ),
        ),
        Some(ConditionKindArg::Cpb) => ("cpb", analytics::cpb_at_ep(&params)),
        Some(ConditionKindArg::CpbNonEp) => ("cpb-non-ep", analytics::cpb_non_ep(&params)),
        Some(ConditionKindArg::Upb) => ("upb", analytics::upb_conditions(&params)),
    };
    let solution = solved.map_err(|e| match e {
        CoreError::NoSolution(reason) => Failure::not_found(reason),
        CoreError::InvalidParameter(reason) => Failure::config(reason),
        other => Failure::io(other.to_string()),
    })?;

    let document = ConditionDocument {
        kind: label,
        mu_over_pi: solution.mu_values.iter().map(|mu| mu / PI).collect(),
        delta: solution.delta_values.clone(),
        diagnostics: solution.diagnostics.clone(),
        notes: solution.notes.clone(),
    };
    emit(&config.output.path, &to_json(&document)?)?;
    if document.mu_over_pi.is_empty() {
        return Err(Failure::not_found(format!(
            "no {label} solution for these scatterers; see the emitted notes"
        )));
    }
    Ok(())
}

// ------------------------------------------------------------------
// Effective-vs-full validation
// ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct ValidateRow {
    mu_over_pi: f64,
    delta: f64,
    g2_effective: Option<f64>,
    g2_full: Option<f64>,
    g2_full_doubled: Option<f64>,
    relative_deviation: Option<f64>,
    doubling_rel_change: Option<f64>,
    mech_dim: usize,
    converged: bool,
}

#[derive(Serialize)]
struct ValidateMetadata {
    config: ExperimentConfig,
    rows_total: usize,
    rows_failed: usize,
    kerr_from_mechanics: f64,
    max_relative_deviation: Option<f64>,
}

#[derive(Serialize)]
struct ValidateDocument {
    metadata: ValidateMetadata,
    rows: Vec<ValidateRow>,
}

fn run_validate_full(args: CommonArgs) -> Result<(), Failure> {
    let config = load_config(&args, true)?;
    let params = config.model.params();
    let Some(kerr) = params.kerr_from_mechanics() else {
        return Err(Failure::config(
            "validate-full needs model.omega_m and model.g",
        ));
    };
    if (kerr - params.u).abs() > 1e-3 * params.u.max(1.0) {
        return Err(Failure::config(format!(
            "mechanics disagree with the configured Kerr shift before any solve: \
             g²/ω_m = {kerr:.6}γ but u = {:.6}γ",
            params.u
        )));
    }
    let layout = FockLayout::new(&config.solver.dims)
        .map_err(|e| Failure::config(format!("solver.dims: {e}")))?;
    let grid = build_grid(&config.model, config.sweep.as_ref().expect("validated"));
    let workers = config.workers.expect("resolved");

    let started = Instant::now();
    let pool = worker_pool(workers)?;
    let rows: Vec<ValidateRow> = pool.install(|| {
        grid.par_iter()
            .map(|&(mu_over_pi, delta)| {
                let mut point = params.clone();
                point.mu = mu_over_pi * PI;
                point.delta = delta;
                let outcome = validate_full_vs_effective(
                    &point,
                    &layout,
                    config.solver.mech_dim,
                    &config.solver.options(),
                );
                match outcome {
                    Ok(cmp) => ValidateRow {
                        mu_over_pi,
                        delta,
                        g2_effective: Some(cmp.effective_g2),
                        g2_full: Some(cmp.full_g2),
                        g2_full_doubled: Some(cmp.doubled_g2),
                        relative_deviation: Some(cmp.relative_deviation),
                        doubling_rel_change: Some(cmp.doubling_rel_change),
                        mech_dim: cmp.mech_dim,
                        converged: true,
                    },
                    Err(e) => {
                        eprintln!(
                            "row (mu_over_pi = {mu_over_pi}, delta = {delta}) failed: {e}"
                        );
                        ValidateRow {
                            mu_over_pi,
                            delta,
                            g2_effective: None,
                            g2_full: None,
                            g2_full_doubled: None,
                            relative_deviation: None,
                            doubling_rel_change: None,
                            mech_dim: config.solver.mech_dim,
                            converged: false,
                        }
                    }
                }
            })
            .collect()
    });
    let wall_time = started.elapsed().as_secs_f64();

    let rows_total = rows.len();
    let rows_failed = rows.iter().filter(|r| !r.converged).count();
    let max_relative_deviation = rows
        .iter()
        .filter_map(|r| r.relative_deviation)
        .max_by(f64::total_cmp);

    let document = match config.output.format.unwrap_or(Format::Csv) {
        Format::Csv => validate_csv(&rows),
        Format::Json => to_json(&ValidateDocument {
            metadata: ValidateMetadata {
                config: config.clone(),
                rows_total,
                rows_failed,
                kerr_from_mechanics: kerr,
                max_relative_deviation,
            },
            rows,
        })?,
    };
    emit(&config.output.path, &document)?;
    summary(rows_total, rows_failed, None, wall_time, workers);

    if rows_total > 0 && rows_failed as f64 > FAILURE_THRESHOLD * rows_total as f64 {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("{rows_failed} of {rows_total} validation rows failed"),
        });
    }
    Ok(())
}

fn validate_csv(rows: &[ValidateRow]) -> String {
    let mut out = String::from(
        "mu_over_pi,delta,g2_effective,g2_full,g2_full_doubled,relative_deviation,doubling_rel_change,mech_dim,converged\n",
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            sig(row.mu_over_pi),
            sig(row.delta),
            sig_opt(row.g2_effective),
            sig_opt(row.g2_full),
            sig_opt(row.g2_full_doubled),
            sig_opt(row.relative_deviation),
            sig_opt(row.doubling_rel_change),
            row.mech_dim,
            row.converged,
        );
    }
    out
}

// ------------------------------------------------------------------
// Photon-number distribution
// ------------------------------------------------------------------

#[derive(Serialize)]
struct DistributionMode {
    mode: usize,
    mean: f64,
    probabilities: Vec<f64>,
    poisson_reference: Vec<f64>,
    relative: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct DistributionDocument {
    metadata: TableMetadata,
    modes: Vec<DistributionMode>,
}

fn run_distribution(args: CommonArgs) -> Result<(), Failure> {
    let config = load_config(&args, false)?;
    let params = config.model.params();
    let layout = FockLayout::new(&config.solver.dims)
        .map_err(|e| Failure::config(format!("solver.dims: {e}")))?;
    let opts = config.solver.options();

    let started = Instant::now();
    let report = match config.solver.method {
        Method::Evolve => evolve_to_steady(&params, &layout, &opts),
        Method::Eigen => steady_by_eigen(&params, &layout, &opts),
    }
    .map_err(|e| Failure { code: EXIT_SOLVER, message: format!("steady state: {e}") })?;
    let wall_time = started.elapsed().as_secs_f64();

    let modes: Vec<DistributionMode> = (0..2)
        .map(|mode| {
            let dist = photon_distribution(&report.rho, mode)
                .map_err(|e| Failure::io(format!("distribution of mode {mode}: {e}")))?;
            Ok(DistributionMode {
                mode,
                mean: dist.mean,
                probabilities: dist.probabilities,
                poisson_reference: dist.poisson_reference,
                relative: dist.relative,
            })
        })
        .collect::<Result<_, Failure>>()?;

    let document = match config.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&DistributionDocument {
            metadata: TableMetadata {
                config: config.clone(),
                rows_total: modes[0].probabilities.len(),
                rows_failed: 0,
                max_residual: Some(report.residual),
            },
            modes,
        })?,
        Format::Csv => distribution_csv(&modes),
    };
    emit(&config.output.path, &document)?;
    summary(1, 0, Some(report.residual), wall_time, config.workers.expect("resolved"));
    Ok(())
}

fn distribution_csv(modes: &[DistributionMode]) -> String {
    let mut out = String::from("n,p_cw,poisson_cw,r_cw,p_ccw,poisson_ccw,r_ccw\n");
    let n_max = modes.iter().map(|m| m.probabilities.len()).max().unwrap_or(0);
    let cell = |mode: &DistributionMode, n: usize| {
        let p = mode.probabilities.get(n).copied();
        let q = mode.poisson_reference.get(n).copied();
        let r = mode.relative.get(n).copied().flatten();
        format!("{},{},{}", sig_opt(p), sig_opt(q), sig_opt(r))
    };
    for n in 0..n_max {
        let _ = writeln!(out, "{n},{},{}", cell(&modes[0], n), cell(&modes[1], n));
    }
    out
}

// ------------------------------------------------------------------
// Serialization helpers
// ------------------------------------------------------------------

/// 17 significant digits, enough to reproduce any f64 exactly.
fn sig(x: f64) -> String {
    format!("{x:.16e}")
}

fn sig_opt(x: Option<f64>) -> String {
    x.map(sig).unwrap_or_default()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Failure::io(format!("serialization failed: {e}")))
}

fn emit(path: &Option<PathBuf>, document: &str) -> Result<(), Failure> {
    match path {
        Some(path) => std::fs::write(path, document)
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{document}");
            Ok(())
        }
    }
}

/// One-line runtime summary on stderr; timing stays out of the output file
/// so reruns stay byte-identical.
fn summary(
    rows_total: usize,
    rows_failed: usize,
    max_residual: Option<f64>,
    wall_time: f64,
    workers: usize,
) {
    let residual = max_residual.map_or("null".to_string(), |r| format!("{r:e}"));
    eprintln!(
        "{{\"rows_total\":{rows_total},\"rows_failed\":{rows_failed},\"max_residual\":{residual},\
         \"wall_time_s\":{wall_time:.3},\"workers\":{workers}}}"
    );
}
