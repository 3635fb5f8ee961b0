//! Command-line driver: `simulate`, `estimate`, `compare-kalman`, `verify`.
//!
//! Every command reads a JSON [`config::RunConfig`], writes a CSV with a
//! header row and a JSON sidecar next to it (`<out>.json`). Numbers are
//! printed with 17 significant digits and `+∞` as `inf`.

pub mod config;
pub mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::kalman::equivalence_check;
use crate::model::{Family, Trajectory};
use crate::observer::{ObserverState, INFEASIBLE_BETA};
use crate::oracle::{
    batch_estimate, build_block_system, smooth_backward_tol, support_function_direct, support_function_tol,
    StackedRange,
};
use config::{load_config, Overrides, Resolved};
use output::{fmt_num, sidecar_path, write_json};

/// Largest stacked dimension `(N + 1) n` accepted by `verify`.
pub const VERIFY_MAX_DIM: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{message}")]
    Invalid { message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Measurements { path: PathBuf, message: String },
    #[error("{failed} of {total} verification checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Model(e) => e.code(),
            CliError::Config { .. } | CliError::Invalid { .. } => "E_CONFIG",
            CliError::Io { .. } => "E_IO",
            CliError::Measurements { .. } => "E_MEASUREMENTS",
            CliError::VerifyFailed { .. } => "E_VERIFY",
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "singulax", version, about = "Online minimax observer for descriptor systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the plant and write the trajectory.
    Simulate(CommonArgs),
    /// Run the observer and write one record per step.
    Estimate(EstimateArgs),
    /// Compare the observer with the Kalman recursion under unit weights.
    CompareKalman(CommonArgs),
    /// Cross-check the observer against the batch least-squares oracle.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Horizon N (overrides `steps`)
    #[arg(long)]
    pub steps: Option<usize>,
    /// Relative rank tolerance, default 1e-10 * n (overrides `tol`)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for random systems and noise (overrides `seed`)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (overrides `output`)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV with columns `y_1..y_p` (and optionally `x_1..x_n`) instead of
    /// simulating.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let cfg = load_config(&self.config)?;
        cfg.resolve(&Overrides {
            steps: self.steps,
            tol: self.tol,
            seed: self.seed,
            out: self.out.clone(),
        })
    }
}

/// Runs a parsed command line; returns the lines to print on success.
pub fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Simulate(a) => {
            let r = a.resolve()?;
            let s = cmd_simulate(&r, r.output_path()?)?;
            Ok(vec![format!(
                "simulate: {} rows, constraint_value = {}",
                s.steps + 1,
                fmt_num(s.constraint_value)
            )])
        }
        Command::Estimate(a) => {
            let r = a.common.resolve()?;
            let source = match &a.measurements {
                Some(path) => Measurements::File {
                    path: path.clone(),
                    limit: a.common.steps,
                },
                None => Measurements::Simulated,
            };
            let s = cmd_estimate(&r, &source, r.output_path()?)?;
            Ok(vec![format!("estimate: {} rows", s.rows)])
        }
        Command::CompareKalman(a) => {
            let r = a.resolve()?;
            let s = cmd_compare_kalman(&r, r.output_path()?)?;
            Ok(vec![format!("compare-kalman: max_deviation = {}", fmt_num(s.max_deviation))])
        }
        Command::Verify(a) => {
            let r = a.resolve()?;
            let report = cmd_verify(&r, r.output_path()?)?;
            let mut lines: Vec<String> = report
                .checks
                .iter()
                .map(|c| {
                    format!(
                        "{} {} max_residual={} tol={:e}",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.name,
                        fmt_num(c.max_residual),
                        c.tolerance
                    )
                })
                .collect();
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                for l in &lines {
                    println!("{l}");
                }
                return Err(CliError::VerifyFailed {
                    failed,
                    total: report.checks.len(),
                });
            }
            lines.push(format!("verify: all {} checks passed", report.checks.len()));
            Ok(lines)
        }
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn header(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn nums(v: &DVector<f64>) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|&x| fmt_num(x))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub system: String,
    pub steps: usize,
    pub seed: u64,
    #[serde(serialize_with = "output::num")]
    pub constraint_value: f64,
    pub feasible: bool,
    pub q: Vec<f64>,
    pub noise: config::NoiseSummary,
}

/// Writes `k, x_*, f_*, g_*, y_*`; the `f` cells of the last row are empty
/// since `f_N` is not part of the model.
pub fn cmd_simulate(r: &Resolved, out: &Path) -> Result<SimulateSummary, CliError> {
    let (traj, noise) = r.simulate()?;
    let sys = &r.system;
    let mut w = create(out)?;
    let head: Vec<String> = std::iter::once("k".to_string())
        .chain(header("x", sys.n()))
        .chain(header("f", sys.m()))
        .chain(header("g", sys.p()))
        .chain(header("y", sys.p()))
        .collect();
    w.write_record(&head).map_err(|e| CliError::io(out, e))?;
    for k in 0..=traj.steps() {
        let mut row = vec![k.to_string()];
        row.extend(nums(&traj.x[k]));
        match traj.f.get(k) {
            Some(f) => row.extend(nums(f)),
            None => row.extend(std::iter::repeat_n(String::new(), sys.m())),
        }
        row.extend(nums(&traj.g[k]));
        row.extend(nums(&traj.y[k]));
        w.write_record(&row).map_err(|e| CliError::io(out, e))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    let summary = SimulateSummary {
        system: r.name.clone(),
        steps: traj.steps(),
        seed: r.seed,
        constraint_value: traj.constraint_value,
        feasible: traj.constraint_value <= 1.0,
        q: traj.q.iter().copied().collect(),
        noise,
    };
    write_json(&sidecar_path(out), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, PartialEq)]
pub enum Measurements {
    /// Simulate from the config; the true state is reported alongside.
    Simulated,
    /// Read `y_*` (and optional `x_*`) columns, at most `limit + 1` rows.
    File { path: PathBuf, limit: Option<usize> },
    /// Already in memory.
    Given {
        y: Vec<DVector<f64>>,
        x: Option<Vec<DVector<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub system: String,
    pub rows: usize,
    pub final_causality_index: usize,
    #[serde(serialize_with = "output::num")]
    pub final_rho: f64,
    #[serde(serialize_with = "output::num")]
    pub final_beta: f64,
    pub max_abs_err: Option<Vec<f64>>,
}

/// Reads a measurement CSV. Columns are matched by name; `x_*` columns are
/// optional but must be complete if present.
pub fn read_measurements(
    path: &Path,
    n: usize,
    p: usize,
    limit: Option<usize>,
) -> Result<(Vec<DVector<f64>>, Option<Vec<DVector<f64>>>), CliError> {
    let bad = |message: String| CliError::Measurements {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let find = |name: String| headers.iter().position(|h| h.trim() == name);
    let y_cols = header("y", p)
        .map(|name| find(name.clone()).ok_or_else(|| bad(format!("missing column {name}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let x_found: Vec<Option<usize>> = header("x", n).map(find).collect();
    let x_cols: Option<Vec<usize>> = if x_found.iter().all(Option::is_none) {
        None
    } else {
        Some(
            x_found
                .iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| bad(format!("missing column x_{}", i + 1))))
                .collect::<Result<_, _>>()?,
        )
    };

    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for record in rdr.records() {
        if limit.is_some_and(|l| ys.len() > l) {
            break;
        }
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |c: usize| -> Result<f64, CliError> {
            let text = record.get(c).unwrap_or("").trim();
            text.parse::<f64>()
                .map_err(|_| bad(format!("line {line}, column {}: cannot parse {text:?} as a number", c + 1)))
        };
        let y = y_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>, _>>()?;
        ys.push(DVector::from_vec(y));
        if let Some(cols) = &x_cols {
            let x = cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>, _>>()?;
            xs.push(DVector::from_vec(x));
        }
    }
    if ys.is_empty() {
        return Err(bad("no measurement rows".into()));
    }
    Ok((ys, x_cols.map(|_| xs)))
}

/// Writes one record per step, each from `y_0..y_k` only, flushing as it
/// goes.
pub fn cmd_estimate(r: &Resolved, source: &Measurements, out: &Path) -> Result<EstimateSummary, CliError> {
    let sys = &r.system;
    let (y, x) = match source {
        Measurements::Simulated => {
            let (traj, _) = r.simulate()?;
            (traj.y, Some(traj.x))
        }
        Measurements::File { path, limit } => read_measurements(path, sys.n(), sys.p(), *limit)?,
        Measurements::Given { y, x } => (y.clone(), x.clone()),
    };
    if let Some(xs) = &x {
        if xs.len() != y.len() {
            return Err(crate::Error::dim("true state count", y.len(), xs.len()).into());
        }
    }
    sys.validate(y.len() - 1)?;

    let mut w = create(out)?;
    let mut head = vec!["k".to_string()];
    if x.is_some() {
        head.extend(header("x", sys.n()));
    }
    head.extend(header("xhat", sys.n()));
    if x.is_some() {
        head.extend(header("abs_err", sys.n()));
    }
    head.extend(header("sigma", r.directions.len()));
    head.extend(["I".to_string(), "rho".to_string(), "beta".to_string()]);
    w.write_record(&head).map_err(|e| CliError::io(out, e))?;

    let mut max_err: Option<Vec<f64>> = x.as_ref().map(|_| vec![0.0; sys.n()]);
    let mut state: Option<ObserverState<'_>> = None;
    let mut last = None;
    for (k, yk) in y.iter().enumerate() {
        let next = match &state {
            None => ObserverState::init(sys, yk, r.tol)?,
            Some(s) => s.step(yk)?,
        };
        let rep = next.report(&r.directions)?;
        let mut row = vec![k.to_string()];
        if let Some(xs) = &x {
            row.extend(nums(&xs[k]));
        }
        row.extend(nums(&rep.estimate));
        if let (Some(xs), Some(me)) = (&x, max_err.as_mut()) {
            let err = (&xs[k] - &rep.estimate).abs();
            for (m, e) in me.iter_mut().zip(err.iter()) {
                *m = m.max(*e);
            }
            row.extend(nums(&err));
        }
        row.extend(rep.directional.iter().map(|d| fmt_num(d.sigma)));
        row.push(rep.causality_index.to_string());
        row.push(fmt_num(rep.rho));
        row.push(fmt_num(rep.beta));
        w.write_record(&row).map_err(|e| CliError::io(out, e))?;
        w.flush().map_err(|e| CliError::io(out, e))?;
        last = Some(rep);
        state = Some(next);
    }
    let last = last.expect("at least one measurement");
    let summary = EstimateSummary {
        system: r.name.clone(),
        rows: y.len(),
        final_causality_index: last.causality_index,
        final_rho: last.rho,
        final_beta: last.beta,
        max_abs_err: max_err,
    };
    write_json(&sidecar_path(out), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------- compare-kalman

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KalmanSummary {
    pub system: String,
    pub steps: usize,
    #[serde(serialize_with = "output::num")]
    pub max_deviation: f64,
    #[serde(serialize_with = "output::num")]
    pub max_inverse_residual: f64,
}

/// The comparison is defined for unit weights, so the configured weights
/// are replaced by identities; data are still simulated under the
/// configured ones.
pub fn cmd_compare_kalman(r: &Resolved, out: &Path) -> Result<KalmanSummary, CliError> {
    let (traj, _) = r.simulate()?;
    let sys = &r.system;
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let unit = sys.clone().with_weights(
        DMatrix::identity(m, m),
        Family::Constant(DMatrix::identity(m, m)),
        Family::Constant(DMatrix::identity(p, p)),
    )?;
    let rep = equivalence_check(&unit, &traj.q, &traj.y, traj.steps())?;

    let mut w = create(out)?;
    let mut head = vec!["k".to_string(), "I".into(), "deviation".into(), "inverse_residual".into()];
    head.extend(header("xhat_kalman", n));
    w.write_record(&head).map_err(|e| CliError::io(out, e))?;
    for k in 0..rep.deviations.len() {
        let mut row = vec![
            k.to_string(),
            rep.causality_indices[k].to_string(),
            fmt_num(rep.deviations[k]),
            fmt_num(rep.inverse_residuals[k]),
        ];
        row.extend(nums(&rep.kalman[k].xhat));
        w.write_record(&row).map_err(|e| CliError::io(out, e))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    let summary = KalmanSummary {
        system: r.name.clone(),
        steps: traj.steps(),
        max_deviation: rep.max_deviation,
        max_inverse_residual: rep.inverse_residuals.iter().copied().fold(0.0, f64::max),
    };
    write_json(&sidecar_path(out), &summary)?;
    Ok(summary)
}

// ------------------------------------------------------------------ verify

pub const ESTIMATE_TOL: f64 = 1e-8;
pub const NORM_IDENTITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    #[serde(serialize_with = "output::num")]
    pub max_residual: f64,
    pub tolerance: f64,
    pub details: Vec<String>,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            pass: true,
            max_residual: 0.0,
            tolerance,
            details: Vec::new(),
        }
    }

    fn residual(&mut self, value: f64) {
        self.max_residual = self.max_residual.max(value);
        if !(value <= self.tolerance) {
            self.pass = false;
        }
    }

    fn fail(&mut self, detail: String) {
        self.pass = false;
        self.details.push(detail);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub system: String,
    pub steps: usize,
    pub seed: u64,
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

fn rel(a: f64, b: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        return if a == b { 0.0 } else { f64::INFINITY };
    }
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn max_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + a.amax().max(b.amax()))
}

/// Backward error of the smoother against the batch minimizer: the cost gap
/// and `‖M (x_s - x_b)‖∞ / (λ_max(M) (1 + ‖x_b‖∞))`. Weakly determined
/// coordinates may differ by `ε κ(M)` in forward error while both are
/// minimizers to working precision.
fn smoother_backward_error(
    sys: &crate::model::DescriptorSystem,
    y: &[DVector<f64>],
    h: usize,
    tol: f64,
    batch: &crate::oracle::SmootherResult,
) -> crate::Result<f64> {
    let smoothed = smooth_backward_tol(sys, y, h, tol)?;
    let blocks = build_block_system(sys, h)?;
    let normal = crate::psdlinalg::SymPsdMatrix::new(blocks.normal_matrix())?;
    let xs = blocks.stack_states(&smoothed.xhat);
    let xb = blocks.stack_states(&batch.xhat);
    let lambda = normal.lambda_max().max(f64::MIN_POSITIVE);
    let gap = (normal.matrix() * (&xs - &xb)).amax() / (lambda * (1.0 + xb.amax()));
    Ok(rel(smoothed.cost, batch.cost).max(gap))
}

/// Horizons checked by `verify`: the last two, so both parities appear.
fn horizons(steps: usize) -> Vec<usize> {
    if steps == 0 {
        vec![0]
    } else {
        vec![steps - 1, steps]
    }
}

/// Runs every cross-check; a check that cannot be evaluated fails with the
/// reason in its details.
pub fn verify_trajectory(r: &Resolved, traj: &Trajectory) -> VerifyReport {
    let sys = &r.system;
    let n = sys.n();
    let steps = traj.steps();
    let mut batch_check = Check::new("observer_vs_batch", ESTIMATE_TOL);
    let mut cost_check = Check::new("cost_identity", ESTIMATE_TOL);
    let mut smoother_check = Check::new("smoother_vs_batch", ESTIMATE_TOL);
    let mut range_check = Check::new("range_membership", NORM_IDENTITY_TOL);
    let mut support_check = Check::new("support_function", ESTIMATE_TOL);

    if (steps + 1) * n > VERIFY_MAX_DIM {
        let msg = format!("stacked dimension {} exceeds {VERIFY_MAX_DIM}", (steps + 1) * n);
        for c in [&mut batch_check, &mut cost_check, &mut smoother_check, &mut range_check, &mut support_check] {
            c.fail(msg.clone());
        }
    } else {
        for h in horizons(steps) {
            let y = &traj.y[..=h];
            let state = match crate::observer::final_state(sys, y, r.tol) {
                Ok(s) => s,
                Err(e) => {
                    batch_check.fail(format!("N={h}: observer failed: {e}"));
                    continue;
                }
            };
            match batch_estimate(sys, y, h) {
                Ok(batch) => {
                    let projected = state.q_pinv().project(&batch.xhat[h]);
                    batch_check.residual(max_rel(&state.estimate(), &projected));
                    let recursion_cost = state.alpha() - state.q_pinv().apply(state.r()).dot(state.r());
                    cost_check.residual(rel(batch.cost, recursion_cost));
                    if h == steps {
                        match smoother_backward_error(sys, y, h, r.tol, &batch) {
                            Ok(res) => smoother_check.residual(res),
                            Err(e) => smoother_check.fail(format!("N={h}: {e}")),
                        }
                    }
                }
                Err(e) => {
                    batch_check.fail(format!("N={h}: batch failed: {e}"));
                    cost_check.fail(format!("N={h}: batch failed: {e}"));
                }
            }

            let stacked = match StackedRange::new(sys, h) {
                Ok(s) => s,
                Err(e) => {
                    range_check.fail(format!("N={h}: {e}"));
                    continue;
                }
            };
            for (j, l) in r.directions.iter().enumerate() {
                match stacked.membership(l) {
                    Ok(rm) => {
                        let finite = state.in_range(l);
                        range_check.details.push(format!("N={h} direction {}: member={}", j + 1, rm.member));
                        if rm.member != finite {
                            range_check.fail(format!(
                                "N={h} direction {}: oracle member={} observer finite={finite}",
                                j + 1,
                                rm.member
                            ));
                        } else if rm.member {
                            let spread = state.q_pinv().apply(l).dot(l);
                            range_check.residual((rm.norm_sq - spread).abs() / rm.norm_sq.abs().max(1.0));
                        }
                    }
                    Err(e) => range_check.fail(format!("N={h} direction {}: {e}", j + 1)),
                }
            }
        }

        let y = &traj.y[..];
        let beta = crate::observer::final_state(sys, y, r.tol).map(|s| s.beta());
        match beta {
            Ok(b) if b < INFEASIBLE_BETA => support_check.fail(format!("data infeasible, beta = {b:e}")),
            Err(e) => support_check.fail(e.to_string()),
            Ok(_) => {
                let state = crate::observer::final_state(sys, y, r.tol).expect("checked above");
                for (j, l) in r.directions.iter().enumerate() {
                    let neg = -l;
                    let result = (|| -> crate::Result<f64> {
                        let plus = support_function_direct(sys, y, steps, l)?;
                        let minus = support_function_direct(sys, y, steps, &neg)?;
                        let recursion = support_function_tol(sys, y, steps, l, r.tol)?;
                        let d = state.directional_error(l)?;
                        if !d.finite {
                            let ok = plus.value.is_infinite() && minus.value.is_infinite() && recursion.is_infinite();
                            return Ok(if ok { 0.0 } else { f64::INFINITY });
                        }
                        let width = rel(plus.value + minus.value, 2.0 * d.sigma);
                        let centre = rel(plus.value - minus.value, 2.0 * d.estimate_component);
                        let routes = rel(plus.value, recursion);
                        let on_boundary = rel(plus.constraint_at_maximizer, 1.0);
                        Ok(width.max(centre).max(routes).max(on_boundary))
                    })();
                    match result {
                        Ok(res) => support_check.residual(res),
                        Err(e) => support_check.fail(format!("direction {}: {e}", j + 1)),
                    }
                }
            }
        }
    }

    let checks = vec![batch_check, cost_check, smoother_check, range_check, support_check];
    VerifyReport {
        system: r.name.clone(),
        steps,
        seed: r.seed,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    }
}

/// Simulates, cross-checks and writes the report as JSON to `out`.
pub fn cmd_verify(r: &Resolved, out: &Path) -> Result<VerifyReport, CliError> {
    let (traj, _) = r.simulate()?;
    let report = verify_trajectory(r, &traj);
    write_json(out, &report)?;
    Ok(report)
}

/// Entry point for the binary: parses, runs, and maps errors to a single
/// `CODE: message` line with a nonzero status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("E_USAGE: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for l in lines {
                let _ = writeln!(lock, "{l}");
            }
            0
        }
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("{}: {message}", e.code());
            1
        }
    }
}
