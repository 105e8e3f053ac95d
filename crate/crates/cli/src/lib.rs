//! Command-line driver. `run_command` is the whole program; `main` only
//! forwards the exit code.
//!
//! Exit codes: 0 success, 1 numerical failure (or a failed `verify`),
//! 2 continuation ended in a step failure, 3 continuation left the positive
//! cone, 4 configuration or usage error.

use std::fs;
use std::path::{Path, PathBuf};

use agebif::config::{CoefficientFamily, RunConfig};
use agebif::export::{
    fmt_f64, read_branch_csv, read_json, read_snapshot, snapshot_path, write_branch_csv, write_drift_csv,
    write_json, write_snapshots, BranchRow, BranchSummary, PointSnapshot,
};
use agebif::oracle::{homogeneous_point, lambda0_closed_form_constant, lambda0_scalar};
use agebif::validate::{transversality_check, TransversalityCertificate};
use agebif::{
    bifurcation_point, branch_invariant_check, build_grid, check_simplicity, continue_branch, kernel_dimension,
    simulate_transient, AgeSpaceField, BranchPoint, Error, Grid, ModelSpec, SimplicityCertificate, SpatialField,
    Termination,
};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_STEP_FAILURE: i32 = 2;
pub const EXIT_POSITIVITY: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Diagnostics reproduced by `verify` must match the stored ones to this.
const ROUND_TRIP_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "agebif", version, about = "Bifurcation analysis of age-structured equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies n_x and n_a.
    #[arg(long)]
    resolution_scale: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bifurcation point, Perron pair and simplicity certificate.
    Bifpoint(Common),
    /// Trace the positive branch from the bifurcation point.
    Continue(Common),
    /// Re-check a branch written by `continue` in the output directory.
    Verify(Common),
    /// Time-step the evolution problem and record the drift.
    Simulate(SimulateArgs),
    /// Scalar reductions for spatially homogeneous solutions.
    Oracle(Common),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Start from a branch snapshot (`point_NNNNN.json`).
    #[arg(long, conflicts_with = "field")]
    point: Option<PathBuf>,
    /// Start from a JSON array of age rows.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Bifurcation parameter; defaults to the snapshot's, else lambda_0.
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of steps; defaults to `simulate.steps` from the configuration.
    #[arg(long)]
    steps: Option<usize>,
}

/// Configuration as resolved for a run, stored next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunRecord {
    config: RunConfig,
    resolution_scale: usize,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the selected command.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Bifpoint(c) => bifpoint(&c),
        Command::Continue(c) => continue_cmd(&c),
        Command::Verify(c) => verify(&c),
        Command::Simulate(s) => simulate(&s),
        Command::Oracle(c) => oracle(&c),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(common: &Common) -> Result<RunRecord, Failure> {
    let path = match &common.config {
        Some(p) => p.clone(),
        None => {
            let stored = common.out.join("run.json");
            if !stored.exists() {
                return Err(fail(EXIT_CONFIG, "no --config given and no run.json in the output directory"));
            }
            let mut record: RunRecord = read_json(&stored).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
            record.config.validate()?;
            if let Some(k) = common.resolution_scale {
                record.resolution_scale = k;
            }
            if let Some(seed) = common.seed {
                record.config.seed = seed;
            }
            return Ok(record);
        }
    };
    let mut config = RunConfig::from_path(&path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let resolution_scale = common.resolution_scale.unwrap_or(1);
    if resolution_scale == 0 {
        return Err(fail(EXIT_CONFIG, "--resolution-scale must be >= 1"));
    }
    Ok(RunRecord {
        config,
        resolution_scale,
    })
}

fn setup(common: &Common) -> Result<(RunRecord, ModelSpec, Grid), Failure> {
    let record = load(common)?;
    let spec = record.config.model_spec(record.resolution_scale);
    let grid = build_grid(&spec).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    Ok((record, spec, grid))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| fail(EXIT_NUMERICAL, format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct EigenpairReport<'a> {
    lambda0: f64,
    r: f64,
    phi: &'a [f64],
    psi: &'a [f64],
    gap: f64,
    pairing: f64,
    iterations: usize,
    residual: f64,
    simplicity: SimplicityCertificate,
    transversality: TransversalityCertificate,
    closed_form_lambda0: Option<f64>,
}

fn bifpoint(common: &Common) -> CmdResult {
    let (record, spec, grid) = setup(common)?;
    let bif = bifurcation_point(&spec, &grid)?;
    let tol = &spec.tolerances;
    let cert = check_simplicity(&bif.perron, tol.simplicity_tol, tol.gap_tol);
    let trans = transversality_check(&spec, &grid)?;
    let closed_form = match record.config.model.coefficients {
        CoefficientFamily::Constant { mu0, b0, .. } => Some(lambda0_closed_form_constant(mu0, b0, spec.a_max)),
        _ => None,
    };

    println!("lambda0          {}", fmt_f64(bif.lambda0));
    if let Some(exact) = closed_form {
        println!("closed form      {}", fmt_f64(exact));
        println!("relative error   {}", fmt_f64((bif.lambda0 - exact).abs() / exact));
    }
    println!(
        "phi0             min {} max {}",
        fmt_f64(bif.phi0.min()),
        fmt_f64(bif.phi0.max_abs())
    );
    println!("gap              {}", fmt_f64(cert.gap));
    println!("pairing          {}", fmt_f64(cert.pairing));
    println!("simplicity       {}", if cert.pass { "pass" } else { "fail" });
    println!("transversality   {} (pairing {})", if trans.pass { "pass" } else { "fail" }, fmt_f64(trans.pairing));

    prepare_out(&common.out)?;
    let report = EigenpairReport {
        lambda0: bif.lambda0,
        r: bif.perron.r,
        phi: &bif.phi0,
        psi: &bif.psi0,
        gap: cert.gap,
        pairing: cert.pairing,
        iterations: bif.perron.iterations,
        residual: bif.perron.residual,
        simplicity: cert,
        transversality: trans,
        closed_form_lambda0: closed_form,
    };
    write_json(&common.out.join("eigenpair.json"), &report)?;
    Ok(if cert.pass { EXIT_OK } else { EXIT_NUMERICAL })
}

fn continue_cmd(common: &Common) -> CmdResult {
    let (record, spec, grid) = setup(common)?;
    let branch = continue_branch(&spec, &grid)?;
    prepare_out(&common.out)?;
    write_json(&common.out.join("run.json"), &record)?;
    write_branch_csv(&common.out.join("branch.csv"), &branch)?;
    let snapshots = common.out.join("snapshots");
    if snapshots.exists() {
        fs::remove_dir_all(&snapshots).map_err(|e| fail(EXIT_NUMERICAL, e.to_string()))?;
    }
    write_snapshots(&snapshots, &branch)?;
    write_json(
        &common.out.join("branch.json"),
        &BranchSummary::new(&branch, spec.n_x, spec.n_a),
    )?;

    println!("lambda0          {}", fmt_f64(branch.lambda0));
    println!("points           {}", branch.points.len());
    if let Some(last) = branch.points.last() {
        println!("last lambda      {}", fmt_f64(last.lambda));
        println!("last u_norm      {}", fmt_f64(last.diagnostics.u_norm));
    }
    println!("termination      {}", branch.termination);
    if let Some(msg) = &branch.failure {
        println!("failure          {msg}");
    }
    Ok(termination_exit_code(branch.termination))
}

pub fn termination_exit_code(t: Termination) -> i32 {
    match t {
        Termination::BoxLambda | Termination::BoxNorm | Termination::MaxPoints => EXIT_OK,
        Termination::StepFailure => EXIT_STEP_FAILURE,
        Termination::LeftPositiveCone => EXIT_POSITIVITY,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ROUND_TRIP_TOL * a.abs().max(b.abs()).max(1.0)
}

fn rows_match(a: &BranchRow, b: &BranchRow) -> bool {
    a.index == b.index
        && close(a.arclength, b.arclength)
        && close(a.lambda, b.lambda)
        && close(a.u_norm, b.u_norm)
        && close(a.min_u, b.min_u)
        && close(a.r_q_u, b.r_q_u)
        && close(a.residual_norm, b.residual_norm)
}

fn stored_point(snap: &PointSnapshot, u: &AgeSpaceField) -> BranchPoint {
    BranchPoint {
        lambda: snap.lambda,
        v: SpatialField(snap.v.clone()),
        u: u.clone(),
        arclength: snap.arclength,
        diagnostics: snap.diagnostics,
    }
}

fn verify(common: &Common) -> CmdResult {
    let (_, spec, grid) = setup(common)?;
    let rows = read_branch_csv(&common.out.join("branch.csv"))?;
    let snapshots = common.out.join("snapshots");
    let mut all = true;

    for row in &rows {
        let snap: PointSnapshot = read_snapshot(&snapshot_path(&snapshots, row.index))?;
        if snap.v.len() != grid.n_x() {
            return Err(fail(
                EXIT_CONFIG,
                format!("snapshot {} has {} nodes, model has {}", row.index, snap.v.len(), grid.n_x()),
            ));
        }
        let pt = BranchPoint::reconstruct(
            snap.lambda,
            SpatialField(snap.v.clone()),
            snap.arclength,
            snap.diagnostics.newton_iters,
            &spec,
            &grid,
        )?;
        let again = BranchRow::from_point(row.index, &pt);
        let stored_u = AgeSpaceField::from_rows(snap.u.clone())?;
        let stored = BranchRow::from_point(row.index, &stored_point(&snap, &stored_u));
        let round_trip = rows_match(&again, row)
            && rows_match(&again, &stored)
            && pt.diagnostics.inner_iters == snap.diagnostics.inner_iters
            && pt.u.sub(&stored_u).as_slice().iter().all(|d| d.abs() <= ROUND_TRIP_TOL);
        let inv = branch_invariant_check(&pt, &spec, &grid);
        let ok = round_trip && inv.pass;
        all &= ok;
        println!(
            "point {:>5}  lambda {}  |lambda r - 1| {}  |F| {}  min_u {}  round-trip {}  {}",
            row.index,
            fmt_f64(pt.lambda),
            fmt_f64(inv.lambda_r_minus_one),
            fmt_f64(inv.full_residual_norm),
            fmt_f64(inv.min_u),
            if round_trip { "ok" } else { "MISMATCH" },
            if ok { "pass" } else { "FAIL" }
        );
    }

    let bif = bifurcation_point(&spec, &grid)?;
    let kernel = kernel_dimension(bif.lambda0, &SpatialField::zeros(grid.n_x()), &spec, &grid)?;
    let kernel_ok = kernel.dim == 1 && kernel.agree;
    let trans = transversality_check(&spec, &grid)?;
    all &= kernel_ok && trans.pass;
    println!(
        "kernel at (lambda0, 0)  dim {} / {}  {}",
        kernel.dim,
        kernel.dim_q,
        if kernel_ok { "pass" } else { "FAIL" }
    );
    println!(
        "transversality          pairing {}  {}",
        fmt_f64(trans.pairing),
        if trans.pass { "pass" } else { "FAIL" }
    );
    println!("verify {} ({} points)", if all { "pass" } else { "FAIL" }, rows.len());
    Ok(if all { EXIT_OK } else { EXIT_NUMERICAL })
}

fn simulate(args: &SimulateArgs) -> CmdResult {
    let (record, spec, grid) = setup(&args.common)?;
    let (u0, stored_lambda) = if let Some(p) = &args.point {
        let snap = read_snapshot(p)?;
        (AgeSpaceField::from_rows(snap.u)?, Some(snap.lambda))
    } else if let Some(p) = &args.field {
        let rows: Vec<Vec<f64>> = read_json(p)?;
        (AgeSpaceField::from_rows(rows)?, None)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(record.config.seed);
        (AgeSpaceField::from_fn(&grid, |_, _| rng.random_range(0.0..1.0)), None)
    };
    u0.check_shape(&grid).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    let lambda = match args.lambda.or(stored_lambda) {
        Some(l) => l,
        None => bifurcation_point(&spec, &grid)?.lambda0,
    };
    let steps = args.steps.unwrap_or(record.config.simulate.steps);

    let state = simulate_transient(&u0, lambda, steps, &spec, &grid)?;
    prepare_out(&args.common.out)?;
    write_drift_csv(&args.common.out.join("drift.csv"), &state, grid.da)?;
    println!("lambda           {}", fmt_f64(lambda));
    println!("steps            {steps}");
    println!("t                {}", fmt_f64(state.t));
    println!("final drift      {}", fmt_f64(state.drift_history.last().copied().unwrap_or(0.0)));
    println!("cumulative drift {}", fmt_f64(state.cumulative_drift(&u0, grid.dx)));
    println!(
        "min entry        {}",
        fmt_f64(state.min_history.iter().copied().fold(u0.min(), f64::min))
    );
    Ok(EXIT_OK)
}

fn oracle(common: &Common) -> CmdResult {
    let (record, spec, grid) = setup(common)?;
    let scalar = lambda0_scalar(&spec, &grid)?;
    let perron = bifurcation_point(&spec, &grid)?.lambda0;
    println!("lambda0 scalar   {}", fmt_f64(scalar));
    println!("lambda0 perron   {}", fmt_f64(perron));
    if let CoefficientFamily::Constant { mu0, b0, .. } = record.config.model.coefficients {
        println!("closed form      {}", fmt_f64(lambda0_closed_form_constant(mu0, b0, spec.a_max)));
    }

    // Homogeneous branch up to the continuation norm bound.
    let width = spec.x_max - spec.x_min;
    let v_max = spec.continuation.u_norm_max / width.sqrt();
    let samples = 41;
    prepare_out(&common.out)?;
    let path = common.out.join("oracle.csv");
    let mut text = String::from("v,density,lambda\n");
    for i in 0..samples {
        let v = v_max * i as f64 / (samples - 1) as f64;
        let p = homogeneous_point(v, &spec, &grid)?;
        text.push_str(&format!("{},{},{}\n", fmt_f64(p.v), fmt_f64(p.density), fmt_f64(p.lambda)));
    }
    fs::write(&path, text).map_err(|e| fail(EXIT_NUMERICAL, format!("{}: {e}", path.display())))?;
    println!("homogeneous branch: {samples} samples written to {}", path.display());
    Ok(EXIT_OK)
}
