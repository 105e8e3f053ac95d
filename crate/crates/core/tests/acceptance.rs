//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use agebif::export::write_branch_csv;
use agebif::oracle::{lambda0_closed_form_constant, lambda_for_density};
use agebif::validate::transversality_check;
use agebif::{
    bifurcation_point, branch_invariant_check, build_grid, check_simplicity, continue_branch,
    full_residual, kernel_dimension, simulate_transient, total_population, AgeSpaceField, Branch,
    Coefficients, Grid, ModelSpec, SpatialField, Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn constant_model(n_a: usize) -> (ModelSpec, Grid) {
    let spec = ModelSpec::new(Coefficients::constant(1.0, 1.0, 1.0), 32, n_a);
    let grid = build_grid(&spec).unwrap();
    (spec, grid)
}

fn logistic_model() -> (ModelSpec, Grid) {
    let spec = ModelSpec::new(Coefficients::logistic_death(1.0, 1.0, 1.0, 1.0), 32, 100);
    let grid = build_grid(&spec).unwrap();
    (spec, grid)
}

fn angle_degrees(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

fn closed_form_bifurcation() -> Outcome {
    let start = Instant::now();
    let exact = lambda0_closed_form_constant(1.0, 1.0, 1.0);
    let errors: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n_a| {
            let (spec, grid) = constant_model(n_a);
            (bifurcation_point(&spec, &grid).unwrap().lambda0 - exact).abs() / exact
        })
        .collect();
    let elapsed = start.elapsed();
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let pass = ratios.iter().all(|r| (1.6..=2.4).contains(r))
        && errors[2] <= 5e-3
        && elapsed <= Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "rel errors {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3}, {:.2?}",
            errors[0], errors[1], errors[2], ratios[0], ratios[1], elapsed
        ),
    )
}

fn perron_structure() -> Outcome {
    let (spec, grid) = constant_model(100);
    let bif = bifurcation_point(&spec, &grid).unwrap();
    let dev = bif.phi0.iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max);
    let cert = check_simplicity(&bif.perron, spec.tolerances.simplicity_tol, spec.tolerances.gap_tol);
    outcome(
        dev <= 1e-8 && cert.pass && cert.gap >= 0.1,
        format!("|phi - 1|max {dev:.3e}, gap {:.4}, pairing {:.6}", cert.gap, cert.pairing),
    )
}

fn scalar_branch_oracle(branch: &Branch, spec: &ModelSpec, grid: &Grid, elapsed: Duration) -> Outcome {
    let mut worst_lambda: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    for pt in &branch.points {
        let density = total_population(&pt.u, grid).unwrap();
        let (lo, hi) = density.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &z| (l.min(z), h.max(z)));
        worst_spread = worst_spread.max(hi - lo);
        let mean = density.iter().sum::<f64>() / density.len() as f64;
        let oracle = lambda_for_density(mean, spec, grid).unwrap();
        worst_lambda = worst_lambda.max((pt.lambda - oracle).abs() / oracle);
    }
    let reached_box = matches!(branch.termination, Termination::BoxLambda | Termination::BoxNorm);
    let pass = worst_lambda <= 1e-6
        && worst_spread <= 1e-8
        && reached_box
        && branch.points.len() >= 20
        && elapsed <= Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} points, termination {}, max rel lambda err {worst_lambda:.3e}, max U spread {worst_spread:.3e}, {elapsed:.2?}",
            branch.points.len(),
            branch.termination
        ),
    )
}

fn tangent_property() -> Outcome {
    let (mut spec, grid) = logistic_model();
    let bif = bifurcation_point(&spec, &grid).unwrap();
    let mut angles = Vec::new();
    for t0 in [1e-2, 1e-3] {
        spec.continuation.t0 = t0;
        spec.continuation.max_points = 1;
        let branch = continue_branch(&spec, &grid).unwrap();
        angles.push(match branch.points.first() {
            Some(pt) => angle_degrees(&pt.v, &bif.phi0),
            None => f64::NAN,
        });
    }
    outcome(
        angles[0] <= 5.0 && angles[1] <= 1.0,
        format!("angle {:.3e} deg at t0 = 1e-2, {:.3e} deg at t0 = 1e-3", angles[0], angles[1]),
    )
}

fn branch_invariant(branch: &Branch, spec: &ModelSpec, grid: &Grid) -> Outcome {
    let worst = branch
        .points
        .iter()
        .map(|pt| branch_invariant_check(pt, spec, grid).lambda_r_minus_one)
        .fold(0.0, f64::max);
    outcome(
        !branch.points.is_empty() && worst <= 1e-6,
        format!("max |lambda r(Q(u)) - 1| = {worst:.3e}"),
    )
}

fn oracle_equivalence(branch: &Branch, spec: &ModelSpec, grid: &Grid) -> Outcome {
    let worst = branch
        .points
        .iter()
        .map(|pt| full_residual(pt.lambda, &pt.u, spec, grid).unwrap().norm(grid.dx))
        .fold(0.0, f64::max);
    let bound = 10.0 * spec.tolerances.newton_tol;
    outcome(
        !branch.points.is_empty() && worst <= bound,
        format!("max full-grid residual {worst:.3e} (bound {bound:.1e})"),
    )
}

fn kernel_structure() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, (spec, grid)) in [("constant", constant_model(100)), ("logistic", logistic_model())] {
        let bif = bifurcation_point(&spec, &grid).unwrap();
        let rep = kernel_dimension(bif.lambda0, &SpatialField::zeros(grid.n_x()), &spec, &grid).unwrap();
        let cert = transversality_check(&spec, &grid).unwrap();
        pass &= rep.dim == 1 && rep.dim_q == 1 && cert.pairing >= 1e-8;
        let s = &rep.singular_values;
        parts.push(format!(
            "{name}: dim {} / {}, sigma_min/sigma_max {:.2e}, next {:.2e}, pairing {:.6}",
            rep.dim,
            rep.dim_q,
            s[s.len() - 1] / s[0],
            s[s.len() - 2] / s[0],
            cert.pairing
        ));
    }
    outcome(pass, parts.join("; "))
}

struct TransientSummary {
    min_entry: f64,
    max_drift: f64,
    failures: Vec<String>,
}

fn transients(branch: &Branch, spec: &ModelSpec, grid: &Grid) -> TransientSummary {
    let mut summary = TransientSummary {
        min_entry: f64::INFINITY,
        max_drift: 0.0,
        failures: Vec::new(),
    };
    for (i, pt) in branch.points.iter().enumerate() {
        match simulate_transient(&pt.u, pt.lambda, 100, spec, grid) {
            Ok(st) => {
                summary.min_entry = st.min_history.iter().copied().fold(summary.min_entry, f64::min);
                summary.max_drift = summary.max_drift.max(st.cumulative_drift(&pt.u, grid.dx));
            }
            Err(e) => summary.failures.push(format!("point {i}: {e}")),
        }
    }
    // Nonnegative random data below, at and above criticality.
    let bif = bifurcation_point(spec, grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for factor in [0.5, 1.0, 2.0] {
        let u0 = AgeSpaceField::from_fn(grid, |_, _| rng.random_range(0.0..1.0));
        match simulate_transient(&u0, factor * bif.lambda0, 100, spec, grid) {
            Ok(st) => summary.min_entry = st.min_history.iter().copied().fold(summary.min_entry, f64::min),
            Err(e) => summary.failures.push(format!("random start at {factor} lambda_0: {e}")),
        }
    }
    summary
}

fn positivity(branch: &Branch, summary: &TransientSummary) -> Outcome {
    let branch_min = branch.points.iter().map(|p| p.diagnostics.min_u).fold(f64::INFINITY, f64::min);
    outcome(
        branch_min >= -1e-12 && summary.min_entry >= -1e-12 && summary.failures.is_empty(),
        format!(
            "min u on branch {branch_min:.3e}, min over transients {:.3e}{}",
            summary.min_entry,
            if summary.failures.is_empty() { String::new() } else { format!(", errors: {}", summary.failures.join("; ")) }
        ),
    )
}

fn steadiness(branch: &Branch, summary: &TransientSummary) -> Outcome {
    outcome(
        !branch.points.is_empty() && summary.max_drift <= 1e-4 && summary.failures.is_empty(),
        format!("max relative drift over 100 steps {:.3e}", summary.max_drift),
    )
}

fn determinism(first: &Branch) -> Outcome {
    let (spec, grid) = logistic_model();
    let second = continue_branch(&spec, &grid).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_branch_csv(&a, first).unwrap();
    write_branch_csv(&b, &second).unwrap();
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    outcome(
        ba == bb && !ba.is_empty(),
        format!("{} bytes, identical = {}", ba.len(), ba == bb),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("closed-form bifurcation point", closed_form_bifurcation()));
    results.push(("Perron structure", perron_structure()));

    let (spec, grid) = logistic_model();
    let start = Instant::now();
    let branch = continue_branch(&spec, &grid).unwrap();
    let elapsed = start.elapsed();
    results.push(("scalar-branch oracle", scalar_branch_oracle(&branch, &spec, &grid, elapsed)));
    results.push(("tangent property", tangent_property()));
    results.push(("branch invariant", branch_invariant(&branch, &spec, &grid)));
    results.push(("oracle equivalence", oracle_equivalence(&branch, &spec, &grid)));
    results.push(("kernel structure", kernel_structure()));
    let summary = transients(&branch, &spec, &grid);
    results.push(("positivity", positivity(&branch, &summary)));
    results.push(("steadiness", steadiness(&branch, &summary)));
    results.push(("determinism", determinism(&branch)));

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {:<30} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
