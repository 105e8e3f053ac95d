use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, ModelSpec, SpatialField};
use crate::spectral::{bifurcation_point, check_simplicity, BifurcationPoint};

use super::newton::{newton_correct, BranchPoint, Constraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BoxLambda,
    BoxNorm,
    StepFailure,
    MaxPoints,
    LeftPositiveCone,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BoxLambda => "box_lambda",
            Self::BoxNorm => "box_norm",
            Self::StepFailure => "step_failure",
            Self::MaxPoints => "max_points",
            Self::LeftPositiveCone => "left_positive_cone",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unit secant direction in the arclength metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub dlambda: f64,
    pub dv: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub lambda0: f64,
    /// Accepted points, ordered by arclength.
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    pub tangent_history: Vec<Tangent>,
    /// The converged point that triggered termination, if any.
    pub rejected: Option<BranchPoint>,
    /// Last corrector error when the run ended in a step failure.
    pub failure: Option<String>,
}

/// Traces the positive branch from `(lambda_0, 0)`.
///
/// Errors only when the bifurcation point cannot be computed or is not
/// simple; every other outcome is reported through `Branch::termination`.
pub fn continue_branch(spec: &ModelSpec, grid: &Grid) -> Result<Branch> {
    let bif = bifurcation_point(spec, grid)?;
    let cert = check_simplicity(&bif.perron, spec.tolerances.simplicity_tol, spec.tolerances.gap_tol);
    if !cert.pass {
        return Err(Error::NotSimple {
            pairing: cert.pairing,
            gap: cert.gap,
        });
    }
    Ok(continue_from(spec, grid, &bif))
}

struct State {
    lambda: f64,
    v: Vec<f64>,
}

fn distance(a: &State, b: &State, lw: f64, dx: f64) -> f64 {
    let dl = b.lambda - a.lambda;
    let dv: f64 = a.v.iter().zip(&b.v).map(|(x, y)| (y - x) * (y - x)).sum();
    (lw * dl * dl + dx * dv).sqrt()
}

/// Continuation from an already computed bifurcation point.
pub fn continue_from(spec: &ModelSpec, grid: &Grid, bif: &BifurcationPoint) -> Branch {
    let p = &spec.continuation;
    let tol = &spec.tolerances;
    let (dx, lw) = (grid.dx, p.lambda_weight);
    let lambda_max = p.lambda_max.resolve(bif.lambda0);

    let mut branch = Branch {
        lambda0: bif.lambda0,
        points: Vec::new(),
        termination: Termination::MaxPoints,
        tangent_history: Vec::new(),
        rejected: None,
        failure: None,
    };

    let mut prev = State {
        lambda: bif.lambda0,
        v: vec![0.0; grid.n_x()],
    };
    let mut arclength = 0.0;
    let mut step = p.initial_step;
    let mut tangent: Option<Tangent> = None;

    loop {
        if branch.points.len() >= p.max_points {
            branch.termination = Termination::MaxPoints;
            return branch;
        }

        let attempt = match &tangent {
            None => {
                // Leading-order tangent: v ~ t0 phi_0 at lambda_0.
                let v0: SpatialField = bif.phi0.iter().map(|x| p.t0 * x).collect::<Vec<_>>().into();
                let target = p.t0 * bif.psi0.dot(&bif.phi0, dx);
                let constraint = Constraint::projection(&bif.psi0, dx, target);
                newton_correct(bif.lambda0, &v0, &constraint, spec, grid)
            }
            Some(t) => {
                let lambda = prev.lambda + step * t.dlambda;
                let v: SpatialField = prev.v.iter().zip(&t.dv).map(|(x, d)| x + step * d).collect::<Vec<_>>().into();
                let c_v: Vec<f64> = t.dv.iter().map(|d| dx * d).collect();
                let c_lambda = lw * t.dlambda;
                let base = c_lambda * prev.lambda + c_v.iter().zip(&prev.v).map(|(c, x)| c * x).sum::<f64>();
                let constraint = Constraint {
                    c_lambda,
                    c_v,
                    target: base + step,
                };
                newton_correct(lambda, &v, &constraint, spec, grid)
            }
        };

        let mut pt = match attempt {
            Ok(pt) => pt,
            Err(e) => {
                // The first point has no step to shrink.
                if tangent.is_none() || 0.5 * step < p.min_step {
                    branch.termination = Termination::StepFailure;
                    branch.failure = Some(e.to_string());
                    return branch;
                }
                step *= 0.5;
                continue;
            }
        };

        let next = State {
            lambda: pt.lambda,
            v: pt.v.to_vec(),
        };
        let ds = distance(&prev, &next, lw, dx);
        arclength += ds;
        pt.arclength = arclength;

        let termination = if pt.diagnostics.min_u < -tol.pos_tol {
            Some(Termination::LeftPositiveCone)
        } else if pt.lambda > lambda_max {
            Some(Termination::BoxLambda)
        } else if pt.diagnostics.u_norm > p.u_norm_max {
            Some(Termination::BoxNorm)
        } else {
            None
        };
        if let Some(reason) = termination {
            branch.termination = reason;
            branch.rejected = Some(pt);
            return branch;
        }

        let t = Tangent {
            dlambda: (next.lambda - prev.lambda) / ds,
            dv: next.v.iter().zip(&prev.v).map(|(a, b)| (a - b) / ds).collect(),
        };
        if tangent.is_some() && pt.diagnostics.newton_iters <= 3 {
            step = (2.0 * step).min(p.max_step);
        }
        branch.tangent_history.push(t.clone());
        tangent = Some(t);
        branch.points.push(pt);
        prev = next;
    }
}
