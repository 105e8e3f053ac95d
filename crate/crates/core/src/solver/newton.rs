use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgeSpaceField, Grid, ModelSpec, SpatialField};
use crate::operators::assemble_q;
use crate::spectral::{perron_eigenpair, PerronOptions};

use super::jacobian::{births_jacobian, fd_inner_tol, residual_jacobian};
use super::residual::{reduced_residual, reduced_residual_with};

/// Bordered systems with a larger condition estimate are reported as singular.
const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual_norm: f64,
    pub min_u: f64,
    pub u_norm: f64,
    pub r_of_q_u: f64,
    pub newton_iters: usize,
    pub inner_iters: usize,
}

/// A converged solution `(lambda, u)` with its trace `v = u(0, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub lambda: f64,
    pub v: SpatialField,
    pub u: AgeSpaceField,
    pub arclength: f64,
    pub diagnostics: Diagnostics,
}

impl BranchPoint {
    /// Re-derives `u` and all diagnostics from `(lambda, v)` alone.
    pub fn reconstruct(
        lambda: f64,
        v: SpatialField,
        arclength: f64,
        newton_iters: usize,
        spec: &ModelSpec,
        grid: &Grid,
    ) -> Result<Self> {
        let rr = reduced_residual(lambda, &v, spec, grid)?;
        let q = assemble_q(&rr.u, spec, grid)?;
        let r = perron_eigenpair(&q, &PerronOptions::for_model(spec, grid))?.r;
        Ok(Self {
            diagnostics: Diagnostics {
                residual_norm: rr.residual.norm(grid.dx),
                min_u: rr.u.min(),
                u_norm: rr.u.norm(grid.dx),
                r_of_q_u: r,
                newton_iters,
                inner_iters: rr.inner_iters,
            },
            lambda,
            v,
            u: rr.u,
            arclength,
        })
    }
}

/// Affine functional `c_lambda * lambda + <c_v, v> = target` closing the
/// bordered system. `c_v` carries any quadrature weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub c_lambda: f64,
    pub c_v: Vec<f64>,
    pub target: f64,
}

impl Constraint {
    pub fn fixed_lambda(n: usize, lambda: f64) -> Self {
        Self {
            c_lambda: 1.0,
            c_v: vec![0.0; n],
            target: lambda,
        }
    }

    /// `dx <psi, v> = target`.
    pub fn projection(psi: &[f64], dx: f64, target: f64) -> Self {
        Self {
            c_lambda: 0.0,
            c_v: psi.iter().map(|p| dx * p).collect(),
            target,
        }
    }

    pub fn eval(&self, lambda: f64, v: &[f64]) -> f64 {
        self.c_lambda * lambda + self.c_v.iter().zip(v).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// Newton on `[R(lambda, v) = 0; constraint(lambda, v) = target]`.
///
/// Converges when both the residual norm and the last step norm are below
/// `newton_tol`.
pub fn newton_correct(
    lambda: f64,
    v: &SpatialField,
    constraint: &Constraint,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<BranchPoint> {
    let tol = spec.tolerances.newton_tol;
    let n = grid.n_x();
    let mut lambda = lambda;
    let mut v = v.clone();
    let mut last_step = f64::INFINITY;
    let mut residual_norm = f64::INFINITY;

    for iter in 0..=spec.tolerances.max_newton {
        let eval = reduced_residual(lambda, &v, spec, grid)?;
        residual_norm = eval.residual.norm(grid.dx);
        let gap = constraint.eval(lambda, &v) - constraint.target;
        if residual_norm <= tol && last_step <= tol && gap.abs() <= tol * constraint.target.abs().max(1.0) {
            return BranchPoint::reconstruct(lambda, v, 0.0, iter, spec, grid);
        }
        if iter == spec.tolerances.max_newton || !residual_norm.is_finite() {
            break;
        }

        // Differences go through a tighter reconstruction than the residual.
        let base = reduced_residual_with(lambda, &v, spec, grid, Some(&eval.u), fd_inner_tol(spec))?;
        let db = births_jacobian(&v, &base, spec, grid, spec.tolerances.jacobian)?;
        let jv = residual_jacobian(lambda, &db);

        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(jv.matrix());
        for i in 0..n {
            m[(i, n)] = -eval.births[i];
            m[(n, i)] = constraint.c_v[i];
        }
        m[(n, n)] = constraint.c_lambda;
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -eval.residual[i];
        }
        rhs[n] = -gap;

        let svd = m.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularBorderedSystem { condition });
        }
        let step = svd
            .solve(&rhs, 0.0)
            .map_err(|_| Error::SingularBorderedSystem { condition })?;

        for i in 0..n {
            v[i] += step[i];
        }
        lambda += step[n];
        let dv: Vec<f64> = step.iter().take(n).copied().collect();
        last_step = (step[n].powi(2) + grid.dx * dv.iter().map(|x| x * x).sum::<f64>()).sqrt();
    }
    Err(Error::NewtonNotConverged {
        iterations: spec.tolerances.max_newton,
        residual: residual_norm,
    })
}
