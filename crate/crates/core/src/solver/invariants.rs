use serde::{Deserialize, Serialize};

use crate::model::{Grid, ModelSpec};
use crate::operators::assemble_q;
use crate::spectral::{perron_eigenpair, PerronOptions};

use super::newton::BranchPoint;
use super::residual::full_residual;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub lambda_r_minus_one: f64,
    pub r: f64,
    pub min_u: f64,
    pub full_residual_norm: f64,
    /// The point lies on the trivial branch; the eigen identity does not apply.
    pub trivial: bool,
    pub pass: bool,
}

/// Checks `lambda r(Q(u)) = 1`, positivity of `u` and the full-grid residual.
/// Never errors: any numerical failure yields a failing report.
pub fn branch_invariant_check(pt: &BranchPoint, spec: &ModelSpec, grid: &Grid) -> InvariantReport {
    let tol = &spec.tolerances;
    let r = assemble_q(&pt.u, spec, grid)
        .and_then(|q| perron_eigenpair(&q, &PerronOptions::for_model(spec, grid)))
        .map(|res| res.r)
        .unwrap_or(f64::NAN);
    let full = full_residual(pt.lambda, &pt.u, spec, grid)
        .map(|f| f.norm(grid.dx))
        .unwrap_or(f64::NAN);
    let min_u = pt.u.min();
    let trivial = pt.v.max_abs() == 0.0;
    let lambda_r_minus_one = (pt.lambda * r - 1.0).abs();

    let positive = min_u >= -tol.pos_tol;
    let residual_ok = full <= 10.0 * tol.newton_tol;
    let eigen_ok = lambda_r_minus_one <= tol.invariant_tol;
    InvariantReport {
        lambda_r_minus_one,
        r,
        min_u,
        full_residual_norm: full,
        trivial,
        pass: !trivial && positive && residual_ok && eigen_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, Coefficients, SpatialField};
    use crate::solver::newton::{newton_correct, Constraint};
    use crate::spectral::bifurcation_point;

    #[test]
    fn trivial_point_reports_lambda_over_lambda0() {
        let spec = ModelSpec::new(Coefficients::logistic_death(1.0, 1.0, 1.0, 1.0), 8, 30);
        let grid = build_grid(&spec).unwrap();
        let bif = bifurcation_point(&spec, &grid).unwrap();
        let pt = BranchPoint::reconstruct(2.0, SpatialField::zeros(8), 0.0, 0, &spec, &grid).unwrap();
        let rep = branch_invariant_check(&pt, &spec, &grid);
        assert!(rep.trivial);
        assert!(!rep.pass);
        assert!((pt.lambda * rep.r - 2.0 / bif.lambda0).abs() < 1e-10);
    }

    #[test]
    fn accepted_point_passes_and_corrupted_point_fails() {
        let spec = ModelSpec::new(Coefficients::logistic_death(1.0, 1.0, 1.0, 1.0), 8, 30);
        let grid = build_grid(&spec).unwrap();
        let bif = bifurcation_point(&spec, &grid).unwrap();
        let start: SpatialField = bif.phi0.iter().map(|p| 0.5 * p).collect::<Vec<_>>().into();
        let c = Constraint::projection(&bif.psi0, grid.dx, 0.5);
        let pt = newton_correct(bif.lambda0, &start, &c, &spec, &grid).unwrap();
        let rep = branch_invariant_check(&pt, &spec, &grid);
        assert!(rep.pass, "{rep:?}");

        let bent: SpatialField = pt.v.iter().map(|x| 1.01 * x).collect::<Vec<_>>().into();
        let bad = BranchPoint::reconstruct(pt.lambda, bent, 0.0, 0, &spec, &grid).unwrap();
        assert!(!branch_invariant_check(&bad, &spec, &grid).pass);
    }
}
