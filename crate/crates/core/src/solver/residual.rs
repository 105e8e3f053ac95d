use crate::error::Result;
use crate::model::{total_population, AgeSpaceField, Grid, ModelSpec, SpatialField};
use crate::operators::{assemble_elliptic, evolve, BirthKernel};

use super::march::{march_with_tol, MarchOutcome};

/// Residual of the trace equation together with everything needed to
/// linearize it.
#[derive(Debug, Clone)]
pub struct ReducedResidual {
    /// `R(lambda, v) = v - lambda l(u[v]) u[v]`.
    pub residual: SpatialField,
    /// The reconstruction `u[v]`.
    pub u: AgeSpaceField,
    /// `l(u[v]) u[v]`, i.e. the births at `lambda = 1`; equals `-dR/dlambda`.
    pub births: SpatialField,
    pub inner_iters: usize,
}

pub fn reduced_residual(
    lambda: f64,
    v: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<ReducedResidual> {
    reduced_residual_with(lambda, v, spec, grid, None, spec.tolerances.inner_tol)
}

pub(crate) fn reduced_residual_with(
    lambda: f64,
    v: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
    guess: Option<&AgeSpaceField>,
    tol: f64,
) -> Result<ReducedResidual> {
    let MarchOutcome { u, iterations, .. } = march_with_tol(v, spec, grid, guess, tol)?;
    let births = births_of(&u, spec, grid)?;
    let residual = SpatialField(v.iter().zip(births.iter()).map(|(a, b)| a - lambda * b).collect());
    Ok(ReducedResidual {
        residual,
        u,
        births,
        inner_iters: iterations,
    })
}

pub(crate) fn births_of(u: &AgeSpaceField, spec: &ModelSpec, grid: &Grid) -> Result<SpatialField> {
    let density = total_population(u, grid)?;
    Ok(BirthKernel::new(&density, spec, grid)?.apply(u, 1.0))
}

/// `F(lambda, u) = u - S((A(0) - A(u)) u, lambda l(u) u)` on the full grid,
/// with `S` the age march of the linear operator `A(0)`.
///
/// Independent of the trace reduction; used as an oracle for it.
pub fn full_residual(
    lambda: f64,
    u: &AgeSpaceField,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<AgeSpaceField> {
    u.check_shape(grid)?;
    let density = total_population(u, grid)?;
    let zero = SpatialField::zeros(grid.n_x());

    let mut forcing = AgeSpaceField::zeros_on(grid);
    for k in 1..grid.a_nodes.len() {
        let a = grid.a_nodes[k];
        let linear = assemble_elliptic(&zero, a, spec, grid)?.apply(u.row(k));
        let frozen = assemble_elliptic(&density, a, spec, grid)?.apply(u.row(k));
        for ((f, l), q) in forcing.row_mut(k).iter_mut().zip(&linear).zip(&frozen) {
            *f = l - q;
        }
    }
    let newborns = BirthKernel::new(&density, spec, grid)?.apply(u, lambda);
    let image = evolve(&zero, &newborns, Some(&forcing), spec, grid)?;
    Ok(u.sub(&image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, Coefficients};
    use crate::operators::birth_functional;
    use crate::spectral::bifurcation_point;

    #[test]
    fn trivial_branch_and_no_birth() {
        let spec = ModelSpec::new(Coefficients::density_diffusion(0.5, 1.0, 1.0, 1.0, 2.0), 8, 20);
        let grid = build_grid(&spec).unwrap();
        for lambda in [-3.0, 0.0, 0.7, 12.0] {
            let r = reduced_residual(lambda, &SpatialField::zeros(8), &spec, &grid).unwrap();
            assert!(r.residual.iter().all(|&x| x == 0.0));
        }
        let v = SpatialField((0..8).map(|i| 0.1 * i as f64).collect());
        let r = reduced_residual(0.0, &v, &spec, &grid).unwrap();
        assert_eq!(r.residual, v);
    }

    #[test]
    fn eigen_identity_at_bifurcation_point() {
        let spec = ModelSpec::new(Coefficients::constant(0.5, 1.0, 1.0), 10, 40);
        let grid = build_grid(&spec).unwrap();
        let bif = bifurcation_point(&spec, &grid).unwrap();
        let r = reduced_residual(bif.lambda0, &bif.phi0, &spec, &grid).unwrap();
        assert!(r.residual.max_abs() <= 10.0 * spec.tolerances.eigen_tol * bif.phi0.max_abs());
    }

    #[test]
    fn full_residual_of_zero_and_linear_model() {
        let spec = ModelSpec::new(Coefficients::constant(0.8, 0.5, 1.5), 7, 15);
        let grid = build_grid(&spec).unwrap();
        let f0 = full_residual(2.0, &AgeSpaceField::zeros_on(&grid), &spec, &grid).unwrap();
        assert!(f0.as_slice().iter().all(|&x| x == 0.0));

        let u = AgeSpaceField::from_fn(&grid, |a, x| (1.0 + x * x) * (1.0 - 0.5 * a));
        let f = full_residual(2.0, &u, &spec, &grid).unwrap();
        let zero = SpatialField::zeros(7);
        let h = birth_functional(&zero, &u, 2.0, &spec, &grid).unwrap();
        let expected = u.sub(&evolve(&zero, &h, None, &spec, &grid).unwrap());
        assert!(f.sub(&expected).norm(grid.dx) < 1e-13);
    }

    #[test]
    fn full_residual_vanishes_on_reconstructed_trace_solutions() {
        // Any (lambda, v) with R = 0 gives F = 0; off-solution F's trace equals R.
        let spec = ModelSpec::new(Coefficients::density_diffusion(0.4, 1.5, 0.6, 0.8, 1.2), 9, 25);
        let grid = build_grid(&spec).unwrap();
        let v = SpatialField((0..9).map(|i| 0.5 + 0.2 * (i as f64).cos()).collect());
        let rr = reduced_residual(1.7, &v, &spec, &grid).unwrap();
        let f = full_residual(1.7, &rr.u, &spec, &grid).unwrap();
        for (a, b) in f.row(0).iter().zip(rr.residual.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
