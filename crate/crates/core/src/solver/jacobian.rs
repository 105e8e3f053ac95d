//! Linearization of the trace residual `R(lambda, v) = v - lambda B(v)` with
//! `B(v) = l(u[v]) u[v]`.
//!
//! Two independent routes: forward differences through the fixed-point
//! reconstruction, and the exact derivative of the discrete march. The
//! analytic route differentiates
//!
//! ```text
//! (I + da A_k(U)) du_k = du_{k-1} - da A_u(U)[dU] u_k,   du_0 = dv,
//! dU = sum_k w_k du_k
//! ```
//!
//! and closes the implicit coupling in `dU` with one dense solve.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{total_population, AgeSpaceField, Grid, JacobianMode, ModelSpec, SpatialField};
use crate::operators::{BirthKernel, DenseOperator, EllipticOperator, Propagator};

use super::residual::{births_of, reduced_residual_with, ReducedResidual};

/// `dR/dv` at `(lambda, v)` using the mode configured in `spec`.
pub fn jacobian(lambda: f64, v: &SpatialField, spec: &ModelSpec, grid: &Grid) -> Result<DenseOperator> {
    jacobian_with(lambda, v, spec, grid, spec.tolerances.jacobian)
}

pub fn jacobian_with(
    lambda: f64,
    v: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
    mode: JacobianMode,
) -> Result<DenseOperator> {
    let base = reduced_residual_with(lambda, v, spec, grid, None, fd_inner_tol(spec))?;
    let db = births_jacobian(v, &base, spec, grid, mode)?;
    Ok(residual_jacobian(lambda, &db))
}

/// `I - lambda dB/dv`.
pub(crate) fn residual_jacobian(lambda: f64, db: &DMatrix<f64>) -> DenseOperator {
    let n = db.nrows();
    DenseOperator(DMatrix::identity(n, n) - db * lambda)
}

/// Inner tolerance used when differencing through the reconstruction.
pub(crate) fn fd_inner_tol(spec: &ModelSpec) -> f64 {
    (1e-2 * spec.tolerances.inner_tol).max(1e-14)
}

pub(crate) fn births_jacobian(
    v: &SpatialField,
    base: &ReducedResidual,
    spec: &ModelSpec,
    grid: &Grid,
    mode: JacobianMode,
) -> Result<DMatrix<f64>> {
    match mode {
        JacobianMode::FiniteDifference => births_jacobian_fd(v, base, spec, grid),
        JacobianMode::Analytic => births_jacobian_analytic(&base.u, spec, grid),
    }
}

/// Forward differences, column step `fd_eps (1 + |v_j|)`.
fn births_jacobian_fd(
    v: &SpatialField,
    base: &ReducedResidual,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<DMatrix<f64>> {
    let n = grid.n_x();
    let tol = fd_inner_tol(spec);
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = spec.tolerances.fd_eps * (1.0 + v[j].abs());
            let mut vp = v.clone();
            vp[j] += h;
            let out = super::march::march_with_tol(&vp, spec, grid, Some(&base.u), tol)?;
            let bp = births_of(&out.u, spec, grid)?;
            Ok(bp.iter().zip(base.births.iter()).map(|(p, b)| (p - b) / h).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DenseOperator::from_columns(&columns).0)
}

/// Exact derivative of `B` for the discrete scheme at the reconstruction `u`.
pub(crate) fn births_jacobian_analytic(
    u: &AgeSpaceField,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<DMatrix<f64>> {
    let n = grid.n_x();
    let n_ages = grid.a_nodes.len();
    let c = &spec.coefficients;
    let density = total_population(u, grid)?;
    let prop = Propagator::new(&density, spec, grid)?;
    let kernel = BirthKernel::new(&density, spec, grid)?;

    let d_prime: Vec<f64> = density.iter().map(|&z| c.diffusivity_prime(z)).collect();
    let mut mu_z = AgeSpaceField::zeros_on(grid);
    for k in 0..n_ages {
        let a = grid.a_nodes[k];
        for (slot, &z) in mu_z.row_mut(k).iter_mut().zip(density.iter()) {
            *slot = c.death_z(z, a);
        }
    }

    // Per unit direction e_j: response to the trace (P) and to the density (M).
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let p = prop.evolve(&e, None);

            let mut faces = vec![0.0; n - 1];
            if j > 0 {
                faces[j - 1] = 0.5 * d_prime[j];
            }
            if j + 1 < n {
                faces[j] = 0.5 * d_prime[j];
            }
            let mut forcing = AgeSpaceField::zeros_on(grid);
            let mut reaction = vec![0.0; n];
            for k in 1..n_ages {
                reaction[j] = mu_z.row(k)[j];
                let deriv = EllipticOperator::from_faces(&faces, &reaction, grid.dx);
                let applied = deriv.apply(u.row(k));
                for (f, a) in forcing.row_mut(k).iter_mut().zip(&applied) {
                    *f = -a;
                }
            }
            let m = prop.evolve(&vec![0.0; n], Some(&forcing));

            let q_col = kernel.apply(&p, 1.0).into_inner();
            let g_col = total_population(&p, grid).map(SpatialField::into_inner);
            let bm_col = kernel.apply(&m, 1.0).into_inner();
            let h_col = total_population(&m, grid).map(SpatialField::into_inner);
            Ok((q_col, g_col?, bm_col, h_col?))
        })
        .collect::<Result<Vec<_>>>()?;

    let q = DMatrix::from_fn(n, n, |i, j| columns[j].0[i]);
    let g = DMatrix::from_fn(n, n, |i, j| columns[j].1[i]);
    let bm = DMatrix::from_fn(n, n, |i, j| columns[j].2[i]);
    let h = DMatrix::from_fn(n, n, |i, j| columns[j].3[i]);

    // Local density sensitivity of the birth modulus.
    let mut dz = vec![0.0; n];
    for k in 0..n_ages {
        let a = grid.a_nodes[k];
        let w = grid.age_weights[k];
        for i in 0..n {
            dz[i] += w * c.birth_z(density[i], a) * u.row(k)[i];
        }
    }

    let coupling = DMatrix::identity(n, n) - &h;
    let k_mat = coupling
        .lu()
        .solve(&g)
        .ok_or(Error::SingularLinearization)?;
    let mut outer = bm;
    for i in 0..n {
        outer[(i, i)] += dz[i];
    }
    Ok(q + outer * k_mat)
}
