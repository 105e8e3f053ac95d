//! Independent checks on computed equilibria: time stepping of the
//! evolution problem, kernel dimensions and the transversality pairing.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{total_population, AgeSpaceField, Grid, ModelSpec, SpatialField};
use crate::operators::{assemble_elliptic, assemble_q, BirthKernel, DenseOperator, Propagator};
use crate::solver::{births_jacobian_analytic, quasilinear_march};
use crate::spectral::bifurcation_point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientState {
    pub t: f64,
    pub field: AgeSpaceField,
    /// `||u^{n+1} - u^n|| / ||u^0||` per step.
    pub drift_history: Vec<f64>,
    /// Minimum entry after each step.
    pub min_history: Vec<f64>,
    /// `da sum_k int u_k dx`, starting with the initial field.
    pub cohort_mass_history: Vec<f64>,
}

impl TransientState {
    /// `||u^n - u^0|| / ||u^0||`, zero for a zero start.
    pub fn cumulative_drift(&self, u0: &AgeSpaceField, dx: f64) -> f64 {
        let base = u0.norm(dx);
        if base == 0.0 {
            0.0
        } else {
            self.field.sub(u0).norm(dx) / base
        }
    }
}

fn cohort_mass(u: &AgeSpaceField, grid: &Grid) -> f64 {
    grid.da * u.rows().map(|r| grid.integrate_x(r)).sum::<f64>()
}

/// Steps the time-dependent problem with `dt = da`, so that each cohort moves
/// one age node per step. Each step freezes the density of the previous
/// field, solves one implicit diffusion-death step per age row, and fills the
/// newborn row from the renewal integral of the previous field.
pub fn simulate_transient(
    u0: &AgeSpaceField,
    lambda: f64,
    n_steps: usize,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<TransientState> {
    u0.check_shape(grid)?;
    let pos_tol = spec.tolerances.pos_tol;
    if u0.min() < -pos_tol {
        return Err(Error::PositivityViolation { min: u0.min() });
    }
    let scale = u0.norm(grid.dx);
    let mut field = u0.clone();
    let mut state = TransientState {
        t: 0.0,
        field: u0.clone(),
        drift_history: Vec::with_capacity(n_steps),
        min_history: Vec::with_capacity(n_steps),
        cohort_mass_history: vec![cohort_mass(u0, grid)],
    };

    for n in 1..=n_steps {
        let density = total_population(&field, grid)?;
        let prop = Propagator::new(&density, spec, grid)?;
        let newborns = BirthKernel::new(&density, spec, grid)?.apply(&field, lambda);
        let mut next = AgeSpaceField::zeros_on(grid);
        next.row_mut(0).copy_from_slice(&newborns);
        for k in 1..grid.n_a() + 1 {
            let row = prop.step(k, field.row(k - 1));
            next.row_mut(k).copy_from_slice(&row);
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("transient step"));
        }
        let min = next.min();
        if min < -pos_tol {
            return Err(Error::PositivityViolation { min });
        }
        let drift = if scale > 0.0 { next.sub(&field).norm(grid.dx) / scale } else { 0.0 };
        state.drift_history.push(drift);
        state.min_history.push(min);
        state.cohort_mass_history.push(cohort_mass(&next, grid));
        state.t = n as f64 * grid.da;
        field = next;
    }
    state.field = field;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    /// Kernel dimension of the reduced Jacobian `I - lambda dB/dv`.
    pub dim: usize,
    /// Singular values of the reduced Jacobian, descending.
    pub singular_values: Vec<f64>,
    /// Kernel dimension of `I - lambda Q(u)`.
    pub dim_q: usize,
    pub singular_values_q: Vec<f64>,
    pub agree: bool,
}

fn numerical_rank_deficiency(m: DMatrix<f64>, rank_tol: f64) -> (usize, Vec<f64>) {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let cut = rank_tol * s.first().copied().unwrap_or(0.0);
    (s.iter().filter(|&&x| x <= cut).count(), s)
}

/// Kernel dimensions of the reduced Jacobian and of `I - lambda Q(u[v])` by SVD.
/// Both counts use singular values at most `rank_tol` times the largest.
pub fn kernel_dimension(lambda: f64, v: &SpatialField, spec: &ModelSpec, grid: &Grid) -> Result<KernelReport> {
    let n = grid.n_x();
    let u = quasilinear_march(v, spec, grid, None)?.u;
    let rank_tol = spec.tolerances.rank_tol;

    let db = births_jacobian_analytic(&u, spec, grid)?;
    let (dim, singular_values) = numerical_rank_deficiency(DMatrix::identity(n, n) - db * lambda, rank_tol);
    let q = assemble_q(&u, spec, grid)?;
    let (dim_q, singular_values_q) = numerical_rank_deficiency(DMatrix::identity(n, n) - q.0 * lambda, rank_tol);
    Ok(KernelReport {
        dim,
        singular_values,
        dim_q,
        singular_values_q,
        agree: dim == dim_q,
    })
}

/// Kernel dimension of the frozen full-grid operator
/// `w -> w - S((A(0) - A(u)) w, lambda l(u) w)` on all `(n_a + 1) n_x`
/// unknowns, together with that of `I - lambda Q(u)`.
///
/// Dense; meant for small grids.
pub fn frozen_kernel_dimension(
    lambda: f64,
    u: &AgeSpaceField,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<(usize, usize)> {
    u.check_shape(grid)?;
    let (n_x, n_ages) = (grid.n_x(), grid.n_a() + 1);
    let size = n_x * n_ages;
    let density = total_population(u, grid)?;
    let zero = SpatialField::zeros(n_x);
    let linear = Propagator::new(&zero, spec, grid)?;
    let kernel = BirthKernel::new(&density, spec, grid)?;
    let mut gaps = Vec::with_capacity(n_ages);
    for &a in &grid.a_nodes {
        let a0 = assemble_elliptic(&zero, a, spec, grid)?.to_dense();
        let au = assemble_elliptic(&density, a, spec, grid)?.to_dense();
        gaps.push(a0 - au);
    }

    let columns: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|col| {
            let mut w = AgeSpaceField::zeros(n_ages, n_x);
            w.as_mut_slice()[col] = 1.0;
            let mut forcing = AgeSpaceField::zeros(n_ages, n_x);
            for k in 1..n_ages {
                let f = &gaps[k] * nalgebra::DVector::from_column_slice(w.row(k));
                forcing.row_mut(k).copy_from_slice(f.as_slice());
            }
            let image = linear.evolve(&kernel.apply(&w, lambda), Some(&forcing));
            w.sub(&image).as_slice().to_vec()
        })
        .collect();
    let full = DenseOperator::from_columns(&columns).0;
    let (dim_full, _) = numerical_rank_deficiency(full, spec.tolerances.rank_tol);

    let q = assemble_q(u, spec, grid)?;
    let (dim_q, _) = numerical_rank_deficiency(DMatrix::identity(n_x, n_x) - q.0 * lambda, spec.tolerances.rank_tol);
    Ok((dim_full, dim_q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityCertificate {
    /// Cosine between the adjoint and direct null vectors.
    pub pairing: f64,
    pub sigma_min: f64,
    pub sigma_second: f64,
    pub sigma_max: f64,
    pub kernel_dim: usize,
    pub pass: bool,
}

/// Transversality at `(lambda_0, 0)`: the null vectors of `I - lambda_0 Q(0)`
/// and of its adjoint must not be orthogonal. The adjoint is taken in the
/// trapezoidal inner product of the spatial grid.
pub fn transversality_check(spec: &ModelSpec, grid: &Grid) -> Result<TransversalityCertificate> {
    let bif = bifurcation_point(spec, grid)?;
    let q0 = assemble_q(&AgeSpaceField::zeros_on(grid), spec, grid)?;
    Ok(transversality_weighted(
        &q0,
        bif.perron.r,
        &grid.x_weights,
        spec.tolerances.rank_tol,
        spec.tolerances.simplicity_tol,
    ))
}

/// Same certificate for `I - Q / r` in the Euclidean inner product, with the
/// eigenvalue `r` supplied by the caller.
pub fn transversality_of_operator(
    q: &DenseOperator,
    r: f64,
    rank_tol: f64,
    simplicity_tol: f64,
) -> TransversalityCertificate {
    transversality_weighted(q, r, &vec![1.0; q.n()], rank_tol, simplicity_tol)
}

fn transversality_weighted(
    q: &DenseOperator,
    r: f64,
    weights: &[f64],
    rank_tol: f64,
    simplicity_tol: f64,
) -> TransversalityCertificate {
    let n = q.n();
    let m = DMatrix::identity(n, n) - q.matrix() / r;
    let svd = m.svd(true, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let imin = order[0];
    let sigma_max = sv[order[n - 1]];
    let sigma_second = if n > 1 { sv[order[1]] } else { sigma_max };

    let (left, right) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u.column(imin).into_owned(), v_t.row(imin).transpose()),
        _ => unreachable!("singular vectors were requested"),
    };
    // With psi = W^{-1} left: <psi, right>_W = left . right.
    let psi_norm = left.iter().zip(weights).map(|(l, w)| l * l / w).sum::<f64>().sqrt();
    let phi_norm = right.iter().zip(weights).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
    let pairing = left.dot(&right).abs() / (psi_norm * phi_norm);
    let cut = rank_tol * sigma_max;
    let kernel_dim = sv.iter().filter(|&&s| s <= cut).count();
    TransversalityCertificate {
        pairing,
        sigma_min: sv[imin],
        sigma_second,
        sigma_max,
        kernel_dim,
        pass: kernel_dim == 1 && pairing > simplicity_tol,
    }
}
