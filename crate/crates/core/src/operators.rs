//! Discrete quasilinear generator, age evolution, birth functional and the
//! next-generation operator `Q(u)`.
//!
//! The elliptic part is the conservative three-point stencil of
//! `-(d(U) w_x)_x + mu(U, a) w` with zero-flux (ghost reflection) closure.
//! Age evolution is implicit Euler, so every step is an M-matrix solve and
//! nonnegative data stay nonnegative.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_spatial, total_population, AgeSpaceField, Grid, ModelSpec, SpatialField};

/// Tridiagonal operator acting on spatial fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl EllipticOperator {
    /// Assembles `-(d w_x)_x + r w` from face values `faces[i] = d_{i+1/2}`.
    /// Boundary rows use the mirrored ghost node.
    pub fn from_faces(faces: &[f64], reaction: &[f64], dx: f64) -> Self {
        let n = reaction.len();
        debug_assert_eq!(faces.len(), n - 1);
        let s = 1.0 / (dx * dx);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];

        upper[0] = -2.0 * s * faces[0];
        diag[0] = 2.0 * s * faces[0] + reaction[0];
        for i in 1..n - 1 {
            lower[i] = -s * faces[i - 1];
            upper[i] = -s * faces[i];
            diag[i] = s * (faces[i - 1] + faces[i]) + reaction[i];
        }
        lower[n - 1] = -2.0 * s * faces[n - 2];
        diag[n - 1] = 2.0 * s * faces[n - 2] + reaction[n - 1];

        Self { lower, diag, upper }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Sub-diagonal; entry 0 is unused and zero.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Super-diagonal; the last entry is unused and zero.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        self.apply_into(w, &mut out);
        out
    }

    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut acc = self.diag[i] * w[i];
            if i > 0 {
                acc += self.lower[i] * w[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * w[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[i]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                0.0
            }
        })
    }
}

fn face_diffusivities(frozen: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
    let d = frozen
        .iter()
        .map(|&z| spec.coefficients.diffusivity(z))
        .collect::<Result<Vec<_>>>()?;
    Ok(d.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

fn reaction(frozen: &[f64], a: f64, spec: &ModelSpec) -> Result<Vec<f64>> {
    frozen.iter().map(|&z| spec.coefficients.death(z, a)).collect()
}

/// `A(u, a) = -div(d(U) grad) + mu(U, a)` frozen at the density `frozen = U`.
pub fn assemble_elliptic(
    frozen: &SpatialField,
    a: f64,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<EllipticOperator> {
    check_spatial(frozen, grid)?;
    if !frozen.is_finite() {
        return Err(Error::NonFinite("assemble_elliptic"));
    }
    let faces = face_diffusivities(frozen, spec)?;
    Ok(EllipticOperator::from_faces(&faces, &reaction(frozen, a, spec)?, grid.dx))
}

/// Directional derivative `A_u(u)[phi]` where `d_frozen` is the density of
/// the direction `phi`: diffusivity `d'(U) dU` and reaction `mu_z(U, a) dU`.
pub fn assemble_elliptic_derivative(
    frozen: &SpatialField,
    d_frozen: &[f64],
    a: f64,
    spec: &ModelSpec,
    grid: &Grid,
) -> EllipticOperator {
    let c = &spec.coefficients;
    let dd: Vec<f64> = frozen
        .iter()
        .zip(d_frozen)
        .map(|(&z, &dz)| c.diffusivity_prime(z) * dz)
        .collect();
    let faces: Vec<f64> = dd.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let r: Vec<f64> = frozen
        .iter()
        .zip(d_frozen)
        .map(|(&z, &dz)| c.death_z(z, a) * dz)
        .collect();
    EllipticOperator::from_faces(&faces, &r, grid.dx)
}

/// Thomas factorization of `I + da A_k`.
#[derive(Debug, Clone)]
struct StepSolver {
    sub: Vec<f64>,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl StepSolver {
    fn new(op: &EllipticOperator, da: f64, step: usize) -> Result<Self> {
        let n = op.n();
        let sub: Vec<f64> = op.lower().iter().map(|l| da * l).collect();
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = 1.0 + da * op.diag()[i] - sub[i] * prev_c;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::SingularSolve { step, row: i, pivot });
            }
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = da * op.upper()[i] * inv_pivot[i];
            prev_c = c_prime[i];
        }
        Ok(Self {
            sub,
            c_prime,
            inv_pivot,
        })
    }

    /// Solves in place.
    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let mut prev = 0.0;
        for i in 0..n {
            let v = (rhs[i] - self.sub[i] * prev) * self.inv_pivot[i];
            rhs[i] = v;
            prev = v;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

/// Pre-factorized implicit-Euler age march for a frozen density `U`.
///
/// `evolve` realizes `T[u](f, w0)`; with `f = 0` it is the evolution
/// operator `Pi_u(., 0) w0`.
#[derive(Debug, Clone)]
pub struct Propagator {
    steps: Vec<StepSolver>,
    da: f64,
    n_x: usize,
}

impl Propagator {
    pub fn new(frozen: &SpatialField, spec: &ModelSpec, grid: &Grid) -> Result<Self> {
        check_spatial(frozen, grid)?;
        if !frozen.is_finite() {
            return Err(Error::NonFinite("propagator density"));
        }
        let faces = face_diffusivities(frozen, spec)?;
        let steps = (1..grid.a_nodes.len())
            .map(|k| {
                let op = EllipticOperator::from_faces(
                    &faces,
                    &reaction(frozen, grid.a_nodes[k], spec)?,
                    grid.dx,
                );
                StepSolver::new(&op, grid.da, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            steps,
            da: grid.da,
            n_x: grid.n_x(),
        })
    }

    /// `(I + da A_k) w_k = w_{k-1} + da f_k` for `k = 1..n_a`, `w_0 = w0`.
    pub fn evolve(&self, w0: &[f64], forcing: Option<&AgeSpaceField>) -> AgeSpaceField {
        let mut out = AgeSpaceField::zeros(self.steps.len() + 1, self.n_x);
        out.row_mut(0).copy_from_slice(w0);
        for (idx, step) in self.steps.iter().enumerate() {
            let k = idx + 1;
            let (prev, cur) = out.as_mut_slice().split_at_mut(k * self.n_x);
            let cur = &mut cur[..self.n_x];
            cur.copy_from_slice(&prev[(k - 1) * self.n_x..]);
            if let Some(f) = forcing {
                for (c, fk) in cur.iter_mut().zip(f.row(k)) {
                    *c += self.da * fk;
                }
            }
            step.solve(cur);
        }
        out
    }

    /// One implicit step from `prev` at age index `k >= 1`.
    pub fn step(&self, k: usize, prev: &[f64]) -> Vec<f64> {
        let mut out = prev.to_vec();
        self.steps[k - 1].solve(&mut out);
        out
    }
}

/// Solves `d_a w + A(u, a) w = f`, `w(0) = w0` with `A` frozen at `U = frozen`.
pub fn evolve(
    frozen: &SpatialField,
    w0: &SpatialField,
    forcing: Option<&AgeSpaceField>,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<AgeSpaceField> {
    check_spatial(w0, grid)?;
    if !w0.is_finite() {
        return Err(Error::NonFinite("evolve initial trace"));
    }
    if let Some(f) = forcing {
        f.check_shape(grid)?;
    }
    Ok(Propagator::new(frozen, spec, grid)?.evolve(w0, forcing))
}

/// Age-quadrature weights times `b(V(x), a)`, ready to integrate fields.
#[derive(Debug, Clone)]
pub struct BirthKernel {
    weights: AgeSpaceField,
}

impl BirthKernel {
    pub fn new(density: &SpatialField, spec: &ModelSpec, grid: &Grid) -> Result<Self> {
        check_spatial(density, grid)?;
        let mut weights = AgeSpaceField::zeros_on(grid);
        for (k, (&a, &w)) in grid.a_nodes.iter().zip(&grid.age_weights).enumerate() {
            for (slot, &z) in weights.row_mut(k).iter_mut().zip(density.iter()) {
                *slot = w * spec.coefficients.birth(z, a)?;
            }
        }
        Ok(Self { weights })
    }

    /// `lambda * sum_k w_k b(V, a_k) u_k`, node-wise.
    pub fn apply(&self, u: &AgeSpaceField, lambda: f64) -> SpatialField {
        let mut out = vec![0.0; u.n_x()];
        for (wr, ur) in self.weights.rows().zip(u.rows()) {
            for ((o, w), v) in out.iter_mut().zip(wr).zip(ur) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= lambda);
        SpatialField(out)
    }
}

/// `lambda l(v) u = int_0^{a_max} lambda b(V, a) u(a) da` with `V` the density
/// defining the nonlinearity.
pub fn birth_functional(
    density: &SpatialField,
    u: &AgeSpaceField,
    lambda: f64,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<SpatialField> {
    u.check_shape(grid)?;
    Ok(BirthKernel::new(density, spec, grid)?.apply(u, lambda))
}

/// Dense square operator on spatial fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub DMatrix<f64>);

impl DenseOperator {
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Self {
        Self(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let n = columns.len();
        Self(DMatrix::from_fn(n, n, |i, j| columns[j][i]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|j| (0..n).map(|i| self.0[(i, j)] * v[i]).sum())
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `Q(u) = l(u) T[u](0, .)`, assembled column by column through the age march.
pub fn assemble_q(u: &AgeSpaceField, spec: &ModelSpec, grid: &Grid) -> Result<DenseOperator> {
    let density = total_population(u, grid)?;
    assemble_q_frozen(&density, spec, grid)
}

/// `Q` for a given density `U` (`U = 0` gives `Q(0)`).
pub fn assemble_q_frozen(
    density: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
) -> Result<DenseOperator> {
    let prop = Propagator::new(density, spec, grid)?;
    let kernel = BirthKernel::new(density, spec, grid)?;
    let n = grid.n_x();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            kernel.apply(&prop.evolve(&e, None), 1.0).into_inner()
        })
        .collect();
    let q = DenseOperator::from_columns(&columns);
    if !q.is_finite() {
        return Err(Error::NonFinite("assemble_q"));
    }
    Ok(q)
}
