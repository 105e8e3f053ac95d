//! Problem instance: coefficient functions, domain, grids and the discrete
//! fields every other module operates on.
//!
//! The unknown is a density `u(a, x)` on `[0, a_max] x [x_min, x_max]`. It is
//! stored row-major on the tensor grid with one row per age node.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type AgeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Relative step of the finite-difference fallback for coefficient derivatives.
const COEFF_FD_STEP: f64 = 1e-6;

/// Coefficients `d(z)`, `mu(z, a)` and `b(z, a)` of the equilibrium problem,
/// where `z` is the age-integrated density `U(x)`.
///
/// Derivatives in `z` are optional. When absent a central difference with
/// step `1e-6 (1 + |z|)` is used and [`Coefficients::uses_fd_derivatives`]
/// reports it.
#[derive(Clone)]
pub struct Coefficients {
    d: ScalarFn,
    d_prime: Option<ScalarFn>,
    d_lower: f64,
    mu: AgeFn,
    mu_z: Option<AgeFn>,
    b: AgeFn,
    b_z: Option<AgeFn>,
}

impl Coefficients {
    pub fn new(
        d_lower: f64,
        d: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            d: Arc::new(d),
            d_prime: None,
            d_lower,
            mu: Arc::new(mu),
            mu_z: None,
            b: Arc::new(b),
            b_z: None,
        }
    }

    pub fn with_d_prime(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d_prime = Some(Arc::new(f));
        self
    }

    pub fn with_mu_z(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.mu_z = Some(Arc::new(f));
        self
    }

    pub fn with_b_z(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.b_z = Some(Arc::new(f));
        self
    }

    /// `d = d0`, `mu = mu0`, `b = b0`: the linear model.
    pub fn constant(d0: f64, mu0: f64, b0: f64) -> Self {
        Self::new(d0, move |_| d0, move |_, _| mu0, move |_, _| b0)
            .with_d_prime(|_| 0.0)
            .with_mu_z(|_, _| 0.0)
            .with_b_z(|_, _| 0.0)
    }

    /// Crowding-induced mortality `mu = mu0 + kappa z` with constant `d`, `b`.
    pub fn logistic_death(d0: f64, mu0: f64, kappa: f64, b0: f64) -> Self {
        Self::new(d0, move |_| d0, move |z, _| mu0 + kappa * z, move |_, _| b0)
            .with_d_prime(|_| 0.0)
            .with_mu_z(move |_, _| kappa)
            .with_b_z(|_, _| 0.0)
    }

    /// Density-dependent dispersal `d = d0 + d1 z^2 / (1 + z^2)` on top of
    /// logistic death. `d0` is the lower bound of `d` for `d1 >= 0`.
    pub fn density_diffusion(d0: f64, d1: f64, mu0: f64, kappa: f64, b0: f64) -> Self {
        Self::new(
            d0,
            move |z| d0 + d1 * z * z / (1.0 + z * z),
            move |z, _| mu0 + kappa * z,
            move |_, _| b0,
        )
        .with_d_prime(move |z| {
            let s = 1.0 + z * z;
            2.0 * d1 * z / (s * s)
        })
        .with_mu_z(move |_, _| kappa)
        .with_b_z(|_, _| 0.0)
    }

    pub fn d_lower(&self) -> f64 {
        self.d_lower
    }

    /// True if at least one `z`-derivative falls back to finite differences.
    pub fn uses_fd_derivatives(&self) -> bool {
        self.d_prime.is_none() || self.mu_z.is_none() || self.b_z.is_none()
    }

    /// `d(z)`, rejecting values below the declared lower bound.
    pub fn diffusivity(&self, z: f64) -> Result<f64> {
        let value = (self.d)(z);
        if !(value >= self.d_lower) {
            return Err(Error::DiffusivityBelowBound {
                z,
                value,
                lower: self.d_lower,
            });
        }
        Ok(value)
    }

    pub fn death(&self, z: f64, a: f64) -> Result<f64> {
        nonnegative("mu", (self.mu)(z, a), z, a)
    }

    pub fn birth(&self, z: f64, a: f64) -> Result<f64> {
        nonnegative("b", (self.b)(z, a), z, a)
    }

    pub fn diffusivity_prime(&self, z: f64) -> f64 {
        match &self.d_prime {
            Some(f) => f(z),
            None => {
                let h = COEFF_FD_STEP * (1.0 + z.abs());
                ((self.d)(z + h) - (self.d)(z - h)) / (2.0 * h)
            }
        }
    }

    pub fn death_z(&self, z: f64, a: f64) -> f64 {
        match &self.mu_z {
            Some(f) => f(z, a),
            None => {
                let h = COEFF_FD_STEP * (1.0 + z.abs());
                ((self.mu)(z + h, a) - (self.mu)(z - h, a)) / (2.0 * h)
            }
        }
    }

    pub fn birth_z(&self, z: f64, a: f64) -> f64 {
        match &self.b_z {
            Some(f) => f(z, a),
            None => {
                let h = COEFF_FD_STEP * (1.0 + z.abs());
                ((self.b)(z + h, a) - (self.b)(z - h, a)) / (2.0 * h)
            }
        }
    }
}

fn nonnegative(name: &'static str, value: f64, z: f64, a: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NegativeCoefficient { name, z, a, value })
    }
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("d_lower", &self.d_lower)
            .field("fd_derivatives", &self.uses_fd_derivatives())
            .finish_non_exhaustive()
    }
}

/// How the reduced Jacobian is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    FiniteDifference,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub eigen_tol: f64,
    pub max_power_iter: usize,
    pub fd_eps: f64,
    pub simplicity_tol: f64,
    pub gap_tol: f64,
    pub rank_tol: f64,
    pub pos_tol: f64,
    /// Allowed `|lambda r(Q(u)) - 1|` at accepted branch points.
    pub invariant_tol: f64,
    pub jacobian: JacobianMode,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton: 20,
            inner_tol: 1e-11,
            max_inner: 1000,
            eigen_tol: 1e-12,
            max_power_iter: 20_000,
            fd_eps: 1e-7,
            simplicity_tol: 1e-8,
            gap_tol: 1e-6,
            rank_tol: 1e-8,
            pos_tol: 1e-12,
            invariant_tol: 1e-6,
            jacobian: JacobianMode::FiniteDifference,
        }
    }
}

/// Upper bound on the bifurcation parameter for the continuation box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaBound {
    Absolute(f64),
    /// Multiple of the bifurcation value `lambda_0`.
    Relative(f64),
}

impl LambdaBound {
    pub fn resolve(self, lambda0: f64) -> f64 {
        match self {
            LambdaBound::Absolute(v) => v,
            LambdaBound::Relative(f) => f * lambda0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationParams {
    /// Amplitude of the first predictor `(lambda_0, t0 Phi_0)`.
    pub t0: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub lambda_max: LambdaBound,
    pub u_norm_max: f64,
    pub max_points: usize,
    /// Weight of `d lambda` in the arclength metric; `dv` has unit weight.
    pub lambda_weight: f64,
}

impl Default for ContinuationParams {
    fn default() -> Self {
        Self {
            t0: 1e-2,
            initial_step: 0.05,
            min_step: 1e-6,
            max_step: 0.2,
            lambda_max: LambdaBound::Relative(2.0),
            u_norm_max: 10.0,
            max_points: 200,
            lambda_weight: 1.0,
        }
    }
}

/// One problem instance.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub a_max: f64,
    pub n_x: usize,
    pub n_a: usize,
    pub coefficients: Coefficients,
    pub tolerances: Tolerances,
    pub continuation: ContinuationParams,
}

impl ModelSpec {
    /// Unit interval in space and age with default tolerances.
    pub fn new(coefficients: Coefficients, n_x: usize, n_a: usize) -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            a_max: 1.0,
            n_x,
            n_a,
            coefficients,
            tolerances: Tolerances::default(),
            continuation: ContinuationParams::default(),
        }
    }

    /// Multiplies both resolutions by `k`.
    pub fn scaled(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.n_x *= k;
        s.n_a *= k;
        s
    }

    /// Checks `b(0, a) >= 0` on the age grid and that it is not identically zero.
    pub fn check_birth_at_origin(&self, grid: &Grid) -> Result<()> {
        let mut any = false;
        for &a in &grid.a_nodes {
            any |= self.coefficients.birth(0.0, a)? > 0.0;
        }
        if any {
            Ok(())
        } else {
            Err(Error::ZeroBirthAtOrigin)
        }
    }
}

/// Uniform tensor grid with trapezoidal weights in age and space.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x_nodes: Vec<f64>,
    pub dx: f64,
    pub a_nodes: Vec<f64>,
    pub da: f64,
    pub age_weights: Vec<f64>,
    pub x_weights: Vec<f64>,
}

impl Grid {
    pub fn n_x(&self) -> usize {
        self.x_nodes.len()
    }

    /// Number of age steps; there are `n_a + 1` age nodes.
    pub fn n_a(&self) -> usize {
        self.a_nodes.len() - 1
    }

    /// Spatial trapezoidal integral.
    pub fn integrate_x(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.x_weights).map(|(v, w)| v * w).sum()
    }
}

pub fn build_grid(spec: &ModelSpec) -> Result<Grid> {
    if spec.n_x < 3 {
        return Err(Error::InvalidModel(format!("n_x = {} < 3", spec.n_x)));
    }
    if spec.n_a < 2 {
        return Err(Error::InvalidModel(format!("n_a = {} < 2", spec.n_a)));
    }
    if !(spec.a_max > 0.0) || !spec.a_max.is_finite() {
        return Err(Error::InvalidModel(format!("a_max = {} must be positive", spec.a_max)));
    }
    if !(spec.x_max > spec.x_min) || !spec.x_min.is_finite() || !spec.x_max.is_finite() {
        return Err(Error::InvalidModel(format!(
            "empty spatial interval [{}, {}]",
            spec.x_min, spec.x_max
        )));
    }
    if !(spec.coefficients.d_lower() > 0.0) {
        return Err(Error::InvalidModel(format!(
            "diffusivity lower bound {} must be positive",
            spec.coefficients.d_lower()
        )));
    }

    let len = spec.x_max - spec.x_min;
    let dx = len / (spec.n_x - 1) as f64;
    let mut x_nodes: Vec<f64> = (0..spec.n_x).map(|i| spec.x_min + i as f64 * dx).collect();
    x_nodes[spec.n_x - 1] = spec.x_max;

    let da = spec.a_max / spec.n_a as f64;
    let mut a_nodes: Vec<f64> = (0..=spec.n_a).map(|k| k as f64 * da).collect();
    a_nodes[spec.n_a] = spec.a_max;

    Ok(Grid {
        x_weights: trapezoid_weights(spec.n_x, dx),
        age_weights: trapezoid_weights(spec.n_a + 1, da),
        x_nodes,
        dx,
        a_nodes,
        da,
    })
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Function of `x` alone: traces `u(0, .)`, densities `U`, eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpatialField(pub Vec<f64>);

impl SpatialField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `sqrt(dx) * ||f||_2`.
    pub fn norm(&self, dx: f64) -> f64 {
        weighted_norm(&self.0, dx)
    }

    pub fn dot(&self, other: &[f64], dx: f64) -> f64 {
        dx * self.0.iter().zip(other).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for SpatialField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for SpatialField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for SpatialField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn weighted_norm(v: &[f64], dx: f64) -> f64 {
    (dx * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// `u(a_k, x_i)` stored row-major: row `k` is the solution at age node `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSpaceField {
    n_ages: usize,
    n_x: usize,
    values: Vec<f64>,
}

impl AgeSpaceField {
    pub fn zeros(n_ages: usize, n_x: usize) -> Self {
        Self {
            n_ages,
            n_x,
            values: vec![0.0; n_ages * n_x],
        }
    }

    pub fn zeros_on(grid: &Grid) -> Self {
        Self::zeros(grid.a_nodes.len(), grid.n_x())
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros_on(grid);
        for (k, &a) in grid.a_nodes.iter().enumerate() {
            for (i, &x) in grid.x_nodes.iter().enumerate() {
                out.row_mut(k)[i] = f(a, x);
            }
        }
        out
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_ages = rows.len();
        let n_x = rows.first().map_or(0, Vec::len);
        if n_ages == 0 || rows.iter().any(|r| r.len() != n_x) {
            return Err(Error::ShapeMismatch {
                expected: "non-empty rectangular rows".into(),
                actual: format!("{n_ages} ragged rows"),
            });
        }
        Ok(Self {
            n_ages,
            n_x,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_ages(&self) -> usize {
        self.n_ages
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_x..(k + 1) * self.n_x]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_x..(k + 1) * self.n_x]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_x)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn trace(&self) -> SpatialField {
        SpatialField(self.row(0).to_vec())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max over age rows of the `sqrt(dx)`-scaled spatial l2 norm.
    pub fn norm(&self, dx: f64) -> f64 {
        self.rows().map(|r| weighted_norm(r, dx)).fold(0.0, f64::max)
    }

    /// `self - other`, shapes assumed equal.
    pub fn sub(&self, other: &AgeSpaceField) -> AgeSpaceField {
        debug_assert_eq!(self.values.len(), other.values.len());
        AgeSpaceField {
            n_ages: self.n_ages,
            n_x: self.n_x,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    /// `(1 - w) self + w other`.
    pub fn blend(&self, other: &AgeSpaceField, w: f64) -> AgeSpaceField {
        AgeSpaceField {
            n_ages: self.n_ages,
            n_x: self.n_x,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        }
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        if self.n_ages != grid.a_nodes.len() || self.n_x != grid.n_x() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", grid.a_nodes.len(), grid.n_x()),
                actual: format!("{} x {}", self.n_ages, self.n_x),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_spatial(f: &[f64], grid: &Grid) -> Result<()> {
    if f.len() != grid.n_x() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} spatial nodes", grid.n_x()),
            actual: format!("{}", f.len()),
        });
    }
    Ok(())
}

/// Age-integrated density `U(x)` by the trapezoidal rule in age.
pub fn total_population(u: &AgeSpaceField, grid: &Grid) -> Result<SpatialField> {
    u.check_shape(grid)?;
    let mut total = vec![0.0; grid.n_x()];
    for (row, &w) in u.rows().zip(&grid.age_weights) {
        for (t, v) in total.iter_mut().zip(row) {
            *t += w * v;
        }
    }
    Ok(SpatialField(total))
}
