//! Scalar reductions for spatially homogeneous equilibria.
//!
//! When the coefficients do not depend on `x`, a constant trace `v` gives a
//! constant solution and the whole problem collapses to scalar recurrences:
//!
//! ```text
//! s_0 = 1,  s_k = s_{k-1} / (1 + da mu(U, a_k))
//! U = v sum_k w_k s_k(U),    lambda = 1 / sum_k w_k b(U, a_k) s_k(U)
//! ```
//!
//! These never touch the spatial operators and serve as independent checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, ModelSpec};

/// Discrete survival `s_k(U)` of the implicit age march.
pub fn survival(density: f64, spec: &ModelSpec, grid: &Grid) -> Result<Vec<f64>> {
    let mut s = Vec::with_capacity(grid.a_nodes.len());
    s.push(1.0);
    for &a in &grid.a_nodes[1..] {
        let prev = *s.last().unwrap_or(&1.0);
        s.push(prev / (1.0 + grid.da * spec.coefficients.death(density, a)?));
    }
    Ok(s)
}

/// `sum_k w_k b(U, a_k) s_k(U)`, the net reproduction number at `lambda = 1`.
pub fn generation_integral(density: f64, spec: &ModelSpec, grid: &Grid) -> Result<f64> {
    let s = survival(density, spec, grid)?;
    let mut total = 0.0;
    for (k, &a) in grid.a_nodes.iter().enumerate() {
        total += grid.age_weights[k] * spec.coefficients.birth(density, a)? * s[k];
    }
    Ok(total)
}

/// `lambda` at which the homogeneous state with density `U` is an equilibrium.
pub fn lambda_for_density(density: f64, spec: &ModelSpec, grid: &Grid) -> Result<f64> {
    let g = generation_integral(density, spec, grid)?;
    if g <= 0.0 {
        return Err(Error::NoPositiveEigenvalue(g));
    }
    Ok(1.0 / g)
}

/// Discrete `lambda_0` of the scalar reduction.
pub fn lambda0_scalar(spec: &ModelSpec, grid: &Grid) -> Result<f64> {
    lambda_for_density(0.0, spec, grid)
}

/// Continuum limit `mu0 / (b0 (1 - exp(-mu0 a_max)))` for constant coefficients.
pub fn lambda0_closed_form_constant(mu0: f64, b0: f64, a_max: f64) -> f64 {
    if mu0 == 0.0 {
        1.0 / (b0 * a_max)
    } else {
        mu0 / (b0 * (1.0 - (-mu0 * a_max).exp()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousPoint {
    /// Constant trace value.
    pub v: f64,
    /// Constant density `U`.
    pub density: f64,
    pub lambda: f64,
}

/// Solves `U = v sum_k w_k s_k(U)` by bisection and returns the matching
/// `lambda`. Requires a death rate nondecreasing in the density.
pub fn homogeneous_point(v: f64, spec: &ModelSpec, grid: &Grid) -> Result<HomogeneousPoint> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidModel(format!("trace amplitude {v} must be finite and >= 0")));
    }
    let excess = |z: f64| -> Result<f64> {
        let s = survival(z, spec, grid)?;
        let mass: f64 = s.iter().zip(&grid.age_weights).map(|(s, w)| s * w).sum();
        Ok(z - v * mass)
    };
    // Survival is at most one, so U <= v a_max.
    let (mut lo, mut hi) = (0.0, v * spec.a_max);
    if excess(hi)? < 0.0 {
        return Err(Error::InvalidModel("density bracket failed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let density = 0.5 * (lo + hi);
    Ok(HomogeneousPoint {
        v,
        density,
        lambda: lambda_for_density(density, spec, grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, Coefficients};

    #[test]
    fn constant_coefficients_give_geometric_sum() {
        let spec = ModelSpec::new(Coefficients::constant(1.0, 1.0, 1.0), 4, 100);
        let grid = build_grid(&spec).unwrap();
        let expected: f64 = (0..=100)
            .map(|k| grid.age_weights[k] * (1.0 + grid.da).powi(-(k as i32)))
            .sum();
        assert!((lambda0_scalar(&spec, &grid).unwrap() - 1.0 / expected).abs() < 1e-14);
        let exact = lambda0_closed_form_constant(1.0, 1.0, 1.0);
        assert!((exact - 1.0 / (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((lambda0_scalar(&spec, &grid).unwrap() - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn homogeneous_point_solves_its_fixed_point() {
        let spec = ModelSpec::new(Coefficients::logistic_death(1.0, 1.0, 1.0, 1.0), 4, 50);
        let grid = build_grid(&spec).unwrap();
        let p = homogeneous_point(2.0, &spec, &grid).unwrap();
        let s = survival(p.density, &spec, &grid).unwrap();
        let mass: f64 = s.iter().zip(&grid.age_weights).map(|(s, w)| s * w).sum();
        assert!((p.density - 2.0 * mass).abs() < 1e-13);
        assert!(p.lambda > lambda0_scalar(&spec, &grid).unwrap());
        assert_eq!(homogeneous_point(0.0, &spec, &grid).unwrap().density, 0.0);
    }
}
