//! Fixtures shared by the benchmarks.

use agebif::{build_grid, Coefficients, Grid, ModelSpec};

/// Logistic-death model on the unit square.
pub fn logistic(n_x: usize, n_a: usize) -> (ModelSpec, Grid) {
    let spec = ModelSpec::new(Coefficients::logistic_death(1.0, 1.0, 1.0, 1.0), n_x, n_a);
    let grid = build_grid(&spec).expect("valid grid");
    (spec, grid)
}

/// Density-dependent dispersal on the unit square.
pub fn density_diffusion(n_x: usize, n_a: usize) -> (ModelSpec, Grid) {
    let spec = ModelSpec::new(Coefficients::density_diffusion(0.5, 1.0, 1.0, 1.0, 1.0), n_x, n_a);
    let grid = build_grid(&spec).expect("valid grid");
    (spec, grid)
}
