//! Numerical bifurcation analysis for equilibria of an age-structured
//! population with quasilinear (density-dependent) diffusion:
//!
//! ```text
//! d_a u - div(d(U) grad u) + mu(U, a) u = 0,      0 < a < a_max
//! u(0, x) = lambda * int_0^{a_max} b(U, a) u(a, x) da
//! d_nu u = 0 on the boundary,       U(x) = int_0^{a_max} u(a, x) da
//! ```
//!
//! The positive branch bifurcates from the trivial branch `(lambda, 0)` at
//! `lambda_0 = 1 / r(Q(0))` and is traced by pseudo-arclength continuation
//! on the age-zero trace `v = u(0, .)`.

// Negated comparisons deliberately reject NaN; index loops follow the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod export;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod solver;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
pub use model::{
    build_grid, total_population, AgeSpaceField, Coefficients, ContinuationParams, Grid,
    JacobianMode, LambdaBound, ModelSpec, SpatialField, Tolerances,
};
pub use operators::{
    assemble_elliptic, assemble_q, birth_functional, evolve, DenseOperator, EllipticOperator,
    Propagator,
};
pub use solver::{
    branch_invariant_check, continue_branch, full_residual, jacobian, newton_correct,
    quasilinear_march, reduced_residual, Branch, BranchPoint, Constraint, Diagnostics,
    Termination,
};
pub use spectral::{
    bifurcation_point, check_simplicity, perron_eigenpair, BifurcationPoint, PerronOptions,
    PerronResult, SimplicityCertificate,
};
pub use validate::{kernel_dimension, simulate_transient, transversality_check, TransientState};
