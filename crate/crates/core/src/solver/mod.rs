//! Trace-reduced equilibrium problem: residual, linearization, Newton
//! correction and pseudo-arclength continuation.

mod continuation;
mod invariants;
mod jacobian;
mod march;
mod newton;
mod residual;

pub use continuation::{continue_branch, continue_from, Branch, Tangent, Termination};
pub use invariants::{branch_invariant_check, InvariantReport};
pub use jacobian::{jacobian, jacobian_with};
pub use march::{quasilinear_march, MarchOutcome};
pub use newton::{newton_correct, BranchPoint, Constraint, Diagnostics};
pub use residual::{full_residual, reduced_residual, ReducedResidual};

pub(crate) use jacobian::births_jacobian_analytic;
