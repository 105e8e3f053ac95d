use crate::error::{Error, Result};
use crate::model::{check_spatial, total_population, AgeSpaceField, Grid, ModelSpec, SpatialField};
use crate::operators::Propagator;

const MIN_RELAXATION: f64 = 1.0 / 64.0;

#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub u: AgeSpaceField,
    pub iterations: usize,
    /// Norm of the last fixed-point update `G(u) - u`.
    pub last_change: f64,
}

/// Reconstructs `u = T[u](0, v)` by damped fixed-point iteration on the
/// frozen density. The relaxation starts at 1 and is halved whenever an
/// update fails to contract.
pub fn quasilinear_march(
    v: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
    guess: Option<&AgeSpaceField>,
) -> Result<MarchOutcome> {
    march_with_tol(v, spec, grid, guess, spec.tolerances.inner_tol)
}

pub(crate) fn march_with_tol(
    v: &SpatialField,
    spec: &ModelSpec,
    grid: &Grid,
    guess: Option<&AgeSpaceField>,
    tol: f64,
) -> Result<MarchOutcome> {
    check_spatial(v, grid)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("march trace"));
    }
    let start = match guess {
        Some(g) => total_population(g, grid)?,
        None => SpatialField::zeros(grid.n_x()),
    };
    let mut u = Propagator::new(&start, spec, grid)?.evolve(v, None);

    let mut omega = 1.0;
    let mut prev_change = f64::INFINITY;
    let mut contraction = 0.0;
    let mut previous = u.clone();
    for it in 1..=spec.tolerances.max_inner {
        let density = total_population(&u, grid)?;
        let image = Propagator::new(&density, spec, grid)?.evolve(v, None);
        let change = image.sub(&u).norm(grid.dx);
        // Round-off floor for fields of large amplitude.
        let floor = 1e3 * f64::EPSILON * (1.0 + u.norm(grid.dx));
        if change <= tol || change <= floor {
            return Ok(MarchOutcome {
                u: image,
                iterations: it,
                last_change: change,
            });
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("quasilinear march"));
        }
        if prev_change.is_finite() {
            contraction = change / prev_change;
        }
        if change > prev_change {
            omega = f64::max(0.5 * omega, MIN_RELAXATION);
        }
        prev_change = change;
        previous = u.clone();
        u = u.blend(&image, omega);
    }
    Err(Error::MarchNotConverged {
        iterations: spec.tolerances.max_inner,
        last_change: prev_change,
        contraction,
        last_iterates: Box::new((previous, u)),
    })
}
