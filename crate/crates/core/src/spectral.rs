//! Perron eigenpairs of nonnegative operators and the bifurcation point.
//!
//! `lambda_0` is the reciprocal of the spectral radius of `Q(0)`. The left
//! eigenvector is carried along because its pairing with the right one is
//! the discrete simplicity (and transversality) certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, ModelSpec, SpatialField};
use crate::operators::{assemble_q_frozen, DenseOperator};

/// Spectral radius estimates below this are treated as zero.
const RADIUS_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Uniform weight of the inner product used to normalize `psi`
    /// (the grid spacing for spatial operators).
    pub weight: f64,
}

impl PerronOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            weight: 1.0,
        }
    }

    pub fn for_model(spec: &ModelSpec, grid: &Grid) -> Self {
        Self {
            tol: spec.tolerances.eigen_tol,
            max_iter: spec.tolerances.max_power_iter,
            weight: grid.dx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronResult {
    /// Spectral radius estimate.
    pub r: f64,
    /// Right eigenvector, max entry 1.
    pub phi: SpatialField,
    /// Left eigenvector with `weight * <psi, phi> = 1` when that pairing is positive.
    pub psi: SpatialField,
    /// Cosine of the angle between `psi` and `phi`.
    pub pairing: f64,
    /// `|r - |mu_2|| / r` with `mu_2` estimated by deflated power iteration.
    pub gap: f64,
    pub second: f64,
    pub iterations: usize,
    pub residual: f64,
    pub phi_positive: bool,
}

struct PowerOutcome {
    r: f64,
    vector: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn power_iteration(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<PowerOutcome> {
    let mut x = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let y = apply(&x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("power iteration"));
        }
        let r = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(r > RADIUS_FLOOR) {
            return Err(Error::NoPositiveEigenvalue(r.max(0.0)));
        }
        residual = y
            .iter()
            .zip(&x)
            .fold(0.0, |m, (yi, xi)| f64::max(m, (yi - r * xi).abs()));
        if residual <= tol * r {
            return Ok(PowerOutcome {
                r,
                vector: x,
                iterations: it,
                residual,
            });
        }
        x = y.into_iter().map(|v| v / r).collect();
    }
    Err(Error::PerronNotConverged {
        iterations: max_iter,
        residual,
        last_iterate: x,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Magnitude of the dominant eigenvalue of `Q - r phi (w psi)^T`.
fn deflated_radius(q: &DenseOperator, r: f64, phi: &[f64], wpsi: &[f64], max_iter: usize) -> f64 {
    let n = q.n();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64 + 0.3).sin()).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    const WINDOW: usize = 16;
    let mut logs: Vec<f64> = Vec::new();
    for _ in 0..max_iter.clamp(2 * WINDOW, 4000) {
        let mut y = q.apply(&x);
        let c = r * dot(wpsi, &x);
        y.iter_mut().zip(phi).for_each(|(yi, pi)| *yi -= c * pi);
        let ny = norm2(&y);
        if !(ny > 1e-15 * r) {
            return 0.0;
        }
        logs.push(ny.ln());
        x = y.into_iter().map(|v| v / ny).collect();
        if logs.len() >= 2 * WINDOW {
            let m = logs.len();
            let recent: f64 = logs[m - WINDOW..].iter().sum::<f64>() / WINDOW as f64;
            let before: f64 = logs[m - 2 * WINDOW..m - WINDOW].iter().sum::<f64>() / WINDOW as f64;
            if (recent - before).abs() < 1e-10 {
                return recent.exp();
            }
        }
    }
    let m = logs.len();
    (logs[m - WINDOW..].iter().sum::<f64>() / WINDOW as f64).exp()
}

/// Perron pair of a nonnegative operator by power iteration from the
/// constant vector; the left vector comes from the transpose.
pub fn perron_eigenpair(q: &DenseOperator, opts: &PerronOptions) -> Result<PerronResult> {
    let n = q.n();
    if n == 0 {
        return Err(Error::NoPositiveEigenvalue(0.0));
    }
    let right = power_iteration(|x| q.apply(x), n, opts.tol, opts.max_iter)?;
    let left = power_iteration(|x| q.apply_transpose(x), n, opts.tol, opts.max_iter)?;

    let phi = right.vector;
    let mut psi = left.vector;
    let raw = dot(&psi, &phi);
    let pairing = raw / (norm2(&psi) * norm2(&phi));

    let (second, gap) = if raw > 0.0 {
        let scale = 1.0 / (opts.weight * raw);
        psi.iter_mut().for_each(|v| *v *= scale);
        let wpsi: Vec<f64> = psi.iter().map(|v| opts.weight * v).collect();
        let second = deflated_radius(q, right.r, &phi, &wpsi, opts.max_iter);
        (second, ((right.r - second) / right.r).abs())
    } else {
        (right.r, 0.0)
    };

    let phi_positive = phi.iter().all(|&v| v > 0.0);
    Ok(PerronResult {
        r: right.r,
        phi: SpatialField(phi),
        psi: SpatialField(psi),
        pairing,
        gap,
        second,
        iterations: right.iterations.max(left.iterations),
        residual: right.residual,
        phi_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplicityCertificate {
    pub pairing: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Algebraic simplicity: nonzero left/right pairing and a positive gap.
pub fn check_simplicity(res: &PerronResult, simplicity_tol: f64, gap_tol: f64) -> SimplicityCertificate {
    SimplicityCertificate {
        pairing: res.pairing,
        gap: res.gap,
        pass: res.pairing > simplicity_tol && res.gap > gap_tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub lambda0: f64,
    pub phi0: SpatialField,
    pub psi0: SpatialField,
    pub perron: PerronResult,
}

/// `lambda_0 = 1 / r(Q(0))` with `Phi_0`, `psi_0` the Perron pair of `Q(0)`.
pub fn bifurcation_point(spec: &ModelSpec, grid: &Grid) -> Result<BifurcationPoint> {
    spec.check_birth_at_origin(grid)?;
    let q0 = assemble_q_frozen(&SpatialField::zeros(grid.n_x()), spec, grid)?;
    let perron = perron_eigenpair(&q0, &PerronOptions::for_model(spec, grid))?;
    if let Some((index, &value)) = perron.phi.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositiveEigenvector { index, value });
    }
    Ok(BifurcationPoint {
        lambda0: 1.0 / perron.r,
        phi0: perron.phi.clone(),
        psi0: perron.psi.clone(),
        perron,
    })
}
