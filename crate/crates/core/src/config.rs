//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": {
//!     "n_x": 32, "n_a": 100,
//!     "coefficients": { "family": "logistic_death", "d0": 1, "mu0": 1, "kappa": 1, "b0": 1 }
//!   },
//!   "continuation": { "lambda_max": { "relative": 2.0 } },
//!   "seed": 7
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coefficients, ContinuationParams, LambdaBound, ModelSpec, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientFamily {
    Constant { d0: f64, mu0: f64, b0: f64 },
    LogisticDeath { d0: f64, mu0: f64, kappa: f64, b0: f64 },
    DensityDiffusion { d0: f64, d1: f64, mu0: f64, kappa: f64, b0: f64 },
}

impl CoefficientFamily {
    pub fn build(&self) -> Coefficients {
        match *self {
            Self::Constant { d0, mu0, b0 } => Coefficients::constant(d0, mu0, b0),
            Self::LogisticDeath { d0, mu0, kappa, b0 } => Coefficients::logistic_death(d0, mu0, kappa, b0),
            Self::DensityDiffusion { d0, d1, mu0, kappa, b0 } => {
                Coefficients::density_diffusion(d0, d1, mu0, kappa, b0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (d0, mu0, b0, kappa, d1) = match *self {
            Self::Constant { d0, mu0, b0 } => (d0, mu0, b0, 0.0, 0.0),
            Self::LogisticDeath { d0, mu0, kappa, b0 } => (d0, mu0, b0, kappa, 0.0),
            Self::DensityDiffusion { d0, d1, mu0, kappa, b0 } => (d0, mu0, b0, kappa, d1),
        };
        let checks = [
            ("d0", d0, d0 > 0.0, "> 0"),
            ("mu0", mu0, mu0 >= 0.0, ">= 0"),
            ("b0", b0, b0 > 0.0, "> 0"),
            ("kappa", kappa, kappa >= 0.0, ">= 0"),
            ("d1", d1, d1 >= 0.0, ">= 0"),
        ];
        for (name, value, ok, rule) in checks {
            if !value.is_finite() || !ok {
                return Err(Error::Config(format!("model.coefficients.{name} = {value} must be {rule}")));
            }
        }
        Ok(())
    }
}

fn default_x_max() -> f64 {
    1.0
}

fn default_a_max() -> f64 {
    1.0
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    pub n_x: usize,
    pub n_a: usize,
    pub coefficients: CoefficientFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { steps: default_steps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub continuation: ContinuationParams,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Parses and validates. Errors carry the line and column of the offending token.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {}", e.line(), e.column(), strip_position(&e)))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let bad = |msg: String| Err(Error::Config(msg));
        if m.n_x < 3 {
            return bad(format!("model.n_x = {} must be >= 3", m.n_x));
        }
        if m.n_a < 2 {
            return bad(format!("model.n_a = {} must be >= 2", m.n_a));
        }
        if !(m.x_max > m.x_min) || !m.x_min.is_finite() || !m.x_max.is_finite() {
            return bad(format!("model.x_max = {} must exceed model.x_min = {}", m.x_max, m.x_min));
        }
        if !(m.a_max > 0.0) || !m.a_max.is_finite() {
            return bad(format!("model.a_max = {} must be > 0", m.a_max));
        }
        m.coefficients.validate()?;

        let t = &self.tolerances;
        let positive = [
            ("newton_tol", t.newton_tol),
            ("inner_tol", t.inner_tol),
            ("eigen_tol", t.eigen_tol),
            ("fd_eps", t.fd_eps),
            ("simplicity_tol", t.simplicity_tol),
            ("gap_tol", t.gap_tol),
            ("rank_tol", t.rank_tol),
            ("invariant_tol", t.invariant_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("tolerances.{name} = {v} must be > 0"));
            }
        }
        if !(t.pos_tol >= 0.0) {
            return bad(format!("tolerances.pos_tol = {} must be >= 0", t.pos_tol));
        }
        for (name, v) in [("max_newton", t.max_newton), ("max_inner", t.max_inner), ("max_power_iter", t.max_power_iter)] {
            if v == 0 {
                return bad(format!("tolerances.{name} must be >= 1"));
            }
        }

        let c = &self.continuation;
        for (name, v) in [
            ("t0", c.t0),
            ("initial_step", c.initial_step),
            ("min_step", c.min_step),
            ("max_step", c.max_step),
            ("u_norm_max", c.u_norm_max),
            ("lambda_weight", c.lambda_weight),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("continuation.{name} = {v} must be > 0"));
            }
        }
        if !(c.min_step <= c.initial_step && c.initial_step <= c.max_step) {
            return bad("continuation steps must satisfy min_step <= initial_step <= max_step".into());
        }
        let bound = match c.lambda_max {
            LambdaBound::Absolute(v) | LambdaBound::Relative(v) => v,
        };
        if !(bound > 0.0) || !bound.is_finite() {
            return bad(format!("continuation.lambda_max = {bound} must be > 0"));
        }
        Ok(())
    }

    /// Model at `resolution_scale` times the configured `n_x` and `n_a`.
    pub fn model_spec(&self, resolution_scale: usize) -> ModelSpec {
        let m = &self.model;
        let mut spec = ModelSpec::new(m.coefficients.build(), m.n_x, m.n_a).scaled(resolution_scale.max(1));
        spec.x_min = m.x_min;
        spec.x_max = m.x_max;
        spec.a_max = m.a_max;
        spec.tolerances = self.tolerances.clone();
        spec.continuation = self.continuation.clone();
        spec
    }
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}
