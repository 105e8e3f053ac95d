//! Deterministic file output: branch tables as CSV, solutions and summaries
//! as JSON. Floats in CSV are written with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solver::{Branch, BranchPoint, Diagnostics, Termination};
use crate::validate::TransientState;

pub const BRANCH_COLUMNS: [&str; 7] = [
    "index",
    "arclength",
    "lambda",
    "u_norm",
    "min_u",
    "r_Q_u",
    "residual_norm",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub index: usize,
    pub arclength: f64,
    pub lambda: f64,
    pub u_norm: f64,
    pub min_u: f64,
    #[serde(rename = "r_Q_u")]
    pub r_q_u: f64,
    pub residual_norm: f64,
}

impl BranchRow {
    pub fn from_point(index: usize, pt: &BranchPoint) -> Self {
        let d = &pt.diagnostics;
        Self {
            index,
            arclength: pt.arclength,
            lambda: pt.lambda,
            u_norm: d.u_norm,
            min_u: d.min_u,
            r_q_u: d.r_of_q_u,
            residual_norm: d.residual_norm,
        }
    }
}

pub fn write_branch_csv(path: &Path, branch: &Branch) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BRANCH_COLUMNS)?;
    for (i, pt) in branch.points.iter().enumerate() {
        let r = BranchRow::from_point(i, pt);
        w.write_record([
            r.index.to_string(),
            fmt_f64(r.arclength),
            fmt_f64(r.lambda),
            fmt_f64(r.u_norm),
            fmt_f64(r.min_u),
            fmt_f64(r.r_q_u),
            fmt_f64(r.residual_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branch_csv(path: &Path) -> Result<Vec<BranchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<BranchRow>, _>>()?;
    Ok(rows)
}

/// Full solution at one accepted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSnapshot {
    pub index: usize,
    pub lambda: f64,
    pub arclength: f64,
    pub v: Vec<f64>,
    /// Rows by age node.
    pub u: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl PointSnapshot {
    pub fn from_point(index: usize, pt: &BranchPoint) -> Self {
        Self {
            index,
            lambda: pt.lambda,
            arclength: pt.arclength,
            v: pt.v.to_vec(),
            u: pt.u.to_rows(),
            diagnostics: pt.diagnostics,
        }
    }
}

pub fn snapshot_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("point_{index:05}.json"))
}

/// Writes one `point_NNNNN.json` per accepted point into `dir`.
pub fn write_snapshots(dir: &Path, branch: &Branch) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, pt) in branch.points.iter().enumerate() {
        write_json(&snapshot_path(dir, i), &PointSnapshot::from_point(i, pt))?;
    }
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<PointSnapshot> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPoint {
    pub lambda: f64,
    pub u_norm: f64,
    pub min_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub lambda0: f64,
    pub termination: Termination,
    pub points: usize,
    pub n_x: usize,
    pub n_a: usize,
    pub rejected: Option<RejectedPoint>,
    pub failure: Option<String>,
}

impl BranchSummary {
    pub fn new(branch: &Branch, n_x: usize, n_a: usize) -> Self {
        Self {
            lambda0: branch.lambda0,
            termination: branch.termination,
            points: branch.points.len(),
            n_x,
            n_a,
            rejected: branch.rejected.as_ref().map(|p| RejectedPoint {
                lambda: p.lambda,
                u_norm: p.diagnostics.u_norm,
                min_u: p.diagnostics.min_u,
            }),
            failure: branch.failure.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Columns: step, t, drift, min_u, cohort_mass.
pub fn write_drift_csv(path: &Path, state: &TransientState, da: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "t", "drift", "min_u", "cohort_mass"])?;
    for (i, (d, m)) in state.drift_history.iter().zip(&state.min_history).enumerate() {
        let step = i + 1;
        w.write_record([
            step.to_string(),
            fmt_f64(step as f64 * da),
            fmt_f64(*d),
            fmt_f64(*m),
            fmt_f64(state.cohort_mass_history[step]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
