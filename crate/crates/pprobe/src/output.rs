//! CSV files of a sweep directory.
//!
//! ```text
//! <out>/sweep.csv             one row per run
//! <out>/frontier.csv          lambda, mode, seed, axis1, axis2, on_frontier
//! <out>/frontier.svg
//! <out>/<run-id>/curve.csv    step, task_loss, probe_ce
//! <out>/<run-id>/checkpoint.ppck
//! ```

use std::fs::File;
use std::io::Write;
use std::path::Path;

use pprobe_core::pareto::{frontier_indices, orient, Mode, TaskScore};
use pprobe_core::trainer::{run_id, Axis, CurvePoint, RunKind, RunResult};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const FRONTIER_CSV: &str = "frontier.csv";
pub const FRONTIER_SVG: &str = "frontier.svg";
pub const CURVE_CSV: &str = "curve.csv";
pub const CHECKPOINT: &str = "checkpoint.ppck";

/// A row of `sweep.csv`. The reference run has `lambda = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mode: String,
    pub seed: u64,
    pub step: usize,
    pub task_loss: f64,
    pub bleu: Option<f64>,
    pub probe_ce: f64,
    pub h_s: f64,
    pub mi: f64,
    pub on_frontier: bool,
    pub failed: bool,
    pub reason: Option<String>,
}

impl SweepRow {
    pub fn from_run(r: &RunResult, on_frontier: bool) -> Self {
        Self {
            lambda: r.lambda(),
            mode: r.mode.to_string(),
            seed: r.seed,
            step: r.best_step,
            task_loss: r.task_loss,
            bleu: r.bleu,
            probe_ce: r.probe_ce,
            h_s: r.h_s,
            mi: r.mi,
            on_frontier,
            failed: r.failed,
            reason: r.reason.clone(),
        }
    }

    pub fn is_reference(&self) -> bool {
        self.lambda == 0.0
    }

    pub fn kind(&self) -> RunKind {
        if self.is_reference() {
            RunKind::Reference
        } else {
            RunKind::Lambda(self.lambda)
        }
    }

    /// Directory name of the run inside the sweep directory.
    pub fn run_id(&self) -> Result<String> {
        Ok(run_id(self.kind(), self.mode.parse()?, self.seed))
    }

    /// Task coordinate under `axis`; rows without BLEU fall back to loss.
    pub fn task_score(&self, axis: Axis) -> TaskScore {
        match (axis, self.bleu) {
            (Axis::Bleu, Some(b)) => TaskScore::Bleu(b),
            _ => TaskScore::Loss(self.task_loss),
        }
    }

    /// Larger-is-better objective pair.
    pub fn oriented(&self, mode: Mode, axis: Axis) -> [f64; 2] {
        let v = orient(self.task_score(axis), self.probe_ce, mode).values;
        [v[0], v[1]]
    }
}

/// BLEU when every row has it, loss otherwise.
pub fn infer_axis(rows: &[SweepRow]) -> Axis {
    if !rows.is_empty() && rows.iter().all(|r| r.bleu.is_some()) {
        Axis::Bleu
    } else {
        Axis::Loss
    }
}

/// Frontier flags for `rows` under `mode` and `axis`; failed rows are never
/// on the frontier.
pub fn frontier_flags(rows: &[SweepRow], mode: Mode, axis: Axis) -> Result<Vec<bool>> {
    let alive: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].failed).collect();
    let points: Vec<[f64; 2]> = alive.iter().map(|&i| rows[i].oriented(mode, axis)).collect();
    let slices: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let mut flags = vec![false; rows.len()];
    for k in frontier_indices(&slices)? {
        flags[alive[k]] = true;
    }
    Ok(flags)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}

/// Reads `sweep.csv`; a malformed row is reported with its line number.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let rows: Vec<SweepRow> = read_rows(path)?;
    for (i, r) in rows.iter().enumerate() {
        if let Err(e) = r.mode.parse::<Mode>() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub task_loss: f64,
    pub probe_ce: f64,
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let rows: Vec<CurveRow> = curve
        .iter()
        .map(|c| CurveRow {
            step: c.step,
            task_loss: c.task_loss,
            probe_ce: c.probe_ce,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    read_rows(path)
}

/// A row of `frontier.csv`: the oriented objective pair of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub lambda: f64,
    pub mode: String,
    pub seed: u64,
    pub axis1: f64,
    pub axis2: f64,
    pub on_frontier: bool,
}

pub fn frontier_rows(rows: &[SweepRow], mode: Mode, axis: Axis) -> Vec<FrontierRow> {
    rows.iter()
        .map(|r| {
            let [axis1, axis2] = r.oriented(mode, axis);
            FrontierRow {
                lambda: r.lambda,
                mode: r.mode.clone(),
                seed: r.seed,
                axis1,
                axis2,
                on_frontier: r.on_frontier,
            }
        })
        .collect()
}

pub fn write_frontier_csv(path: &Path, rows: &[FrontierRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// A row of `baseline.csv`. `covered` says whether some sweep run weakly
/// dominates the checkpoint within tolerance, when a sweep was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub step: usize,
    pub task_loss: f64,
    pub bleu: Option<f64>,
    pub probe_ce: f64,
    pub h_s: f64,
    pub mi: f64,
    pub covered: Option<bool>,
}

pub fn write_baseline_csv(path: &Path, rows: &[BaselineRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_baseline_csv(path: &Path) -> Result<Vec<BaselineRow>> {
    read_rows(path)
}
