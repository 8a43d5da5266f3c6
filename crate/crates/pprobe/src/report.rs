//! Per-run variance table over a window of evaluations around the best one.

use std::fmt::Write as _;
use std::path::Path;

use pprobe_core::trainer::window_stats;

use crate::error::Result;
use crate::output::{read_curve_csv, read_sweep_csv, CURVE_CSV, SWEEP_CSV};

pub const WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run_id: String,
    pub metric: &'static str,
    pub mean: f64,
    pub var: f64,
    pub task_loss: f64,
    pub bleu: Option<f64>,
    pub probe_ce: f64,
    pub mi: f64,
}

/// One row per run of the sweep in `dir`, in `sweep.csv` order. The window
/// covers held-out task loss, shrunk to the curve length for short curves.
pub fn build_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let runs = read_sweep_csv(&dir.join(SWEEP_CSV))?;
    runs.iter()
        .map(|r| {
            let run_id = r.run_id()?;
            let curve = read_curve_csv(&dir.join(&run_id).join(CURVE_CSV))?;
            let series: Vec<f64> = curve.iter().map(|c| c.task_loss).collect();
            let (mean, var) = window_stats(&series, WINDOW.min(series.len().max(1)), false)?;
            Ok(ReportRow {
                run_id,
                metric: "task_loss",
                mean,
                var,
                task_loss: r.task_loss,
                bleu: r.bleu,
                probe_ce: r.probe_ce,
                mi: r.mi,
            })
        })
        .collect()
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<22} {:<10} {:>10} {:>12} {:>10} {:>8} {:>10} {:>8}",
        "run_id", "metric", "mean", "var", "task_loss", "bleu", "probe_ce", "mi"
    )
    .unwrap();
    for r in rows {
        let bleu = r.bleu.map_or_else(|| "-".to_string(), |b| format!("{b:.2}"));
        writeln!(
            s,
            "{:<22} {:<10} {:>10.4} {:>12.6} {:>10.4} {:>8} {:>10.4} {:>8.4}",
            r.run_id, r.metric, r.mean, r.var, r.task_loss, bleu, r.probe_ce, r.mi
        )
        .unwrap();
    }
    s
}
