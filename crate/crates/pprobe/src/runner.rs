//! Sweep execution on a worker pool and the files it leaves behind.

use std::path::Path;

use pprobe_core::data::SentenceRecord;
use pprobe_core::pareto::{orient, weakly_dominates_within, Mode, TaskScore};
use pprobe_core::trainer::{
    assemble, baseline_checkpoint_probe, run_job, sweep_jobs, Axis, BaselinePoint, Dataset, Job, RunResult,
    SweepConfig,
};
use rayon::prelude::*;

use crate::checkpoint::save_checkpoint;
use crate::error::{config_err, io_err, Result};
use crate::output::{
    frontier_flags, frontier_rows, write_curve_csv, write_frontier_csv, write_sweep_csv, write_text, BaselineRow,
    SweepRow, CHECKPOINT, CURVE_CSV, FRONTIER_CSV, FRONTIER_SVG, SWEEP_CSV,
};
use crate::svg;

/// Training and held-out splits for `cfg`, drawn from its grammar.
pub fn dataset(cfg: &SweepConfig) -> Result<Dataset> {
    Ok(Dataset::generate(&cfg.grammar, cfg.train_sentences, cfg.heldout_sentences, cfg.min_count)?)
}

/// Dataset from explicit splits, for corpora read from disk.
pub fn dataset_from(cfg: &SweepConfig, train: &[SentenceRecord], heldout: &[SentenceRecord]) -> Result<Dataset> {
    Ok(Dataset::new(train, heldout, cfg.min_count)?)
}

/// Writes `<out>/<run-id>/{checkpoint.ppck,curve.csv}`.
pub fn write_run_dir(out: &Path, r: &RunResult) -> Result<()> {
    let dir = out.join(&r.run_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    save_checkpoint(&dir.join(CHECKPOINT), &r.params)?;
    write_curve_csv(&dir.join(CURVE_CSV), &r.curve)
}

/// Runs `jobs` on `workers` threads; results come back in job order. Each
/// worker writes the directory of the run it finished when `out` is set.
pub fn run_jobs(
    cfg: &SweepConfig,
    data: &Dataset,
    jobs: &[Job],
    workers: usize,
    out: Option<&Path>,
) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| config_err("jobs", e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&job| {
                let r = run_job(cfg, data, job)?;
                if let Some(out) = out {
                    write_run_dir(out, &r)?;
                }
                Ok(r)
            })
            .collect()
    })
}

/// Writes `sweep.csv`, `frontier.csv` and `frontier.svg` into `dir`.
pub fn write_sweep_outputs(dir: &Path, rows: &[SweepRow], mode: Mode, axis: Axis) -> Result<()> {
    write_sweep_csv(&dir.join(SWEEP_CSV), rows)?;
    write_frontier_csv(&dir.join(FRONTIER_CSV), &frontier_rows(rows, mode, axis))?;
    write_text(&dir.join(FRONTIER_SVG), &svg::render(rows, mode, axis))
}

/// The whole sweep: every run, the frontier, and all files under `out`.
pub fn execute_sweep(cfg: &SweepConfig, out: &Path, workers: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let data = dataset(cfg)?;
    let runs = run_jobs(cfg, &data, &sweep_jobs(cfg), workers, Some(out))?;
    let outcome = assemble(runs, cfg.mode, cfg.axis)?;
    let rows: Vec<SweepRow> = outcome
        .runs
        .iter()
        .zip(&outcome.on_frontier)
        .map(|(r, &f)| SweepRow::from_run(r, f))
        .collect();
    write_sweep_outputs(out, &rows, cfg.mode, cfg.axis)?;
    Ok(rows)
}

/// Recomputes frontier flags, leaving every other column as it was.
pub fn refilter(rows: &[SweepRow], mode: Mode, axis: Axis) -> Result<Vec<SweepRow>> {
    let flags = frontier_flags(rows, mode, axis)?;
    Ok(rows
        .iter()
        .zip(flags)
        .map(|(r, on_frontier)| SweepRow { on_frontier, ..r.clone() })
        .collect())
}

/// Tolerances for comparing checkpoints with sweep runs: 0.5 BLEU or 0.02
/// nats on the task axis and 0.02 nats of probe CE.
pub fn coverage_tolerance(axis: Axis) -> [f64; 2] {
    match axis {
        Axis::Bleu => [0.5, 0.02],
        Axis::Loss => [0.02, 0.02],
    }
}

fn baseline_task(p: &BaselinePoint, axis: Axis) -> TaskScore {
    match (axis, p.bleu) {
        (Axis::Bleu, Some(b)) => TaskScore::Bleu(b),
        _ => TaskScore::Loss(p.task_loss),
    }
}

/// Whether some successful sweep row weakly dominates `p` in Add
/// orientation within [`coverage_tolerance`].
pub fn covered_by(p: &BaselinePoint, sweep: &[SweepRow], axis: Axis) -> Result<bool> {
    let target = orient(baseline_task(p, axis), p.probe_ce, Mode::Add).values;
    let tol = coverage_tolerance(axis);
    for r in sweep.iter().filter(|r| !r.failed) {
        if weakly_dominates_within(&r.oriented(Mode::Add, axis), &target, &tol)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Probes sampled checkpoints of one standard run (first configured seed).
pub fn execute_baseline(cfg: &SweepConfig, sweep: Option<&[SweepRow]>) -> Result<Vec<BaselineRow>> {
    let data = dataset(cfg)?;
    let points = baseline_checkpoint_probe(cfg, &data, cfg.seeds[0])?;
    points
        .iter()
        .map(|p| {
            Ok(BaselineRow {
                step: p.step,
                task_loss: p.task_loss,
                bleu: p.bleu,
                probe_ce: p.probe_ce,
                h_s: p.h_s,
                mi: p.mi,
                covered: sweep.map(|s| covered_by(p, s, cfg.axis)).transpose()?,
            })
        })
        .collect()
}
