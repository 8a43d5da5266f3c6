use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::run::{evaluate, heldout_bleu, retrain_probe, train_reference, train_run, Trainer};
use super::{Axis, Dataset, RunResult, SweepConfig};
use crate::autodiff::ParamSet;
use crate::metrics::mutual_information;
use crate::models::TaskModel;
use crate::pareto::{frontier_indices, orient, Mode, ObjectivePoint, TaskScore};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunKind {
    /// Standard training with no probe gradient into the encoder.
    Reference,
    /// Scalarized training at this lambda.
    Lambda(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub kind: RunKind,
    pub seed: u64,
}

/// Every run of a sweep: per seed, the reference run followed by one run
/// per lambda in configuration order.
pub fn sweep_jobs(cfg: &SweepConfig) -> Vec<Job> {
    cfg.seeds
        .iter()
        .flat_map(|&seed| {
            core::iter::once(Job {
                kind: RunKind::Reference,
                seed,
            })
            .chain(cfg.lambdas.iter().map(move |&l| Job {
                kind: RunKind::Lambda(l),
                seed,
            }))
        })
        .collect()
}

pub fn run_job(cfg: &SweepConfig, data: &Dataset, job: Job) -> Result<RunResult> {
    match job.kind {
        RunKind::Reference => train_reference(cfg, data, job.seed),
        RunKind::Lambda(l) => train_run(cfg, data, l, job.seed),
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<RunResult>,
    /// Parallel to `runs`; failed runs are never on the frontier.
    pub on_frontier: Vec<bool>,
}

/// Marks the frontier among the successful runs under `mode` and `axis`.
pub fn assemble(runs: Vec<RunResult>, mode: Mode, axis: Axis) -> Result<SweepOutcome> {
    let alive: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].failed).collect();
    let points: Vec<ObjectivePoint> = alive.iter().map(|&i| runs[i].point(mode, axis)).collect();
    let values: Vec<&[f64]> = points.iter().map(|p| p.values.as_slice()).collect();
    let mut on_frontier = alloc::vec![false; runs.len()];
    for k in frontier_indices(&values)? {
        on_frontier[alive[k]] = true;
    }
    Ok(SweepOutcome { runs, on_frontier })
}

/// Runs every job sequentially on data drawn from the configured grammar.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let data = Dataset::generate(&cfg.grammar, cfg.train_sentences, cfg.heldout_sentences, cfg.min_count)?;
    let runs = sweep_jobs(cfg)
        .into_iter()
        .map(|job| run_job(cfg, &data, job))
        .collect::<Result<Vec<_>>>()?;
    assemble(runs, cfg.mode, cfg.axis)
}

/// A probed checkpoint of a standard training run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePoint {
    pub step: usize,
    pub task_loss: f64,
    pub bleu: Option<f64>,
    pub probe_ce: f64,
    pub h_s: f64,
    pub mi: f64,
}

impl BaselinePoint {
    pub fn point(&self, mode: Mode, axis: Axis) -> ObjectivePoint {
        let task = match (axis, self.bleu) {
            (Axis::Bleu, Some(b)) => TaskScore::Bleu(b),
            _ => TaskScore::Loss(self.task_loss),
        };
        orient(task, self.probe_ce, mode)
    }
}

/// Trains one standard model, saving a checkpoint every
/// `cfg.baseline.interval` steps, then probes a uniform random sample of
/// `cfg.baseline.checkpoints` of them (all of them if fewer were saved).
/// Points come back in step order.
pub fn baseline_checkpoint_probe(cfg: &SweepConfig, data: &Dataset, seed: u64) -> Result<Vec<BaselinePoint>> {
    cfg.validate()?;
    let steps = if cfg.baseline.steps == 0 { cfg.steps } else { cfg.baseline.steps };
    let mut trainer = Trainer::new(cfg, data, 0.0, seed)?;
    let mut saved: Vec<(usize, ParamSet)> = Vec::new();
    for step in 1..=steps {
        trainer.step()?;
        if step % cfg.baseline.interval == 0 {
            saved.push((step, trainer.model.params().clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let k = cfg.baseline.checkpoints.min(saved.len());
    let mut picked = index::sample(&mut rng, saved.len(), k).into_vec();
    picked.sort_unstable();
    let mut model = trainer.model.clone();
    let probe = trainer.probe;
    let mut out = Vec::with_capacity(k);
    for i in picked {
        let (step, params) = &saved[i];
        *model.params_mut() = params.clone();
        let (task_loss, _) = evaluate(&model, &probe, &data.heldout)?;
        let bleu = match &model {
            TaskModel::Translation(m) => Some(heldout_bleu(m, data)?),
            TaskModel::Language(_) => None,
        };
        let probe_ce = retrain_probe(&model, &data.train, &data.heldout, data.classes(), &cfg.probe, &cfg.retrain, seed)?;
        let info = mutual_information(data.h_s, probe_ce)?;
        out.push(BaselinePoint {
            step: *step,
            task_loss,
            bleu,
            probe_ce,
            h_s: info.h_s,
            mi: info.mi,
        });
    }
    Ok(out)
}
