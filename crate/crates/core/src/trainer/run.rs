use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{run_id, CurvePoint, Dataset, RetrainConfig, RunKind, RunResult, SweepConfig, Task};
use crate::autodiff::{Bound, Graph, OptimizerState, Var};
use crate::data::{Batch, EncodedSentence};
use crate::error::invalid;
use crate::metrics::{bleu, mutual_information, probe_dataset};
use crate::models::{stack_states, Encoder, LanguageModel, ProbeConfig, ProbeModel, Seq2SeqModel, TaskModel};
use crate::{Result, Tensor};

const EVAL_BATCH: usize = 64;
const DIVERGENCE_RATIO: f64 = 5.0;
const DIVERGENCE_EVALS: usize = 3;

/// Random stream for model initialisation and batch order.
fn model_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for probe retraining, shared by every run with the
/// same seed.
fn retrain_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Joint training state for one run. Each step updates the encoder with the
/// task gradient plus `factor` times the probe gradient, the decoder with
/// the task gradient and the probe with its own plain gradient.
pub struct Trainer<'a> {
    cfg: &'a SweepConfig,
    data: &'a Dataset,
    factor: f64,
    pub model: TaskModel,
    pub probe: ProbeModel,
    model_opt: OptimizerState,
    probe_opt: OptimizerState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    steps: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a SweepConfig, data: &'a Dataset, factor: f64, seed: u64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(invalid("gradient factor must be finite"));
        }
        if data.train.is_empty() {
            return Err(invalid("empty training split"));
        }
        let mut rng = model_rng(seed);
        let model = match cfg.task {
            Task::Translation => TaskModel::Translation(Seq2SeqModel::new(
                cfg.model.clone(),
                data.src_vocab.len(),
                data.tgt_vocab.len(),
                &mut rng,
            )),
            Task::Language => TaskModel::Language(LanguageModel::new(cfg.model.clone(), data.src_vocab.len(), &mut rng)),
        };
        let probe = ProbeModel::new(cfg.probe.clone(), model.width(), data.classes(), &mut rng);
        Ok(Self {
            cfg,
            data,
            factor,
            model,
            probe,
            model_opt: OptimizerState::adam(cfg.learning_rate),
            probe_opt: OptimizerState::adam(cfg.probe_learning_rate),
            rng,
            order: Vec::new(),
            cursor: 0,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn next_batch(&mut self) -> Batch {
        let n = self.data.train.len();
        let size = self.cfg.batch_size.min(n);
        if self.cursor + size > self.order.len() {
            self.order = (0..n).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let picked: Vec<&EncodedSentence> = self.order[self.cursor..self.cursor + size]
            .iter()
            .map(|&i| &self.data.train[i])
            .collect();
        self.cursor += size;
        Batch::new(&picked)
    }

    /// One joint update; returns the batch task and probe losses.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let batch = self.next_batch();
        let mut g = Graph::new();
        let pm = g.bind(self.model.params(), true);
        let pq = g.bind(&self.probe.params, true);
        let loss = joint_loss(&mut g, &self.model, &pm, &self.probe, &pq, &batch, self.factor)?;
        let grads = g.backward(loss.total)?;
        self.model_opt.step(self.model.params_mut(), &pm, &grads)?;
        self.probe_opt.step(&mut self.probe.params, &pq, &grads)?;
        self.steps += 1;
        Ok((g.value(loss.task).data()[0], g.value(loss.probe).data()[0]))
    }
}

/// Nodes of the scalarized objective for one batch.
#[derive(Debug, Clone, Copy)]
pub struct JointLoss {
    pub task: Var,
    pub probe: Var,
    /// `task + probe`, with the encoder states routed through a gradient
    /// multiplier before the probe. Its backward pass gives the encoder
    /// `d task + factor * d probe`, the decoder `d task` and the probe
    /// `d probe`.
    pub total: Var,
}

pub fn joint_loss(
    g: &mut Graph,
    model: &TaskModel,
    pm: &Bound,
    probe: &ProbeModel,
    pq: &Bound,
    batch: &Batch,
    factor: f64,
) -> Result<JointLoss> {
    let (task, states) = model.batch_loss(g, pm, batch)?;
    let (h, labels) = stack_states(g, &states, batch)?;
    let h = g.grad_multiply(h, factor);
    let probe = probe.loss(g, pq, h, &labels)?;
    let total = g.add(task, probe)?;
    Ok(JointLoss { task, probe, total })
}

/// Held-out mean task loss and joint-probe cross-entropy, both per token.
pub fn evaluate(model: &TaskModel, probe: &ProbeModel, heldout: &[EncodedSentence]) -> Result<(f64, f64)> {
    let (mut task, mut task_n) = (0.0, 0usize);
    let (mut ce, mut ce_n) = (0.0, 0usize);
    for chunk in heldout.chunks(EVAL_BATCH) {
        let batch = Batch::new(&chunk.iter().collect::<Vec<_>>());
        let mut g = Graph::new();
        let pm = g.bind(model.params(), false);
        let pq = g.bind(&probe.params, false);
        let (loss, states) = model.batch_loss(&mut g, &pm, &batch)?;
        let n = match model {
            TaskModel::Translation(_) => batch.tgt_tokens() + batch.size(),
            TaskModel::Language(_) => batch.src_tokens() - batch.size(),
        };
        task += g.value(loss).data()[0] * n as f64;
        task_n += n;
        let (h, labels) = stack_states(&mut g, &states, &batch)?;
        let p = probe.loss(&mut g, &pq, h, &labels)?;
        ce += g.value(p).data()[0] * batch.src_tokens() as f64;
        ce_n += batch.src_tokens();
    }
    if task_n == 0 || ce_n == 0 {
        return Err(invalid("empty held-out split"));
    }
    Ok((task / task_n as f64, ce / ce_n as f64))
}

/// Corpus BLEU of greedy translations of the held-out split.
pub(crate) fn heldout_bleu(model: &Seq2SeqModel, data: &Dataset) -> Result<f64> {
    let mut hyps: Vec<Vec<String>> = Vec::with_capacity(data.heldout.len());
    for chunk in data.heldout.chunks(EVAL_BATCH) {
        let batch = Batch::new(&chunk.iter().collect::<Vec<_>>());
        for ids in model.greedy_decode(&batch)? {
            hyps.push(
                ids.iter()
                    .map(|&i| String::from(data.tgt_vocab.token(i).unwrap_or("<unk>")))
                    .collect(),
            );
        }
    }
    bleu(&hyps, &data.references)
}

/// Fits a freshly initialised probe to the representations of a frozen
/// encoder, stopping once the held-out cross-entropy has not improved for
/// `cfg.patience` evaluations. Returns the best held-out cross-entropy.
pub fn retrain_probe<E: Encoder + ?Sized>(
    encoder: &E,
    train: &[EncodedSentence],
    heldout: &[EncodedSentence],
    classes: usize,
    probe: &ProbeConfig,
    cfg: &RetrainConfig,
    seed: u64,
) -> Result<f64> {
    let (train_h, train_s) = probe_dataset(encoder, train)?;
    let (heldout_h, heldout_s) = probe_dataset(encoder, heldout)?;
    if train_s.is_empty() || heldout_s.is_empty() {
        return Err(invalid("probe retraining needs labelled tokens in both splits"));
    }
    let width = encoder.width();
    let mut rng = retrain_rng(seed);
    let mut model = ProbeModel::new(probe.clone(), width, classes, &mut rng);
    let mut opt = OptimizerState::adam(cfg.learning_rate);
    let mut best = model.cross_entropy(&heldout_h, &heldout_s)?;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_s.len()).collect();
    let mut cursor = order.len();
    let size = cfg.batch_size.min(order.len());
    for step in 1..=cfg.max_steps {
        if cursor + size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + size];
        cursor += size;
        let mut data = Vec::with_capacity(size * width);
        for &r in rows {
            data.extend_from_slice(train_h.row(r));
        }
        let labels: Vec<Option<usize>> = rows.iter().map(|&r| Some(train_s[r])).collect();
        let mut g = Graph::new();
        let p = g.bind(&model.params, true);
        let h = g.constant(Tensor::from_parts(alloc::vec![size, width], data));
        let loss = model.loss(&mut g, &p, h, &labels)?;
        let grads = g.backward(loss)?;
        opt.step(&mut model.params, &p, &grads)?;
        if step % cfg.eval_interval == 0 {
            let ce = model.cross_entropy(&heldout_h, &heldout_s)?;
            if ce < best {
                best = ce;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// Scalarized run: the probe gradient reaching the encoder is scaled by
/// `lambda` in `Add` mode and by `-lambda` in `Remove` mode.
pub fn train_run(cfg: &SweepConfig, data: &Dataset, lambda: f64, seed: u64) -> Result<RunResult> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    train(cfg, data, RunKind::Lambda(lambda), seed)
}

/// Standard training: the probe is still fitted jointly but none of its
/// gradient reaches the encoder.
pub fn train_reference(cfg: &SweepConfig, data: &Dataset, seed: u64) -> Result<RunResult> {
    train(cfg, data, RunKind::Reference, seed)
}

pub(crate) fn factor_of(kind: RunKind, cfg: &SweepConfig) -> f64 {
    match kind {
        RunKind::Reference => 0.0,
        RunKind::Lambda(l) => cfg.mode.sign() * l,
    }
}

fn train(cfg: &SweepConfig, data: &Dataset, kind: RunKind, seed: u64) -> Result<RunResult> {
    let mut trainer = Trainer::new(cfg, data, factor_of(kind, cfg), seed)?;
    let (initial, initial_ce) = evaluate(&trainer.model, &trainer.probe, &data.heldout)?;
    let mut curve = alloc::vec![CurvePoint {
        step: 0,
        task_loss: initial,
        probe_ce: initial_ce,
    }];
    let mut best = (initial, 0, trainer.model.params().clone());
    let mut over = 0;
    let mut reason: Option<String> = None;
    for step in 1..=cfg.steps {
        let (task, _) = trainer.step()?;
        if !task.is_finite() {
            reason = Some(format!("non-finite training loss at step {step}"));
            break;
        }
        if step % cfg.eval_interval != 0 && step != cfg.steps {
            continue;
        }
        let (loss, ce) = evaluate(&trainer.model, &trainer.probe, &data.heldout)?;
        curve.push(CurvePoint {
            step,
            task_loss: loss,
            probe_ce: ce,
        });
        if !loss.is_finite() {
            reason = Some(format!("non-finite held-out loss at step {step}"));
            break;
        }
        if loss < best.0 {
            best = (loss, step, trainer.model.params().clone());
        }
        if loss > DIVERGENCE_RATIO * initial {
            over += 1;
            if over >= DIVERGENCE_EVALS {
                reason = Some(format!(
                    "diverged: held-out loss above {DIVERGENCE_RATIO}x initial for {DIVERGENCE_EVALS} evaluations (step {step})"
                ));
                break;
            }
        } else {
            over = 0;
        }
    }
    let (task_loss, best_step, params) = best;
    let mut model = trainer.model;
    *model.params_mut() = params;
    let bleu = match &model {
        TaskModel::Translation(m) => Some(heldout_bleu(m, data)?),
        TaskModel::Language(_) => None,
    };
    let probe_ce = retrain_probe(&model, &data.train, &data.heldout, data.classes(), &cfg.probe, &cfg.retrain, seed)?;
    let info = mutual_information(data.h_s, probe_ce)?;
    Ok(RunResult {
        run_id: run_id(kind, cfg.mode, seed),
        kind,
        mode: cfg.mode,
        seed,
        best_step,
        task_loss,
        bleu,
        probe_ce,
        h_s: info.h_s,
        mi: info.mi,
        mi_clamped: info.clamped,
        failed: reason.is_some(),
        reason,
        curve,
        params: model.params().clone(),
    })
}
