//! Scalarized joint training, probe retraining, sweeps and the
//! checkpoint-sampling baseline.

mod run;
mod sweep;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use run::{evaluate, joint_loss, retrain_probe, train_reference, train_run, JointLoss, Trainer};
pub use sweep::{
    assemble, baseline_checkpoint_probe, run_job, run_sweep, sweep_jobs, BaselinePoint, Job, RunKind, SweepOutcome,
};

use crate::autodiff::ParamSet;
use crate::data::{build_vocab, build_vocab_min_count, EncodedSentence, GrammarConfig, SentenceRecord, Side, Vocabulary};
use crate::error::invalid;
use crate::metrics::label_entropy;
use crate::models::{ModelConfig, ProbeConfig};
use crate::pareto::{orient, Mode, ObjectivePoint, TaskScore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Sequence-to-sequence translation.
    Translation,
    /// Next-token language modelling over the source side.
    Language,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Translation => "MT",
            Task::Language => "LM",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mt" | "translation" => Ok(Task::Translation),
            "lm" | "language" => Ok(Task::Language),
            _ => Err(invalid(format!("unknown task {s:?} (expected MT or LM)"))),
        }
    }
}

/// Which task metric forms the first frontier coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Loss,
    Bleu,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Loss => "loss",
            Axis::Bleu => "bleu",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loss" => Ok(Axis::Loss),
            "bleu" => Ok(Axis::Bleu),
            _ => Err(invalid(format!("unknown axis {s:?} (expected loss or bleu)"))),
        }
    }
}

/// Settings for fitting a fresh probe to a frozen encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Steps between held-out evaluations.
    pub eval_interval: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub max_steps: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            batch_size: 256,
            eval_interval: 50,
            patience: 5,
            max_steps: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Length of the standard training run; 0 means the sweep's `steps`.
    pub steps: usize,
    /// Steps between saved checkpoints.
    pub interval: usize,
    /// Checkpoints sampled for probing.
    pub checkpoints: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            steps: 0,
            interval: 25,
            checkpoints: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub task: Task,
    pub mode: Mode,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub eval_interval: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub probe_learning_rate: f64,
    pub axis: Axis,
    /// Training and held-out corpus sizes.
    pub train_sentences: usize,
    pub heldout_sentences: usize,
    /// Words seen fewer times than this in training map to the unknown token.
    pub min_count: usize,
    pub model: ModelConfig,
    pub probe: ProbeConfig,
    pub retrain: RetrainConfig,
    pub baseline: BaselineConfig,
    pub grammar: GrammarConfig,
}

/// Ten evenly spaced values from 0.01 to 0.1.
pub fn default_lambdas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}

impl SweepConfig {
    pub fn new(task: Task, mode: Mode) -> Self {
        Self {
            task,
            mode,
            lambdas: default_lambdas(),
            seeds: alloc::vec![7],
            steps: 600,
            eval_interval: 50,
            batch_size: 16,
            learning_rate: 0.005,
            probe_learning_rate: 0.005,
            axis: match task {
                Task::Translation => Axis::Bleu,
                Task::Language => Axis::Loss,
            },
            train_sentences: 2000,
            heldout_sentences: 200,
            min_count: 2,
            model: ModelConfig::default(),
            probe: ProbeConfig::default(),
            retrain: RetrainConfig::default(),
            baseline: BaselineConfig::default(),
            grammar: GrammarConfig::default_grammar(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!("lambda must be positive, got {l}")));
        }
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if self.steps == 0 || self.eval_interval == 0 || self.batch_size == 0 {
            return Err(invalid("steps, eval_interval and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.probe_learning_rate > 0.0 && self.retrain.learning_rate > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.train_sentences == 0 || self.heldout_sentences == 0 || self.min_count == 0 {
            return Err(invalid("corpus sizes and min_count must be positive"));
        }
        let r = &self.retrain;
        if r.batch_size == 0 || r.eval_interval == 0 || r.patience == 0 || r.max_steps == 0 {
            return Err(invalid("probe retraining settings must be positive"));
        }
        if self.baseline.interval == 0 || self.baseline.checkpoints == 0 {
            return Err(invalid("baseline interval and checkpoint count must be positive"));
        }
        if self.probe.hidden == 0 {
            return Err(invalid("probe width must be positive"));
        }
        self.model.validate()?;
        self.grammar.validate()
    }
}

/// Encoded training and held-out splits with their vocabularies.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub label_vocab: Vocabulary,
    pub train: Vec<EncodedSentence>,
    pub heldout: Vec<EncodedSentence>,
    /// Held-out target sentences as tokens, the BLEU references. Words
    /// outside the target vocabulary appear as its unknown token.
    pub references: Vec<Vec<String>>,
    /// Entropy of the held-out labels.
    pub h_s: f64,
}

impl Dataset {
    /// Vocabularies come from the training split; source and target words
    /// seen fewer than `min_count` times there become unknown.
    pub fn new(train: &[SentenceRecord], heldout: &[SentenceRecord], min_count: usize) -> Result<Self> {
        if train.is_empty() || heldout.is_empty() {
            return Err(invalid("training and held-out splits must be non-empty"));
        }
        let src_vocab = build_vocab_min_count(train, Side::Src, min_count);
        let tgt_vocab = build_vocab_min_count(train, Side::Tgt, min_count);
        let label_vocab = build_vocab(train, Side::Labels);
        let encode = |records: &[SentenceRecord]| {
            records
                .iter()
                .map(|r| EncodedSentence::encode(r, &src_vocab, &tgt_vocab, &label_vocab))
                .collect::<Result<Vec<_>>>()
        };
        let train_enc = encode(train)?;
        let heldout_enc = encode(heldout)?;
        let h_s = label_entropy(heldout_enc.iter().flat_map(|s| s.labels.iter().copied()))?;
        Ok(Self {
            references: heldout
                .iter()
                .map(|r| {
                    r.tgt
                        .iter()
                        .map(|t| tgt_vocab.token(tgt_vocab.id(t)).unwrap_or(t).into())
                        .collect()
                })
                .collect(),
            src_vocab,
            tgt_vocab,
            label_vocab,
            train: train_enc,
            heldout: heldout_enc,
            h_s,
        })
    }

    /// Draws `train + heldout` sentences from `grammar` and splits them in
    /// that order.
    pub fn generate(grammar: &GrammarConfig, train: usize, heldout: usize, min_count: usize) -> Result<Self> {
        let corpus = grammar.generate(train + heldout)?;
        let (a, b) = corpus.split_at(train);
        Self::new(a, b, min_count)
    }

    pub fn classes(&self) -> usize {
        self.label_vocab.content_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub task_loss: f64,
    /// Held-out cross-entropy of the jointly trained probe.
    pub probe_ce: f64,
}

/// One trained model and its measurements on the held-out split.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub kind: RunKind,
    pub mode: Mode,
    pub seed: u64,
    /// Step of the selected (best held-out task loss) checkpoint.
    pub best_step: usize,
    pub task_loss: f64,
    pub bleu: Option<f64>,
    /// Held-out cross-entropy of a fresh probe fitted to the frozen encoder.
    pub probe_ce: f64,
    pub h_s: f64,
    pub mi: f64,
    pub mi_clamped: bool,
    pub failed: bool,
    pub reason: Option<String>,
    pub curve: Vec<CurvePoint>,
    /// Parameters of the selected checkpoint.
    pub params: ParamSet,
}

impl RunResult {
    /// The lambda of a scalarized run; 0 for the reference run.
    pub fn lambda(&self) -> f64 {
        match self.kind {
            RunKind::Reference => 0.0,
            RunKind::Lambda(l) => l,
        }
    }

    pub fn is_reference(&self) -> bool {
        self.kind == RunKind::Reference
    }

    pub fn task_score(&self, axis: Axis) -> TaskScore {
        match (axis, self.bleu) {
            (Axis::Bleu, Some(b)) => TaskScore::Bleu(b),
            _ => TaskScore::Loss(self.task_loss),
        }
    }

    pub fn point(&self, mode: Mode, axis: Axis) -> ObjectivePoint {
        orient(self.task_score(axis), self.probe_ce, mode)
    }
}

pub fn run_id(kind: RunKind, mode: Mode, seed: u64) -> String {
    match kind {
        RunKind::Reference => format!("ref_s{seed}"),
        RunKind::Lambda(l) => {
            let m = match mode {
                Mode::Add => "add",
                Mode::Remove => "remove",
            };
            format!("{m}_l{l:.4}_s{seed}")
        }
    }
}

/// Mean and population variance of the `window` values centred on the best
/// element of `series` (the maximum if `higher_is_better`, else the
/// minimum; the first one on ties). The window is shifted inwards at the
/// ends of the series.
pub fn window_stats(series: &[f64], window: usize, higher_is_better: bool) -> Result<(f64, f64)> {
    if window == 0 || series.len() < window {
        return Err(invalid(format!(
            "series of length {} is shorter than window {window}",
            series.len()
        )));
    }
    let mut best = 0;
    for (i, &v) in series.iter().enumerate() {
        let better = if higher_is_better { v > series[best] } else { v < series[best] };
        if better {
            best = i;
        }
    }
    let start = best.saturating_sub(window / 2).min(series.len() - window);
    let w = &series[start..start + window];
    let n = window as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn window_on_hand_series() {
        let (m, v) = window_stats(&[21.00, 21.10, 21.14], 3, true).unwrap();
        assert!((m - 21.08).abs() < 1e-12);
        assert!((v - 0.0104 / 3.0).abs() < 1e-9);
        assert_eq!(window_stats(&[2.0; 6], 3, false).unwrap(), (2.0, 0.0));
        assert!(window_stats(&[1.0, 2.0], 3, true).is_err());
    }

    #[test]
    fn window_is_centred_and_clamped() {
        let s = [5.0, 4.0, 1.0, 4.5, 6.0, 7.0];
        assert_eq!(window_stats(&s, 3, false).unwrap().0, (4.0 + 1.0 + 4.5) / 3.0);
        assert_eq!(window_stats(&s, 3, true).unwrap().0, (4.5 + 6.0 + 7.0) / 3.0);
        assert_eq!(window_stats(&[0.0, 1.0, 2.0, 3.0], 3, false).unwrap().0, 1.0);
    }

    #[test]
    fn run_ids() {
        assert_eq!(run_id(RunKind::Reference, Mode::Add, 7), "ref_s7");
        assert_eq!(run_id(RunKind::Lambda(0.05), Mode::Add, 7), "add_l0.0500_s7");
        assert_eq!(run_id(RunKind::Lambda(0.1), Mode::Remove, 3), "remove_l0.1000_s3");
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::new(Task::Translation, Mode::Add);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.lambdas.len(), 10);
        assert!((cfg.lambdas[9] - 0.1).abs() < 1e-15);
        cfg.lambdas = vec![0.05, 0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::new(Task::Language, Mode::Remove);
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn task_and_axis_parse() {
        assert_eq!("mt".parse::<Task>().unwrap(), Task::Translation);
        assert_eq!(Task::Language.to_string().parse::<Task>().unwrap(), Task::Language);
        assert_eq!("BLEU".parse::<Axis>().unwrap(), Axis::Bleu);
        assert!("speed".parse::<Axis>().is_err());
    }

    #[test]
    fn dataset_labels_cover_grammar() {
        let g = GrammarConfig::default_grammar(1);
        let d = Dataset::generate(&g, 300, 50, 2).unwrap();
        assert_eq!(d.classes(), 4);
        assert_eq!(d.heldout.len(), 50);
        assert!(d.h_s > 1.0);
    }

    #[test]
    fn rare_words_become_unknown_in_both_splits() {
        let g = GrammarConfig::default_grammar(1);
        let d = Dataset::generate(&g, 500, 100, 2).unwrap();
        let unk = |split: &[EncodedSentence]| {
            let all: Vec<usize> = split.iter().flat_map(|s| s.src.iter().copied()).collect();
            all.iter().filter(|&&t| t == crate::data::UNK).count() as f64 / all.len() as f64
        };
        assert!((unk(&d.train) - 0.5).abs() < 0.05);
        assert!((unk(&d.heldout) - 0.5).abs() < 0.05);
        assert!(d.src_vocab.content_len() < 200);
        let unk_token = d.tgt_vocab.token(crate::data::UNK).unwrap();
        assert!(d.references.iter().flatten().any(|t| t == unk_token));
        assert!(d.references.iter().flatten().all(|t| d.tgt_vocab.id(t) != crate::data::UNK || t == unk_token));

        let all = Dataset::generate(&g, 500, 100, 1).unwrap();
        assert!(all.src_vocab.content_len() > 1000);
    }
}
