//! Task models and the probe.

mod layers;
mod lm;
mod probe;
mod seq2seq;

use alloc::vec;
use alloc::vec::Vec;

pub use layers::{argmax_rows, Linear, Lstm};
pub use lm::LanguageModel;
pub use probe::{ProbeConfig, ProbeModel};
pub use seq2seq::Seq2SeqModel;

use crate::autodiff::{Bound, Graph, ParamSet, Var};
use crate::data::{Batch, EncodedSentence};
use crate::error::invalid;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub embed: usize,
    pub hidden: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub attention: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 64,
            enc_layers: 1,
            dec_layers: 1,
            attention: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.hidden == 0 || self.attention == 0 {
            return Err(invalid("model widths must be positive"));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(invalid("model needs at least one layer"));
        }
        Ok(())
    }
}

/// Anything that maps a token sequence to one representation row per token.
pub trait Encoder {
    /// Width of each representation row.
    fn width(&self) -> usize;

    fn encode(&self, ids: &[usize]) -> Result<Tensor>;

    fn encode_all(&self, seqs: &[&[usize]]) -> Result<Vec<Tensor>> {
        seqs.iter().map(|s| self.encode(s)).collect()
    }
}

pub(crate) fn check_ids(ids: &[usize], size: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= size) {
        Some(&id) => Err(Error::OutOfVocabulary { id, size }),
        None => Ok(()),
    }
}

const ENCODE_BATCH: usize = 64;

/// Runs `states` over batches of `seqs` and splits the result back into one
/// `[len, width]` tensor per sequence.
pub(crate) fn encode_all_batched<F>(seqs: &[&[usize]], width: usize, states: F, params: &ParamSet) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &Bound, &[Vec<usize>], &[Vec<bool>]) -> Result<Vec<Var>>,
{
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(ENCODE_BATCH) {
        if chunk.iter().any(|s| s.is_empty()) {
            return Err(invalid("empty sequence"));
        }
        let w = chunk.iter().map(|s| s.len()).max().unwrap_or(0);
        let src: Vec<Vec<usize>> = chunk
            .iter()
            .map(|s| {
                let mut v = s.to_vec();
                v.resize(w, crate::data::PAD);
                v
            })
            .collect();
        let mask: Vec<Vec<bool>> = chunk
            .iter()
            .map(|s| (0..w).map(|t| t < s.len()).collect())
            .collect();
        let mut g = Graph::new();
        let p = g.bind(params, false);
        let vars = states(&mut g, &p, &src, &mask)?;
        for (b, s) in chunk.iter().enumerate() {
            let mut data = Vec::with_capacity(s.len() * width);
            for v in &vars[..s.len()] {
                data.extend_from_slice(g.value(*v).row(b));
            }
            out.push(Tensor::from_parts(vec![s.len(), width], data));
        }
    }
    Ok(out)
}

/// Stacks per-position states into one matrix (position-major) together
/// with the label of each row; padded positions get `None`.
pub fn stack_states(g: &mut Graph, states: &[Var], batch: &Batch) -> Result<(Var, Vec<Option<usize>>)> {
    let h = g.concat(states, 0)?;
    let labels = (0..states.len())
        .flat_map(|t| {
            (0..batch.size()).map(move |b| batch.src_mask[b][t].then(|| batch.labels[b][t]))
        })
        .collect();
    Ok((h, labels))
}

/// A task model of either kind.
#[derive(Debug, Clone)]
pub enum TaskModel {
    Translation(Seq2SeqModel),
    Language(LanguageModel),
}

impl TaskModel {
    pub fn params(&self) -> &ParamSet {
        match self {
            Self::Translation(m) => &m.params,
            Self::Language(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Self::Translation(m) => &mut m.params,
            Self::Language(m) => &mut m.params,
        }
    }

    /// Number of leading parameter tensors that belong to the encoder.
    pub fn encoder_tensors(&self) -> usize {
        self.params()
            .iter()
            .take_while(|(_, name, _)| name.starts_with("encoder."))
            .count()
    }

    /// Mean per-token task loss plus the per-position encoder states.
    pub fn batch_loss(&self, g: &mut Graph, p: &Bound, batch: &Batch) -> Result<(Var, Vec<Var>)> {
        match self {
            Self::Translation(m) => m.batch_loss(g, p, batch),
            Self::Language(m) => m.batch_loss(g, p, batch),
        }
    }

    pub fn eval_loss(&self, sentences: &[EncodedSentence], batch_size: usize) -> Result<f64> {
        match self {
            Self::Translation(m) => m.eval_loss(sentences, batch_size),
            Self::Language(m) => m.eval_loss(sentences, batch_size),
        }
    }
}

impl Encoder for TaskModel {
    fn width(&self) -> usize {
        match self {
            Self::Translation(m) => m.width(),
            Self::Language(m) => m.width(),
        }
    }

    fn encode(&self, ids: &[usize]) -> Result<Tensor> {
        match self {
            Self::Translation(m) => m.encode(ids),
            Self::Language(m) => m.encode(ids),
        }
    }

    fn encode_all(&self, seqs: &[&[usize]]) -> Result<Vec<Tensor>> {
        match self {
            Self::Translation(m) => m.encode_all(seqs),
            Self::Language(m) => m.encode_all(seqs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OptimizerState;
    use crate::math;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            embed: 8,
            hidden: 8,
            enc_layers: 1,
            dec_layers: 1,
            attention: 8,
        }
    }

    fn sentence(src: &[usize], tgt: &[usize]) -> EncodedSentence {
        EncodedSentence {
            src: src.to_vec(),
            tgt: tgt.to_vec(),
            labels: vec![0; src.len()],
        }
    }

    #[test]
    fn encoder_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        let lm = LanguageModel::new(small(), 20, &mut rng);
        let x = [4, 5, 6, 7, 8];
        assert_eq!(s2s.encode(&x).unwrap().shape(), &[5, 16]);
        assert_eq!(lm.encode(&x).unwrap().shape(), &[5, 8]);
        assert_eq!(s2s.encode(&x).unwrap(), s2s.encode(&x).unwrap());
    }

    #[test]
    fn batched_encoding_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        let lm = LanguageModel::new(small(), 20, &mut rng);
        let seqs: [&[usize]; 3] = [&[4, 5, 6], &[7, 8, 9, 10, 11], &[12]];
        for enc in [&s2s as &dyn Encoder, &lm] {
            let all = enc.encode_all(&seqs).unwrap();
            for (s, h) in seqs.iter().zip(&all) {
                assert!(enc.encode(s).unwrap().max_abs_diff(h) < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_vocabulary_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        assert!(matches!(s2s.encode(&[4, 20]), Err(Error::OutOfVocabulary { id: 20, .. })));
        assert!(s2s.encode(&[]).is_err());
    }

    #[test]
    fn fresh_losses_are_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ModelConfig::default();
        let s2s = Seq2SeqModel::new(cfg.clone(), 32, 32, &mut rng);
        let lm = LanguageModel::new(cfg, 32, &mut rng);
        let data: Vec<_> = (0..8)
            .map(|i| sentence(&[4 + i, 5 + i, 6 + i, 7], &[8 + i, 9, 10 + i]))
            .collect();
        let uniform = math::ln(32.0);
        let a = s2s.eval_loss(&data, 4).unwrap();
        let b = lm.eval_loss(&data, 4).unwrap();
        assert!((a - uniform).abs() < 0.15, "{a}");
        assert!((b - uniform).abs() < 0.15, "{b}");
    }

    #[test]
    fn loss_ignores_sentence_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        let mut data: Vec<_> = (0..6).map(|i| sentence(&[4 + i, 5, 6][..1 + i % 3], &[7, 8 + i])).collect();
        let a = s2s.eval_loss(&data, 1).unwrap();
        data.reverse();
        let b = s2s.eval_loss(&data, 3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_target_and_short_lm_input_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        let lm = LanguageModel::new(small(), 20, &mut rng);
        assert!(s2s.eval_loss(&[sentence(&[4], &[])], 1).is_err());
        assert!(lm.eval_loss(&[sentence(&[4], &[4])], 1).is_err());
    }

    #[test]
    fn padding_does_not_change_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s2s = Seq2SeqModel::new(small(), 20, 20, &mut rng);
        let lm = LanguageModel::new(small(), 20, &mut rng);
        let data = [sentence(&[4, 5], &[6, 7, 8]), sentence(&[9, 10, 11, 12, 13], &[14])];
        for m in [TaskModel::Translation(s2s), TaskModel::Language(lm)] {
            let one = m.eval_loss(&data, 1).unwrap();
            let two = m.eval_loss(&data, 2).unwrap();
            assert!((one - two).abs() < 1e-10, "{one} {two}");
        }
    }

    #[test]
    fn seq2seq_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ModelConfig {
            embed: 3,
            hidden: 3,
            enc_layers: 1,
            dec_layers: 1,
            attention: 3,
        };
        let m = Seq2SeqModel::new(cfg, 8, 8, &mut rng);
        let a = sentence(&[4, 5, 6], &[5, 7]);
        let b = sentence(&[7, 4], &[6, 6, 4]);
        let batch = Batch::new(&[&a, &b]);
        let loss_at = |point: &[Tensor]| {
            let mut g = Graph::new();
            let vars = point.iter().map(|t| g.constant(t.clone())).collect();
            let loss = m.batch_loss(&mut g, &Bound::from_vars(vars), &batch).unwrap().0;
            g.value(loss).data()[0]
        };
        let mut g = Graph::new();
        let p = g.bind(&m.params, true);
        let loss = m.batch_loss(&mut g, &p, &batch).unwrap().0;
        let grads = g.backward(loss).unwrap();
        let mut point = m.params.tensors().to_vec();
        let step = 1e-5;
        // absolute error: many components are exactly zero (unused rows)
        for (k, var) in p.vars().iter().enumerate() {
            for j in 0..point[k].len() {
                let orig = point[k].data()[j];
                point[k].data_mut()[j] = orig + step;
                let up = loss_at(&point);
                point[k].data_mut()[j] = orig - step;
                let down = loss_at(&point);
                point[k].data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * step);
                let analytic = grads.get(*var).map_or(0.0, |t| t.data()[j]);
                assert!((analytic - numeric).abs() < 1e-8, "{} [{j}]: {analytic} vs {numeric}", m.params.name(crate::autodiff::ParamId(k)));
            }
        }
    }

    #[test]
    fn lm_memorizes_one_sentence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut lm = LanguageModel::new(small(), 16, &mut rng);
        let s = sentence(&[4, 9, 5, 12, 7, 7, 10], &[]);
        let batch = Batch::new(&[&s]);
        let mut opt = OptimizerState::adam(0.05);
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            let mut g = Graph::new();
            let p = g.bind(&lm.params, true);
            let (loss, _) = lm.batch_loss(&mut g, &p, &batch).unwrap();
            last = g.value(loss).data()[0];
            let grads = g.backward(loss).unwrap();
            opt.step(&mut lm.params, &p, &grads).unwrap();
        }
        assert!(last < 0.01, "{last}");
    }
}
