use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{embedding, mask_columns, nll_sum, Linear, Lstm};
use super::{check_ids, Encoder, ModelConfig};
use crate::autodiff::{Bound, Graph, ParamId, ParamSet, Var};
use crate::data::{Batch, EncodedSentence};
use crate::error::invalid;
use crate::{Result, Tensor};

/// Unidirectional LSTM language model over source sentences. The top LSTM
/// layer is the encoder whose states get probed; the output projection is
/// the decoder.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub config: ModelConfig,
    pub vocab: usize,
    pub params: ParamSet,
    embed: ParamId,
    layers: Vec<Lstm>,
    out: Linear,
}

impl LanguageModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocab: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let embed = embedding(&mut params, "encoder.embed", vocab, config.embed, rng);
        let layers = (0..config.enc_layers)
            .map(|l| {
                let inputs = if l == 0 { config.embed } else { config.hidden };
                Lstm::new(&mut params, &format!("encoder.lstm{l}"), inputs, config.hidden, rng)
            })
            .collect();
        let out = Linear::new(&mut params, "decoder.out", config.hidden, vocab, rng);
        Self {
            config,
            vocab,
            params,
            embed,
            layers,
            out,
        }
    }

    /// Top-layer states, one `[batch, hidden]` var per position. The state at
    /// position `t` has read tokens `0..=t`.
    pub fn encode_batch(&self, g: &mut Graph, p: &Bound, src: &[Vec<usize>], mask: &[Vec<bool>]) -> Result<Vec<Var>> {
        for row in src {
            check_ids(row, self.vocab)?;
        }
        let width = src.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(invalid("empty sentence"));
        }
        let masks = mask_columns(g, mask);
        let mut inputs = Vec::with_capacity(width);
        for t in 0..width {
            let col: Vec<usize> = src.iter().map(|r| r[t]).collect();
            inputs.push(g.gather(p.var(self.embed), &col)?);
        }
        for layer in &self.layers {
            inputs = layer.run(g, p, &inputs, &masks, false)?;
        }
        Ok(inputs)
    }

    /// Mean per-token negative log-likelihood (nats) of tokens `1..len`
    /// given their prefixes, plus the per-position states.
    pub fn batch_loss(&self, g: &mut Graph, p: &Bound, batch: &Batch) -> Result<(Var, Vec<Var>)> {
        if batch.src_mask.iter().any(|r| r.iter().filter(|m| **m).count() < 2) {
            return Err(invalid("language model input needs at least two tokens"));
        }
        let states = self.encode_batch(g, p, &batch.src, &batch.src_mask)?;
        let mut total: Option<Var> = None;
        for t in 0..batch.src_width() - 1 {
            let targets: Vec<Option<usize>> = (0..batch.size())
                .map(|b| batch.src_mask[b][t + 1].then(|| batch.src[b][t + 1]))
                .collect();
            let logits = self.out.forward(g, p, states[t])?;
            let step = nll_sum(g, logits, &targets)?;
            total = Some(match total {
                None => step,
                Some(acc) => g.add(acc, step)?,
            });
        }
        let count = batch.src_tokens() - batch.size();
        let loss = g.scale(total.expect("width is at least two"), 1.0 / count as f64);
        Ok((loss, states))
    }

    pub fn eval_loss(&self, sentences: &[EncodedSentence], batch_size: usize) -> Result<f64> {
        let mut nll = 0.0;
        let mut count = 0usize;
        for chunk in sentences.chunks(batch_size.max(1)) {
            let batch = Batch::new(&chunk.iter().collect::<Vec<_>>());
            let mut g = Graph::new();
            let p = g.bind(&self.params, false);
            let (loss, _) = self.batch_loss(&mut g, &p, &batch)?;
            let n = batch.src_tokens() - batch.size();
            nll += g.value(loss).data()[0] * n as f64;
            count += n;
        }
        if count == 0 {
            return Err(invalid("no sentences to evaluate"));
        }
        Ok(nll / count as f64)
    }
}

impl Encoder for LanguageModel {
    fn width(&self) -> usize {
        self.config.hidden
    }

    fn encode(&self, ids: &[usize]) -> Result<Tensor> {
        if ids.is_empty() {
            return Err(invalid("empty sentence"));
        }
        let mut g = Graph::new();
        let p = g.bind(&self.params, false);
        let states = self.encode_batch(&mut g, &p, &[ids.to_vec()], &[alloc::vec![true; ids.len()]])?;
        let h = g.concat(&states, 0)?;
        Ok(g.value(h).clone())
    }

    fn encode_all(&self, seqs: &[&[usize]]) -> Result<Vec<Tensor>> {
        super::encode_all_batched(seqs, self.width(), |g, p, src, mask| self.encode_batch(g, p, src, mask), &self.params)
    }
}
