use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{argmax_rows, embedding, mask_columns, nll_sum, Linear, Lstm};
use super::{check_ids, Encoder, ModelConfig};
use crate::autodiff::{Bound, Graph, ParamId, ParamSet, Var};
use crate::data::{Batch, EncodedSentence, BOS, EOS, PAD};
use crate::error::invalid;
use crate::math;
use crate::{Result, Tensor};

/// Bidirectional LSTM encoder plus an LSTM decoder with additive attention.
///
/// The encoder output at each source position is the concatenation of the
/// forward and backward states of the top layer, `2 * hidden` wide.
#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub params: ParamSet,
    src_embed: ParamId,
    encoder: Vec<[Lstm; 2]>,
    tgt_embed: ParamId,
    decoder: Vec<Lstm>,
    att_key: ParamId,
    att_query: Linear,
    att_score: ParamId,
    out: Linear,
}

/// Encoder states laid out for attention: row `b * width + t` holds
/// position `t` of sentence `b`.
struct Memory {
    values: Var,
    keys: Var,
    pool: Var,
    mask_bias: Option<Var>,
    repeat: Vec<usize>,
    batch: usize,
    width: usize,
}

impl Seq2SeqModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, src_vocab: usize, tgt_vocab: usize, rng: &mut R) -> Self {
        let ModelConfig {
            embed,
            hidden,
            enc_layers,
            dec_layers,
            attention,
        } = config.clone();
        let mut params = ParamSet::new();
        let src_embed = embedding(&mut params, "encoder.embed", src_vocab, embed, rng);
        let mut encoder = Vec::new();
        for l in 0..enc_layers {
            let inputs = if l == 0 { embed } else { 2 * hidden };
            let fwd = Lstm::new(&mut params, &format!("encoder.lstm{l}.fwd"), inputs, hidden, rng);
            let bwd = Lstm::new(&mut params, &format!("encoder.lstm{l}.bwd"), inputs, hidden, rng);
            encoder.push([fwd, bwd]);
        }
        let tgt_embed = embedding(&mut params, "decoder.embed", tgt_vocab, embed, rng);
        let mut decoder = Vec::new();
        for l in 0..dec_layers {
            let inputs = if l == 0 { embed + 2 * hidden } else { hidden };
            decoder.push(Lstm::new(&mut params, &format!("decoder.lstm{l}"), inputs, hidden, rng));
        }
        let ks = 1.0 / math::sqrt((2 * hidden) as f64);
        let att_key = params.uniform("decoder.attention.key", &[2 * hidden, attention], ks, rng);
        let att_query = Linear::new(&mut params, "decoder.attention.query", hidden, attention, rng);
        let att_score = params.uniform(
            "decoder.attention.score",
            &[attention, 1],
            1.0 / math::sqrt(attention as f64),
            rng,
        );
        let out = Linear::new(&mut params, "decoder.out", 3 * hidden, tgt_vocab, rng);
        Self {
            config,
            src_vocab,
            tgt_vocab,
            params,
            src_embed,
            encoder,
            tgt_embed,
            decoder,
            att_key,
            att_query,
            att_score,
            out,
        }
    }

    /// Top-layer encoder states, one `[batch, 2 * hidden]` var per position.
    pub fn encode_batch(&self, g: &mut Graph, p: &Bound, src: &[Vec<usize>], mask: &[Vec<bool>]) -> Result<Vec<Var>> {
        for row in src {
            check_ids(row, self.src_vocab)?;
        }
        let width = src.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(invalid("empty source sentence"));
        }
        let masks = mask_columns(g, mask);
        let mut inputs = Vec::with_capacity(width);
        for t in 0..width {
            let col: Vec<usize> = src.iter().map(|r| r[t]).collect();
            inputs.push(g.gather(p.var(self.src_embed), &col)?);
        }
        for [fwd, bwd] in &self.encoder {
            let f = fwd.run(g, p, &inputs, &masks, false)?;
            let b = bwd.run(g, p, &inputs, &masks, true)?;
            inputs = f
                .into_iter()
                .zip(b)
                .map(|(x, y)| g.concat(&[x, y], 1))
                .collect::<Result<_>>()?;
        }
        Ok(inputs)
    }

    fn memory(&self, g: &mut Graph, p: &Bound, states: &[Var], mask: &[Vec<bool>]) -> Result<Memory> {
        let width = states.len();
        let batch = g.shape(states[0])[0];
        let stacked = g.concat(states, 0)?;
        let perm: Vec<usize> = (0..batch)
            .flat_map(|b| (0..width).map(move |t| t * batch + b))
            .collect();
        let values = g.gather(stacked, &perm)?;
        let keys = g.matmul(values, p.var(self.att_key))?;
        let mut pool = vec![0.0; batch * batch * width];
        for b in 0..batch {
            for t in 0..width {
                pool[b * batch * width + b * width + t] = 1.0;
            }
        }
        let pool = g.constant(Tensor::from_parts(vec![batch, batch * width], pool));
        let mask_bias = if mask.iter().flatten().all(|m| *m) {
            None
        } else {
            let bias = mask
                .iter()
                .flat_map(|r| r.iter().map(|&m| if m { 0.0 } else { -1e9 }))
                .collect();
            Some(g.constant(Tensor::from_parts(vec![batch, width], bias)))
        };
        let repeat = (0..batch).flat_map(|b| core::iter::repeat_n(b, width)).collect();
        Ok(Memory {
            values,
            keys,
            pool,
            mask_bias,
            repeat,
            batch,
            width,
        })
    }

    /// Additive attention: context for a `[batch, hidden]` query.
    fn attend(&self, g: &mut Graph, p: &Bound, mem: &Memory, query: Var) -> Result<Var> {
        let u = self.att_query.forward(g, p, query)?;
        let u = g.gather(u, &mem.repeat)?;
        let e = g.add(mem.keys, u)?;
        let e = g.tanh(e);
        let s = g.matmul(e, p.var(self.att_score))?;
        let mut scores = g.reshape(s, &[mem.batch, mem.width])?;
        if let Some(bias) = mem.mask_bias {
            scores = g.add(scores, bias)?;
        }
        let lp = g.log_softmax(scores);
        let alpha = g.exp(lp);
        let alpha = g.reshape(alpha, &[mem.batch * mem.width, 1])?;
        let weighted = g.mul(mem.values, alpha)?;
        g.matmul(mem.pool, weighted)
    }

    fn decoder_step(
        &self,
        g: &mut Graph,
        p: &Bound,
        mem: &Memory,
        prev: &[usize],
        states: &mut [(Var, Var)],
    ) -> Result<Var> {
        let query = states.last().expect("at least one decoder layer").0;
        let ctx = self.attend(g, p, mem, query)?;
        let emb = g.gather(p.var(self.tgt_embed), prev)?;
        let mut x = g.concat(&[emb, ctx], 1)?;
        for (layer, state) in self.decoder.iter().zip(states.iter_mut()) {
            *state = layer.step(g, p, x, *state, None)?;
            x = state.0;
        }
        let feat = g.concat(&[x, ctx], 1)?;
        self.out.forward(g, p, feat)
    }

    fn initial_states(&self, g: &mut Graph, batch: usize) -> Vec<(Var, Var)> {
        let zero = g.constant(Tensor::zeros(&[batch, self.config.hidden]));
        vec![(zero, zero); self.decoder.len()]
    }

    /// Teacher-forced mean per-token negative log-likelihood (nats) of the
    /// batch targets followed by end-of-sentence. Also returns the encoder
    /// states so callers can probe them.
    pub fn batch_loss(&self, g: &mut Graph, p: &Bound, batch: &Batch) -> Result<(Var, Vec<Var>)> {
        let lens: Vec<usize> = batch
            .tgt_mask
            .iter()
            .map(|r| r.iter().filter(|m| **m).count())
            .collect();
        if lens.contains(&0) {
            return Err(invalid("empty target sentence"));
        }
        for row in &batch.tgt {
            check_ids(row, self.tgt_vocab)?;
        }
        let states = self.encode_batch(g, p, &batch.src, &batch.src_mask)?;
        let mem = self.memory(g, p, &states, &batch.src_mask)?;
        let mut dec = self.initial_states(g, batch.size());
        let mut total: Option<Var> = None;
        for t in 0..=batch.tgt_width() {
            let prev: Vec<usize> = (0..batch.size())
                .map(|b| if t == 0 { BOS } else if t <= lens[b] { batch.tgt[b][t - 1] } else { PAD })
                .collect();
            let targets: Vec<Option<usize>> = (0..batch.size())
                .map(|b| match t.cmp(&lens[b]) {
                    core::cmp::Ordering::Less => Some(batch.tgt[b][t]),
                    core::cmp::Ordering::Equal => Some(EOS),
                    core::cmp::Ordering::Greater => None,
                })
                .collect();
            let logits = self.decoder_step(g, p, &mem, &prev, &mut dec)?;
            let step = nll_sum(g, logits, &targets)?;
            total = Some(match total {
                None => step,
                Some(acc) => g.add(acc, step)?,
            });
        }
        let count: usize = lens.iter().map(|l| l + 1).sum();
        let loss = g.scale(total.expect("at least one step"), 1.0 / count as f64);
        Ok((loss, states))
    }

    /// Greedy decoding of every source sentence in the batch. Output stops
    /// at end-of-sentence or after `2 * len + 4` tokens.
    pub fn greedy_decode(&self, batch: &Batch) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new();
        let p = g.bind(&self.params, false);
        let states = self.encode_batch(&mut g, &p, &batch.src, &batch.src_mask)?;
        let mem = self.memory(&mut g, &p, &states, &batch.src_mask)?;
        let mut dec = self.initial_states(&mut g, batch.size());
        let limits: Vec<usize> = batch
            .src_mask
            .iter()
            .map(|r| 2 * r.iter().filter(|m| **m).count() + 4)
            .collect();
        let max = limits.iter().copied().max().unwrap_or(0);
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); batch.size()];
        let mut done = vec![false; batch.size()];
        let mut prev = vec![BOS; batch.size()];
        for _ in 0..max {
            let logits = self.decoder_step(&mut g, &p, &mem, &prev, &mut dec)?;
            let next = argmax_rows(g.value(logits));
            for b in 0..batch.size() {
                if done[b] {
                    continue;
                }
                if next[b] == EOS || out[b].len() >= limits[b] {
                    done[b] = true;
                } else {
                    out[b].push(next[b]);
                }
            }
            if done.iter().all(|d| *d) {
                break;
            }
            prev = next;
        }
        Ok(out)
    }

    /// Mean per-token loss over whole sentences, evaluated in batches.
    pub fn eval_loss(&self, sentences: &[EncodedSentence], batch_size: usize) -> Result<f64> {
        let mut nll = 0.0;
        let mut count = 0usize;
        for chunk in sentences.chunks(batch_size.max(1)) {
            let batch = Batch::new(&chunk.iter().collect::<Vec<_>>());
            let mut g = Graph::new();
            let p = g.bind(&self.params, false);
            let (loss, _) = self.batch_loss(&mut g, &p, &batch)?;
            let n = batch.tgt_tokens() + batch.size();
            nll += g.value(loss).data()[0] * n as f64;
            count += n;
        }
        if count == 0 {
            return Err(invalid("no sentences to evaluate"));
        }
        Ok(nll / count as f64)
    }
}

impl Encoder for Seq2SeqModel {
    fn width(&self) -> usize {
        2 * self.config.hidden
    }

    fn encode(&self, ids: &[usize]) -> Result<Tensor> {
        if ids.is_empty() {
            return Err(invalid("empty source sentence"));
        }
        let mut g = Graph::new();
        let p = g.bind(&self.params, false);
        let states = self.encode_batch(&mut g, &p, &[ids.to_vec()], &[vec![true; ids.len()]])?;
        let h = g.concat(&states, 0)?;
        Ok(g.value(h).clone())
    }

    fn encode_all(&self, seqs: &[&[usize]]) -> Result<Vec<Tensor>> {
        super::encode_all_batched(seqs, self.width(), |g, p, src, mask| self.encode_batch(g, p, src, mask), &self.params)
    }
}
