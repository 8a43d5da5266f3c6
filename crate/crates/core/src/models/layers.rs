use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Bound, Graph, ParamId, ParamSet, Var};
use crate::math;
use crate::{Result, Tensor};

/// `y = x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        Self::scaled(params, name, inputs, outputs, 1.0 / math::sqrt(inputs as f64), rng)
    }

    /// Weights and bias drawn uniformly from `[-scale, scale]`.
    pub fn scaled<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.uniform(format!("{name}.w"), &[inputs, outputs], scale, rng);
        let b = params.uniform(format!("{name}.b"), &[1, outputs], scale, rng);
        Self { w, b, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.affine(x, p.var(self.w), p.var(self.b))
    }
}

/// One LSTM layer in one direction. Gate order in the fused weights is
/// input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

/// Per-position `[batch, 1]` masks; `None` where every row is a real token.
pub type MaskColumns = Vec<Option<Var>>;

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / math::sqrt(hidden as f64);
        let w_ih = params.uniform(format!("{name}.w_ih"), &[inputs, 4 * hidden], scale, rng);
        let w_hh = params.uniform(format!("{name}.w_hh"), &[hidden, 4 * hidden], scale, rng);
        let b = params.uniform(format!("{name}.b"), &[1, 4 * hidden], scale, rng);
        // forget gate starts open
        for v in &mut params.get_mut(b).data_mut()[hidden..2 * hidden] {
            *v += 1.0;
        }
        Self { w_ih, w_hh, b, hidden }
    }

    /// One step. Rows whose mask is 0 keep their previous state.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        state: (Var, Var),
        mask: Option<Var>,
    ) -> Result<(Var, Var)> {
        let (h, c) = state;
        let d = self.hidden;
        let xi = g.matmul(x, p.var(self.w_ih))?;
        let hh = g.matmul(h, p.var(self.w_hh))?;
        let z = g.add(xi, hh)?;
        let z = g.add(z, p.var(self.b))?;
        let i = g.slice(z, 1, 0, d)?;
        let f = g.slice(z, 1, d, d)?;
        let u = g.slice(z, 1, 2 * d, d)?;
        let o = g.slice(z, 1, 3 * d, d)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let u = g.tanh(u);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c)?;
        let iu = g.mul(i, u)?;
        let c_new = g.add(fc, iu)?;
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        match mask {
            None => Ok((h_new, c_new)),
            Some(m) => Ok((blend(g, m, h_new, h)?, blend(g, m, c_new, c)?)),
        }
    }

    /// Runs over `inputs` (one `[batch, in]` var per position) from a zero
    /// state and returns the hidden state at every position, in input order.
    pub fn run(
        &self,
        g: &mut Graph,
        p: &Bound,
        inputs: &[Var],
        masks: &MaskColumns,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let batch = match inputs.first() {
            Some(x) => g.shape(*x)[0],
            None => return Ok(Vec::new()),
        };
        let zero = g.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut state = (zero, zero);
        let mut out = alloc::vec![zero; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            state = self.step(g, p, inputs[t], state, masks[t])?;
            out[t] = state.0;
        }
        Ok(out)
    }
}

/// `prev + m * (new - prev)`: `new` where the mask is 1, `prev` where 0.
fn blend(g: &mut Graph, m: Var, new: Var, prev: Var) -> Result<Var> {
    let diff = g.sub(new, prev)?;
    let kept = g.mul(diff, m)?;
    g.add(prev, kept)
}

/// Mask columns for each position of a `[batch][width]` boolean mask.
pub fn mask_columns(g: &mut Graph, mask: &[Vec<bool>]) -> MaskColumns {
    let width = mask.first().map_or(0, Vec::len);
    (0..width)
        .map(|t| {
            if mask.iter().all(|r| r[t]) {
                None
            } else {
                let col = mask.iter().map(|r| if r[t] { 1.0 } else { 0.0 }).collect();
                Some(g.constant(Tensor::from_parts(alloc::vec![mask.len(), 1], col)))
            }
        })
        .collect()
}

pub fn embedding<R: Rng + ?Sized>(
    params: &mut ParamSet,
    name: &str,
    vocab: usize,
    dim: usize,
    rng: &mut R,
) -> ParamId {
    params.uniform(format!("{name}.table"), &[vocab, dim], 0.1, rng)
}

/// Summed negative log-likelihood of `targets` under `logits`.
pub fn nll_sum(g: &mut Graph, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
    let lp = g.log_softmax(logits);
    let picked = g.nll_pick(lp, targets)?;
    Ok(g.sum(picked))
}

/// Index of the largest entry of each row.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let cols = *t.shape().last().unwrap_or(&1);
    t.data()
        .chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masked_rows_keep_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let lstm = Lstm::new(&mut params, "l", 3, 4, &mut rng);
        let mut g = Graph::new();
        let p = g.bind(&params, false);
        let x = g.constant(Tensor::full(&[2, 3], 0.5));
        let h0 = g.constant(Tensor::full(&[2, 4], 0.25));
        let m = g.constant(Tensor::new(alloc::vec![2, 1], alloc::vec![1.0, 0.0]).unwrap());
        let (h, _) = lstm.step(&mut g, &p, x, (h0, h0), Some(m)).unwrap();
        assert_eq!(g.value(h).row(1), &[0.25; 4]);
        assert_ne!(g.value(h).row(0), &[0.25; 4]);
    }

    #[test]
    fn lstm_step_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::new();
        let lstm = Lstm::new(&mut params, "l", 2, 3, &mut rng);
        let inputs: Vec<Tensor> = params.tensors().to_vec();
        let x = Tensor::new(alloc::vec![2, 2], alloc::vec![0.3, -0.2, 0.8, 0.1]).unwrap();
        let mut all = inputs.clone();
        all.push(x);
        let err = check_gradients(
            |g, v| {
                let bound_like = crate::autodiff::Bound::from_vars(v[..3].to_vec());
                let zero = g.constant(Tensor::zeros(&[2, 3]));
                let (h1, c1) = lstm.step(g, &bound_like, v[3], (zero, zero), None)?;
                let (h2, _) = lstm.step(g, &bound_like, v[3], (h1, c1), None)?;
                let s = g.tanh(h2);
                Ok(g.sum(s))
            },
            &all,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn argmax_picks_first_maximum() {
        let t = Tensor::new(alloc::vec![2, 3], alloc::vec![1.0, 3.0, 3.0, -1.0, -2.0, -0.5]).unwrap();
        assert_eq!(argmax_rows(&t), alloc::vec![1, 2]);
    }
}
