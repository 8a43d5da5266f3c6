use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::Linear;
use crate::autodiff::{Bound, Graph, ParamSet, Var};
use crate::error::invalid;
use crate::{Result, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeConfig {
    pub hidden: usize,
    /// Number of tanh hidden layers before the output layer.
    pub layers: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { hidden: 64, layers: 1 }
    }
}

/// MLP from a representation row to log-probabilities over label classes.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub config: ProbeConfig,
    pub inputs: usize,
    pub classes: usize,
    pub params: ParamSet,
    hidden: Vec<Linear>,
    out: Linear,
}

const EVAL_ROWS: usize = 4096;

impl ProbeModel {
    pub fn new<R: Rng + ?Sized>(config: ProbeConfig, inputs: usize, classes: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let mut width = inputs;
        let hidden = (0..config.layers)
            .map(|l| {
                let layer = Linear::new(&mut params, &format!("probe.hidden{l}"), width, config.hidden, rng);
                width = config.hidden;
                layer
            })
            .collect();
        // small output weights keep the untrained distribution near uniform
        let out = Linear::scaled(&mut params, "probe.out", width, classes, 0.1 / crate::math::sqrt(width as f64), rng);
        Self {
            config,
            inputs,
            classes,
            params,
            hidden,
            out,
        }
    }

    /// `[rows, classes]` log-probabilities.
    pub fn log_probs(&self, g: &mut Graph, p: &Bound, h: Var) -> Result<Var> {
        let mut x = h;
        for layer in &self.hidden {
            let z = layer.forward(g, p, x)?;
            x = g.tanh(z);
        }
        let logits = self.out.forward(g, p, x)?;
        Ok(g.log_softmax(logits))
    }

    /// Mean cross-entropy (nats) over rows whose label is present.
    pub fn loss(&self, g: &mut Graph, p: &Bound, h: Var, labels: &[Option<usize>]) -> Result<Var> {
        let rows = g.shape(h)[0];
        if rows != labels.len() {
            return Err(invalid(format!("{rows} representation rows but {} labels", labels.len())));
        }
        let count = labels.iter().filter(|l| l.is_some()).count();
        if count == 0 {
            return Err(invalid("no labelled rows"));
        }
        if let Some(&bad) = labels.iter().flatten().find(|&&l| l >= self.classes) {
            return Err(invalid(format!("label {bad} outside {} classes", self.classes)));
        }
        let lp = self.log_probs(g, p, h)?;
        let picked = g.nll_pick(lp, labels)?;
        let total = g.sum(picked);
        Ok(g.scale(total, 1.0 / count as f64))
    }

    /// Mean cross-entropy of `labels` given the rows of `features`, without
    /// building gradients.
    pub fn cross_entropy(&self, features: &Tensor, labels: &[usize]) -> Result<f64> {
        let (rows, width) = features
            .dims2()
            .ok_or_else(|| invalid("probe features must be a matrix"))?;
        if rows != labels.len() {
            return Err(invalid(format!("{rows} representation rows but {} labels", labels.len())));
        }
        if width != self.inputs {
            return Err(invalid(format!("probe expects width {}, got {width}", self.inputs)));
        }
        if rows == 0 {
            return Err(invalid("no labelled rows"));
        }
        let mut total = 0.0;
        for (start, chunk) in labels.chunks(EVAL_ROWS).enumerate().map(|(i, c)| (i * EVAL_ROWS, c)) {
            let data = features.data()[start * width..(start + chunk.len()) * width].to_vec();
            let mut g = Graph::new();
            let p = g.bind(&self.params, false);
            let h = g.constant(Tensor::from_parts(alloc::vec![chunk.len(), width], data));
            let targets: Vec<Option<usize>> = chunk.iter().map(|&l| Some(l)).collect();
            let loss = self.loss(&mut g, &p, h, &targets)?;
            total += g.value(loss).data()[0] * chunk.len() as f64;
        }
        Ok(total / rows as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OptimizerState;
    use crate::math;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untrained_probe_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probe = ProbeModel::new(ProbeConfig::default(), 16, 10, &mut rng);
        let data: Vec<f64> = (0..16 * 50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = Tensor::new(alloc::vec![50, 16], data).unwrap();
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let ce = probe.cross_entropy(&h, &labels).unwrap();
        assert!((ce - math::ln(10.0)).abs() < 0.1, "{ce}");
    }

    #[test]
    fn length_mismatch_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probe = ProbeModel::new(ProbeConfig::default(), 4, 3, &mut rng);
        assert!(probe.cross_entropy(&Tensor::zeros(&[3, 4]), &[0, 1]).is_err());
    }

    #[test]
    fn detached_input_gives_no_encoder_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probe = ProbeModel::new(ProbeConfig::default(), 3, 2, &mut rng);
        let mut enc = ParamSet::new();
        let w = enc.uniform("encoder.w", &[3, 3], 0.5, &mut rng);
        let mut g = Graph::new();
        let e = g.bind(&enc, true);
        let q = g.bind(&probe.params, true);
        let x = g.constant(Tensor::full(&[4, 3], 0.7));
        let h = g.matmul(x, e.var(w)).unwrap();
        let hd = g.detach(h);
        let loss = probe.loss(&mut g, &q, hd, &[Some(0), Some(1), None, Some(1)]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(e.var(w)).map_or(true, |t| t.data().iter().all(|v| *v == 0.0)));
        assert!(grads.contains(q.var(probe.params.find("probe.out.w").unwrap())));
        let loss = probe.loss(&mut g, &q, h, &[Some(0), Some(1), None, Some(1)]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(e.var(w)).unwrap().data().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn constant_input_converges_to_label_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut probe = ProbeModel::new(ProbeConfig::default(), 4, 2, &mut rng);
        let labels: Vec<Option<usize>> = (0..64).map(|i| Some(i % 2)).collect();
        let mut opt = OptimizerState::adam(0.01);
        for _ in 0..300 {
            let mut g = Graph::new();
            let p = g.bind(&probe.params, true);
            let h = g.constant(Tensor::zeros(&[64, 4]));
            let loss = probe.loss(&mut g, &p, h, &labels).unwrap();
            let grads = g.backward(loss).unwrap();
            opt.step(&mut probe.params, &p, &grads).unwrap();
        }
        let plain: Vec<usize> = labels.iter().flatten().copied().collect();
        let ce = probe.cross_entropy(&Tensor::zeros(&[64, 4]), &plain).unwrap();
        assert!(ce >= math::ln(2.0) - 0.01, "{ce}");
        assert!(ce < math::ln(2.0) + 0.01, "{ce}");
    }
}
