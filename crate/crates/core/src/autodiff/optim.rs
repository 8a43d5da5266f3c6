use alloc::vec::Vec;

use super::{Bound, GradientMap, ParamSet};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            kind,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    /// Adam with (beta1, beta2, eps) = (0.9, 0.999, 1e-8).
    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::ADAM, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter of `params`.
    ///
    /// `bound` maps the parameters to the leaves of the graph that produced
    /// `grads`. Fails without touching anything if any parameter lacks a
    /// gradient.
    pub fn step(&mut self, params: &mut ParamSet, bound: &Bound, grads: &GradientMap) -> Result<()> {
        let mut picked = Vec::with_capacity(params.len());
        for (id, name, _) in params.iter() {
            let g = grads
                .get(bound.var(id))
                .ok_or_else(|| Error::MissingGradient(name.into()))?;
            picked.push(g);
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, g) in picked.into_iter().enumerate() {
                    let p = params.get_mut(super::ParamId(i));
                    for (w, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first.is_empty() {
                    self.first = params.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
                    self.second = self.first.clone();
                }
                self.beta1_pow *= beta1;
                self.beta2_pow *= beta2;
                let c1 = 1.0 - self.beta1_pow;
                let c2 = 1.0 - self.beta2_pow;
                for (i, g) in picked.into_iter().enumerate() {
                    let p = params.get_mut(super::ParamId(i));
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * mhat / (math::sqrt(vhat) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::Tensor;

    fn one_param(value: f64, grad: f64, opt: &mut OptimizerState) -> f64 {
        let mut params = ParamSet::new();
        params.push("p", Tensor::scalar(value));
        let mut g = Graph::new();
        let bound = g.bind(&params, true);
        let loss = g.scale(bound.vars()[0], grad);
        let grads = g.backward(loss).unwrap();
        opt.step(&mut params, &bound, &grads).unwrap();
        params.tensors()[0].data()[0]
    }

    #[test]
    fn sgd_is_exact() {
        assert_eq!(one_param(1.0, 0.5, &mut OptimizerState::sgd(0.1)), 0.95);
        assert_eq!(one_param(1.0, 0.0, &mut OptimizerState::sgd(0.1)), 1.0);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // t = 1: mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        let got = one_param(1.0, 1.0, &mut OptimizerState::adam(0.1));
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.9).abs() < 1e-8);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut params = ParamSet::new();
        params.push("used", Tensor::scalar(1.0));
        params.push("decoder.unused", Tensor::scalar(1.0));
        let mut g = Graph::new();
        let bound = g.bind(&params, true);
        let loss = g.sum(bound.vars()[0]);
        let grads = g.backward(loss).unwrap();
        let mut opt = OptimizerState::sgd(0.1);
        let err = opt.step(&mut params, &bound, &grads).unwrap_err();
        assert_eq!(err, Error::MissingGradient("decoder.unused".into()));
        assert_eq!(params.tensors()[0].data()[0], 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
