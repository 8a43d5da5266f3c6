use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::graph::{matmul_nt_into, matmul_tn_into, Broadcast, Graph, Op, Var};
use crate::{Error, Result, Tensor};

/// Gradients of a scalar loss with respect to every reachable leaf that
/// requires a gradient, keyed by the leaf's node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientMap {
    entries: BTreeMap<Var, Tensor>,
}

impl GradientMap {
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.entries.get(&leaf)
    }

    pub fn contains(&self, leaf: Var) -> bool {
        self.entries.contains_key(&leaf)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}

struct Buffers<'g> {
    graph: &'g Graph,
    grads: Vec<Option<Vec<f64>>>,
}

impl Buffers<'_> {
    /// Runs `f` on the gradient buffer of `v`, creating it on first use.
    /// Nodes that do not require a gradient are skipped entirely.
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.graph.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let buf = self.grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }

    fn add(&mut self, v: Var, g: &[f64]) {
        self.with(v, |buf| {
            for (b, x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        });
    }

    /// Accumulates `g` (shaped like the broadcast result) into the operand
    /// that was broadcast, summing over the repeated axis.
    fn add_reduced(&mut self, v: Var, g: &[f64], bc: Broadcast, cols: usize, sign: f64) {
        self.with(v, |buf| match bc {
            Broadcast::Same => {
                for (b, x) in buf.iter_mut().zip(g) {
                    *b += sign * x;
                }
            }
            Broadcast::Row => {
                for row in g.chunks(cols) {
                    for (b, x) in buf.iter_mut().zip(row) {
                        *b += sign * x;
                    }
                }
            }
            Broadcast::Col => {
                for (b, row) in buf.iter_mut().zip(g.chunks(cols)) {
                    *b += sign * row.iter().sum::<f64>();
                }
            }
        });
    }
}

fn bcast_at(data: &[f64], bc: Broadcast, i: usize, cols: usize) -> f64 {
    match bc {
        Broadcast::Same => data[i],
        Broadcast::Row => data[i % cols],
        Broadcast::Col => data[i / cols],
    }
}

impl Graph {
    /// Reverse-mode gradients of a scalar `loss`.
    ///
    /// Contributions along multiple paths into a node are summed. The graph
    /// is not modified, so repeated calls return identical maps.
    pub fn backward(&self, loss: Var) -> Result<GradientMap> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut b = Buffers {
            graph: self,
            grads: vec![None; loss.0 + 1],
        };
        b.with(loss, |buf| buf[0] = 1.0);
        let mut entries = BTreeMap::new();

        for id in (0..=loss.0).rev() {
            let Some(g) = b.grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let out = node.value.data();
            let cols = *node.value.shape().last().unwrap_or(&1);
            match &node.op {
                Op::Leaf => {
                    entries.insert(Var(id), Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::Add(x, y, bc) => {
                    b.add(*x, &g);
                    b.add_reduced(*y, &g, *bc, cols, 1.0);
                }
                Op::Sub(x, y, bc) => {
                    b.add(*x, &g);
                    b.add_reduced(*y, &g, *bc, cols, -1.0);
                }
                Op::Mul(x, y, bc) => {
                    let (xv, yv) = (self.value(*x).data(), self.value(*y).data());
                    if self.requires_grad(*x) {
                        let gx: Vec<f64> = g
                            .iter()
                            .enumerate()
                            .map(|(i, gi)| gi * bcast_at(yv, *bc, i, cols))
                            .collect();
                        b.add(*x, &gx);
                    }
                    if self.requires_grad(*y) {
                        let gy: Vec<f64> = g.iter().zip(xv).map(|(gi, xi)| gi * xi).collect();
                        b.add_reduced(*y, &gy, *bc, cols, 1.0);
                    }
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    b.with(*x, |buf| {
                        for (o, gi) in buf.iter_mut().zip(&g) {
                            *o += f * gi;
                        }
                    });
                }
                Op::GradMultiply(x, f) => {
                    let f = *f;
                    b.with(*x, |buf| {
                        for (o, gi) in buf.iter_mut().zip(&g) {
                            *o += f * gi;
                        }
                    });
                }
                Op::MatMul(x, y) => {
                    let (m, k) = self.value(*x).dims2().expect("matmul lhs is 2-d");
                    let n = cols;
                    let (xv, yv) = (self.value(*x).data(), self.value(*y).data());
                    // dX = dC * Y^T
                    b.with(*x, |buf| matmul_nt_into(&g, yv, buf, m, k, n));
                    // dY = X^T * dC
                    b.with(*y, |buf| matmul_tn_into(xv, &g, buf, m, k, n));
                }
                Op::Concat { parts, axis } => {
                    let shape = node.value.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let total = shape[*axis] * inner;
                    let mut offset = 0;
                    for p in parts {
                        let block = self.shape(*p)[*axis] * inner;
                        b.with(*p, |buf| {
                            for o in 0..outer {
                                let src = &g[o * total + offset..o * total + offset + block];
                                for (d, s) in buf[o * block..(o + 1) * block].iter_mut().zip(src) {
                                    *d += s;
                                }
                            }
                        });
                        offset += block;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let ishape = self.shape(*input);
                    let outer: usize = ishape[..*axis].iter().product();
                    let inner: usize = ishape[axis + 1..].iter().product();
                    let len = node.value.shape()[*axis];
                    let iblock = ishape[*axis] * inner;
                    let oblock = len * inner;
                    let start = *start;
                    b.with(*input, |buf| {
                        for o in 0..outer {
                            let dst = &mut buf[o * iblock + start * inner..][..oblock];
                            for (d, s) in dst.iter_mut().zip(&g[o * oblock..(o + 1) * oblock]) {
                                *d += s;
                            }
                        }
                    });
                }
                Op::Reshape(x) => b.add(*x, &g),
                Op::Gather { table, ids } => {
                    let dim = cols;
                    b.with(*table, |buf| {
                        for (r, &i) in ids.iter().enumerate() {
                            for (d, s) in buf[i * dim..(i + 1) * dim]
                                .iter_mut()
                                .zip(&g[r * dim..(r + 1) * dim])
                            {
                                *d += s;
                            }
                        }
                    });
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = g.iter().zip(out).map(|(gi, y)| gi * (1.0 - y * y)).collect();
                    b.add(*x, &gx);
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = g.iter().zip(out).map(|(gi, y)| gi * y * (1.0 - y)).collect();
                    b.add(*x, &gx);
                }
                Op::Exp(x) => {
                    let gx: Vec<f64> = g.iter().zip(out).map(|(gi, y)| gi * y).collect();
                    b.add(*x, &gx);
                }
                Op::LogSoftmax(x) => {
                    let mut gx = Vec::with_capacity(g.len());
                    for (grow, yrow) in g.chunks(cols).zip(out.chunks(cols)) {
                        let s: f64 = grow.iter().sum();
                        gx.extend(
                            grow.iter()
                                .zip(yrow)
                                .map(|(gi, yi)| gi - crate::math::exp(*yi) * s),
                        );
                    }
                    b.add(*x, &gx);
                }
                Op::NllPick { input, targets } => {
                    let classes = *self.shape(*input).last().expect("nll_pick input is 2-d");
                    b.with(*input, |buf| {
                        for (i, t) in targets.iter().enumerate() {
                            if let Some(t) = t {
                                buf[i * classes + t] -= g[i];
                            }
                        }
                    });
                }
                Op::Sum(x) => {
                    let g0 = g[0];
                    b.with(*x, |buf| buf.iter_mut().for_each(|o| *o += g0));
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len() as f64;
                    let g0 = g[0] / n;
                    b.with(*x, |buf| buf.iter_mut().for_each(|o| *o += g0));
                }
            }
        }
        Ok(GradientMap { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(&[3.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn tanh_gradient_matches_closed_form() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(0.5));
        let y = g.tanh(x);
        let grads = g.backward(y).unwrap();
        let h = 1e-5;
        let fd = (libm::tanh(0.5 + h) - libm::tanh(0.5 - h)) / (2.0 * h);
        let analytic = grads.get(x).unwrap().data()[0];
        assert!((analytic - fd).abs() < 1e-9);
        assert!((analytic - 0.786448).abs() < 1e-6);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(&[1.0, 2.0]));
        assert_eq!(g.backward(x).unwrap_err(), Error::NonScalarLoss(vec![2]));
    }

    #[test]
    fn grad_multiply_scales_upstream() {
        for (factor, expect) in [(0.05, 0.1), (-0.05, -0.1), (0.0, 0.0)] {
            let mut g = Graph::new();
            let x = g.variable(Tensor::scalar(1.0));
            let y = g.grad_multiply(x, factor);
            let loss = g.scale(y, 2.0);
            let grads = g.backward(loss).unwrap();
            assert_eq!(grads.get(x).unwrap().data()[0], expect);
        }
    }

    #[test]
    fn constants_and_detached_inputs_receive_nothing() {
        let mut g = Graph::new();
        let w = g.variable(Tensor::vector(&[2.0]));
        let c = g.constant(Tensor::vector(&[5.0]));
        let d = g.detach(w);
        let p = g.mul(w, c).unwrap();
        let q = g.mul(p, d).unwrap();
        let loss = g.sum(q);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get(w).unwrap().data(), &[10.0]);
        assert!(!grads.contains(c));
    }

    #[test]
    fn paths_accumulate() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(2.0));
        let a = g.scale(x, 3.0);
        let b = g.mul(x, x).unwrap();
        let s = g.add(a, b).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn backward_is_pure() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(&[0.3, -0.7, 1.1]));
        let t = g.tanh(x);
        let l = g.log_softmax(t);
        let loss = g.mean(l);
        assert_eq!(g.backward(loss).unwrap(), g.backward(loss).unwrap());
    }
}
