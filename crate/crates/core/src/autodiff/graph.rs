use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Tensor};

/// Handle to a node of a [`Graph`]. Ids are assigned in creation order,
/// which is also a topological order of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// How the right operand of an elementwise op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    Same,
    /// rhs is `[1, n]`, repeated for every row of `[m, n]`.
    Row,
    /// rhs is `[m, 1]`, repeated across every column of `[m, n]`.
    Col,
}

/// Record of the primitive that produced a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    MatMul(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Gather { table: Var, ids: Vec<usize> },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    LogSoftmax(Var),
    NllPick { input: Var, targets: Vec<Option<usize>> },
    Sum(Var),
    Mean(Var),
    GradMultiply(Var, f64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Gather { .. } => "gather",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::LogSoftmax(_) => "log_softmax",
            Op::NllPick { .. } => "nll_pick",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::GradMultiply(..) => "grad_multiply",
        }
    }

    pub fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Concat { parts, .. } => parts.clone(),
            Op::Slice { input, .. } | Op::NllPick { input, .. } => vec![*input],
            Op::Gather { table, .. } => vec![*table],
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::LogSoftmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::GradMultiply(a, _) => vec![*a],
        }
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// A define-by-run computation graph.
///
/// Every primitive evaluates eagerly and appends a node recording its
/// inputs. A graph is built for one forward pass, differentiated with
/// [`Graph::backward`](crate::autodiff::Graph::backward) and dropped.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis + 1..].iter().product(),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input node. Only leaves with `requires_grad` collect gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies `x` into a fresh constant leaf, cutting the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(Broadcast::Same);
        }
        if let ([m, n], [r, c]) = (sa, sb) {
            if *r == 1 && c == n {
                return Ok(Broadcast::Row);
            }
            if r == m && *c == 1 {
                return Ok(Broadcast::Col);
            }
        }
        Err(Error::Shape {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    /// Orders commutative operands so the broadcast side is on the right.
    fn commute(&self, a: Var, b: Var) -> (Var, Var) {
        if self.value(a).len() < self.value(b).len() {
            (b, a)
        } else {
            (a, b)
        }
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let bc = self.broadcast(name, a, b)?;
        let va = self.value(a);
        let vb = self.value(b).data();
        let cols = *va.shape().last().unwrap_or(&1);
        let out: Vec<f64> = match bc {
            Broadcast::Same => va.data().iter().zip(vb).map(|(x, y)| f(*x, *y)).collect(),
            Broadcast::Row => va
                .data()
                .chunks(cols)
                .flat_map(|row| row.iter().zip(vb).map(|(x, y)| f(*x, *y)))
                .collect::<Vec<_>>(),
            Broadcast::Col => va
                .data()
                .chunks(cols)
                .zip(vb)
                .flat_map(|(row, y)| row.iter().map(move |x| (*x, *y)))
                .map(|(x, y)| f(x, y))
                .collect(),
        };
        let value = Tensor::from_parts(va.shape().to_vec(), out);
        Ok(self.push(value, make(a, b, bc)))
    }

    /// Elementwise sum. One side may be a `[1, n]` row or `[m, 1]` column
    /// broadcast against an `[m, n]` matrix.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.commute(a, b);
        self.elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    /// Elementwise difference; only the right operand may broadcast.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.commute(a, b);
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let va = self.value(a);
        let value = Tensor::from_parts(
            va.shape().to_vec(),
            va.data().iter().map(|x| x * factor).collect(),
        );
        self.push(value, Op::Scale(a, factor))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => {
                return Err(Error::Shape {
                    op: "matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                })
            }
        };
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b)))
    }

    /// Concatenates tensors of equal rank along `axis`; all other
    /// dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| crate::error::invalid("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Shape {
                op: "concat",
                lhs: base,
                rhs: vec![axis],
            });
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, inner) = outer_inner(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let block = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::from_parts(shape, out);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                lhs: shape,
                rhs: vec![axis, start, len],
            });
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let src = self.value(x).data();
        let block = shape[axis] * inner;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * block + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        Ok(self.push(
            Tensor::from_parts(oshape, out),
            Op::Slice {
                input: x,
                axis,
                start,
            },
        ))
    }

    /// Reinterprets the values under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "reshape",
                lhs: v.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = Tensor::from_parts(shape.to_vec(), v.data().to_vec());
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Selects rows of a `[vocab, dim]` table: the result is `[ids.len(), dim]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, dim) = self.value(table).dims2().ok_or_else(|| Error::Shape {
            op: "gather",
            lhs: self.shape(table).to_vec(),
            rhs: vec![ids.len()],
        })?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::OutOfVocabulary { id: bad, size: rows });
        }
        if ids.is_empty() {
            return Err(crate::error::invalid("gather with no ids"));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), dim], out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let value = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|a| f(*a)).collect());
        self.push(value, op)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, math::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, math::exp, Op::Exp(x))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let cols = *v.shape().last().unwrap_or(&1);
        let mut out = Vec::with_capacity(v.len());
        for row in v.data().chunks(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + math::ln(row.iter().map(|a| math::exp(a - max)).sum::<f64>());
            out.extend(row.iter().map(|a| a - lse));
        }
        let value = Tensor::from_parts(v.shape().to_vec(), out);
        self.push(value, Op::LogSoftmax(x))
    }

    /// Negative log-likelihood of one target class per row of a
    /// `[m, classes]` log-probability matrix. `None` targets are masked and
    /// contribute 0. The result has shape `[m]`.
    pub fn nll_pick(&mut self, logp: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (rows, cols) = match self.value(logp).dims2() {
            Some((r, c)) if r == targets.len() => (r, c),
            _ => {
                return Err(Error::Shape {
                    op: "nll_pick",
                    lhs: self.shape(logp).to_vec(),
                    rhs: vec![targets.len()],
                })
            }
        };
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= cols) {
            return Err(Error::OutOfVocabulary { id: *bad, size: cols });
        }
        let src = self.value(logp).data();
        let out = (0..rows)
            .map(|i| targets[i].map_or(0.0, |t| -src[i * cols + t]))
            .collect();
        Ok(self.push(
            Tensor::from_parts(vec![rows], out),
            Op::NllPick {
                input: logp,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Gradient-multiply layer: identity on the forward pass, scales the
    /// incoming gradient by `factor` on the backward pass. A negative factor
    /// turns it into a gradient reversal layer.
    pub fn grad_multiply(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::GradMultiply(x, factor))
    }

    /// `x w + b` with `b` a `[1, n]` bias row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }
}

/// `out += a[m,k] * b[k,n]`. Rows are blocked by four so each row of `b` is
/// loaded once per block; every output still sums over `p` in order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i + 4 <= m {
        let (o0, rest) = out[i * n..(i + 4) * n].split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let brow = &b[p * n..(p + 1) * n];
            let (o0, o1, o2, o3) = (&mut o0[..n], &mut o1[..n], &mut o2[..n], &mut o3[..n]);
            for j in 0..n {
                let bv = brow[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
            }
        }
        i += 4;
    }
    for i in i..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k,n] += a[m,k]^T * g[m,n]`, summing over `i` in order.
pub(crate) fn matmul_tn_into(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let orow = &mut out[p * n..(p + 1) * n];
        let mut i = 0;
        while i + 4 <= m {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let g0 = &g[i * n..(i + 1) * n];
            let g1 = &g[(i + 1) * n..(i + 2) * n];
            let g2 = &g[(i + 2) * n..(i + 3) * n];
            let g3 = &g[(i + 3) * n..(i + 4) * n];
            for j in 0..n {
                let mut o = orow[j];
                o += a0 * g0[j];
                o += a1 * g1[j];
                o += a2 * g2[j];
                o += a3 * g3[j];
                orow[j] = o;
            }
            i += 4;
        }
        for i in i..m {
            let av = a[i * k + p];
            for (o, gv) in orow.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                *o += av * gv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] * b[k,n]^T`, each entry a [`dot`].
pub(crate) fn matmul_nt_into(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        let mut p = 0;
        while p + 4 <= k {
            let d = dot4(grow, [&b[p * n..(p + 1) * n], &b[(p + 1) * n..(p + 2) * n], &b[(p + 2) * n..(p + 3) * n], &b[(p + 3) * n..(p + 4) * n]]);
            for (o, v) in orow[p..p + 4].iter_mut().zip(d) {
                *o += v;
            }
            p += 4;
        }
        for p in p..k {
            orow[p] += dot(grow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// Four [`dot`]s against a shared `x`, with the same rounding as four calls.
#[inline]
fn dot4(x: &[f64], ys: [&[f64]; 4]) -> [f64; 4] {
    let len = x.len();
    let ys = ys.map(|y| &y[..len]);
    let mut acc = [[0.0f64; 4]; 4];
    let chunks = len / 4;
    for c in 0..chunks {
        let i = c * 4;
        for (a, y) in acc.iter_mut().zip(&ys) {
            a[0] += x[i] * y[i];
            a[1] += x[i + 1] * y[i + 1];
            a[2] += x[i + 2] * y[i + 2];
            a[3] += x[i + 3] * y[i + 3];
        }
    }
    let mut out = [0.0; 4];
    for ((o, a), y) in out.iter_mut().zip(&acc).zip(&ys) {
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for i in chunks * 4..len {
            s += x[i] * y[i];
        }
        *o = s;
    }
    out
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += x[i] * y[i];
        acc[1] += x[i + 1] * y[i + 1];
        acc[2] += x[i + 2] * y[i + 2];
        acc[3] += x[i + 3] * y[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..x.len() {
        s += x[i] * y[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(g: &mut Graph, rows: &[&[f64]]) -> Var {
        g.constant(Tensor::from_rows(rows).unwrap())
    }

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = mat(&mut g, &[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = mat(&mut g, &[&[1.0], &[1.0]]);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(alloc::format!("{err}").contains("[2, 3]"));
    }

    #[test]
    fn log_softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(&[0.0, 0.0]));
        let y = g.log_softmax(x);
        for v in g.value(y).data() {
            assert!((v + core::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_of_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        let y = g.tanh(x);
        assert_eq!(g.value(y).item(), Some(0.0));
    }

    #[test]
    fn broadcast_row_and_column() {
        let mut g = Graph::new();
        let m = mat(&mut g, &[&[1.0, 2.0], &[3.0, 4.0]]);
        let r = mat(&mut g, &[&[10.0, 20.0]]);
        let c = mat(&mut g, &[&[2.0], &[3.0]]);
        let s = g.add(m, r).unwrap();
        assert_eq!(g.value(s).data(), &[11.0, 22.0, 13.0, 24.0]);
        let p = g.mul(c, m).unwrap();
        assert_eq!(g.value(p).data(), &[2.0, 4.0, 9.0, 12.0]);
        let bad = mat(&mut g, &[&[1.0, 2.0, 3.0]]);
        assert!(g.add(m, bad).is_err());
    }

    #[test]
    fn concat_and_slice_along_both_axes() {
        let mut g = Graph::new();
        let a = mat(&mut g, &[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = mat(&mut g, &[&[5.0], &[6.0]]);
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let d = g.concat(&[a, a], 0).unwrap();
        assert_eq!(g.shape(d), &[4, 2]);
        let s = g.slice(c, 1, 1, 2).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let r = g.slice(d, 0, 3, 1).unwrap();
        assert_eq!(g.value(r).data(), &[3.0, 4.0]);
        assert!(g.concat(&[a, b], 0).is_err());
        assert!(g.slice(c, 1, 2, 2).is_err());
    }

    #[test]
    fn gather_rejects_out_of_range_ids() {
        let mut g = Graph::new();
        let t = mat(&mut g, &[&[1.0, 2.0], &[3.0, 4.0]]);
        let r = g.gather(t, &[1, 0, 1]).unwrap();
        assert_eq!(g.value(r).data(), &[3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            g.gather(t, &[2]).unwrap_err(),
            Error::OutOfVocabulary { id: 2, size: 2 }
        );
    }

    #[test]
    fn nll_pick_masks_none() {
        let mut g = Graph::new();
        let lp = mat(&mut g, &[&[-1.0, -2.0], &[-3.0, -4.0]]);
        let n = g.nll_pick(lp, &[Some(1), None]).unwrap();
        assert_eq!(g.value(n).data(), &[2.0, 0.0]);
    }

    #[test]
    fn grad_multiply_forward_is_bit_identical() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(&[1.5, -2.0]));
        let y = g.grad_multiply(x, 0.05);
        assert_eq!(g.value(y).data(), &[1.5, -2.0]);
        assert_eq!(g.op(y).inputs(), vec![x]);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((dot(&x, &y) - naive).abs() < 1e-12);
    }

    #[test]
    fn blocked_kernels_round_like_plain_loops() {
        let (m, k, n) = (7, 9, 6);
        let val = |i: usize| ((i * 37 % 23) as f64 - 11.0) / 7.0;
        let a: Vec<f64> = (0..m * k).map(val).collect();
        let b: Vec<f64> = (0..k * n).map(|i| val(i + 5)).collect();
        let g: Vec<f64> = (0..m * n).map(|i| val(i + 9)).collect();
        let mut want = vec![0.5; m * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    want[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let mut got = vec![0.5; m * n];
        matmul_into(&a, &b, &mut got, m, k, n);
        assert_eq!(got, want);
        let mut want = vec![0.25; k * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    want[p * n + j] += a[i * k + p] * g[i * n + j];
                }
            }
        }
        let mut got = vec![0.25; k * n];
        matmul_tn_into(&a, &g, &mut got, m, k, n);
        assert_eq!(got, want);
        let c: Vec<f64> = (0..k * n).map(|i| val(i + 2)).collect();
        let mut want = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                want[i * k + p] += dot(&g[i * n..(i + 1) * n], &c[p * n..(p + 1) * n]);
            }
        }
        let mut got = vec![0.0; m * k];
        matmul_nt_into(&g, &c, &mut got, m, k, n);
        assert_eq!(got, want);
    }
}
