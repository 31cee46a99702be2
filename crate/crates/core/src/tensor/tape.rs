use rand::Rng;

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scale * x + shift`; the shift does not enter the backward pass.
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    MeanOverTime(Var),
    Concat(Var, Var),
    Row(Var, usize),
    SoftmaxCrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
    L1(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a computation in topological order.
///
/// Nodes are appended as ops execute, so every node's inputs precede it and
/// the graph is acyclic by construction. Gradients of leaves accumulate
/// across [`Tape::backward`] calls until [`Tape::zero_grad`].
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf. `None` for leaves that do not require
    /// gradients and for interior nodes.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        for g in self.leaf_grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| vec![T::zero(); value.len()]);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.leaf_grads.push(grad);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Concat(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Affine(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::MeanOverTime(a)
            | Op::Row(a, _)
            | Op::Sum(a)
            | Op::L1(a, _) => self.requires_grad(*a),
            Op::SoftmaxCrossEntropy { logits, .. } => self.requires_grad(*logits),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Matrix product. A rank-1 left operand is treated as a row vector and
    /// the result is rank-1.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sb.len() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: 2,
                shape: sb,
            });
        }
        let (m, k) = match sa.len() {
            1 => (1, sa[0]),
            2 => (sa[0], sa[1]),
            _ => {
                return Err(TensorError::Rank {
                    op: "matmul",
                    expected: 2,
                    shape: sa,
                })
            }
        };
        if k != sb[0] {
            return Err(TensorError::Dimension {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let n = sb[1];
        let out = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        self.push(Tensor { shape, data: out }, Op::MatMul(a, b), "matmul")
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor { shape, data }, op, name)
    }

    fn map(&mut self, a: Var, name: &'static str, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var, TensorError> {
        let v = self.value(a);
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&x| f(x)).collect(),
        };
        self.push(out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Result<Var, TensorError> {
        self.map(a, "affine", |x| scale * x + shift, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, scale: T) -> Result<Var, TensorError> {
        self.affine(a, scale, T::zero())
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, "tanh", |x| x.tanh(), Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, "relu", |x| x.max(T::zero()), Op::Relu(a))
    }

    /// Column means of a `T×D` matrix.
    pub fn mean_over_time(&mut self, seq: Var) -> Result<Var, TensorError> {
        let s = self.shape(seq).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Rank {
                op: "mean_over_time",
                expected: 2,
                shape: s,
            });
        }
        let (t, d) = (s[0], s[1]);
        if t == 0 {
            return Err(TensorError::EmptySequence);
        }
        let inv = T::one() / T::of(t as f64);
        let v = self.value(seq).data();
        let mut out = vec![T::zero(); d];
        for row in v.chunks_exact(d) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + x;
            }
        }
        out.iter_mut().for_each(|o| *o = *o * inv);
        self.push(Tensor::vector(out), Op::MeanOverTime(seq), "mean_over_time")
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        for v in [a, b] {
            if self.shape(v).len() != 1 {
                return Err(TensorError::Rank {
                    op: "concat",
                    expected: 1,
                    shape: self.shape(v).to_vec(),
                });
            }
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::vector(data), Op::Concat(a, b), "concat")
    }

    /// Row `index` of a rank-2 table (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var, TensorError> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Rank {
                op: "row",
                expected: 2,
                shape: s,
            });
        }
        if index >= s[0] {
            return Err(TensorError::Index {
                op: "row",
                index,
                size: s[0],
            });
        }
        let data = self.value(table).row(index).to_vec();
        self.push(Tensor::vector(data), Op::Row(table, index), "row")
    }

    /// `-log softmax(logits)[target]` with max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let s = self.shape(logits).to_vec();
        if s.len() != 1 {
            return Err(TensorError::Rank {
                op: "softmax_cross_entropy",
                expected: 1,
                shape: s,
            });
        }
        if target >= s[0] {
            return Err(TensorError::Index {
                op: "softmax_cross_entropy",
                index: target,
                size: s[0],
            });
        }
        let z = self.value(logits).data();
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = z.iter().map(|&x| (x - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let loss = total.ln() - (z[target] - max);
        let probs = exps.into_iter().map(|e| e / total).collect();
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, target, probs },
            "softmax_cross_entropy",
        )
    }

    /// Mean absolute error. `target` is treated as a constant.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        self.same_shape("l1_loss", pred, target)?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let n = T::of(p.len().max(1) as f64);
        let total: T = p.iter().zip(t).map(|(&a, &b)| (a - b).abs()).sum();
        self.push(Tensor::scalar(total / n), Op::L1(pred, target), "l1_loss")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total: T = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).len().max(1);
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Sum of same-shaped values; `None` for an empty list.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Option<Var>, TensorError> {
        let mut it = vars.iter().copied();
        let Some(mut acc) = it.next() else {
            return Ok(None);
        };
        for v in it {
            acc = self.add(acc, v)?;
        }
        Ok(Some(acc))
    }

    /// Inverted dropout: keeps each entry with probability `1 - p` and scales
    /// survivors by `1 / (1 - p)`. Callers skip this at eval time.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if p <= 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - p;
        let scale = T::of(1.0 / keep);
        let shape = self.shape(a).to_vec();
        let mask: Vec<T> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let m = self.constant(Tensor { shape, data: mask });
        self.mul(a, m)
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let loss_shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(acc) = self.leaf_grads[i].as_mut() {
                        for (a, x) in acc.iter_mut().zip(&g) {
                            *a = *a + *x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let (m, k) = if av.rank() == 1 {
                        (1, av.shape()[0])
                    } else {
                        (av.shape()[0], av.shape()[1])
                    };
                    let n = bv.shape()[1];
                    if self.nodes[a.0].requires_grad {
                        // dA = dC · Bᵀ
                        let mut da = vec![T::zero(); m * k];
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for c in 0..k {
                                let brow = &bv.data()[c * n..(c + 1) * n];
                                da[r * k + c] = dot(gr, brow);
                            }
                        }
                        accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        // dB = Aᵀ · dC
                        let mut db = vec![T::zero(); k * n];
                        for r in 0..m {
                            let arow = &av.data()[r * k..(r + 1) * k];
                            let gr = &g[r * n..(r + 1) * n];
                            for (c, &x) in arow.iter().enumerate() {
                                if x == T::zero() {
                                    continue;
                                }
                                let dst = &mut db[c * n..(c + 1) * n];
                                for (d, &y) in dst.iter_mut().zip(gr) {
                                    *d = *d + x * y;
                                }
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|&x| -x).collect();
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    let da = g.iter().zip(bv).map(|(&x, &y)| x * y).collect();
                    let db = g.iter().zip(av).map(|(&x, &y)| x * y).collect();
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Affine(a, scale) => {
                    let da = g.iter().map(|&x| x * *scale).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let da = g.iter().zip(y).map(|(&x, &s)| x * s * (T::one() - s)).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let da = g.iter().zip(y).map(|(&x, &t)| x * (T::one() - t * t)).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let xin = self.nodes[a.0].value.data();
                    let da = g
                        .iter()
                        .zip(xin)
                        .map(|(&x, &v)| if v > T::zero() { x } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::MeanOverTime(a) => {
                    let t = self.nodes[a.0].value.shape()[0];
                    let inv = T::one() / T::of(t as f64);
                    let row: Vec<T> = g.iter().map(|&x| x * inv).collect();
                    let mut da = Vec::with_capacity(t * row.len());
                    for _ in 0..t {
                        da.extend_from_slice(&row);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Concat(a, b) => {
                    let la = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, g[..la].to_vec());
                    accumulate(&mut grads, *b, g[la..].to_vec());
                }
                Op::Row(table, index) => {
                    let s = self.nodes[table.0].value.shape();
                    let cols = s[1];
                    let mut dt = vec![T::zero(); s[0] * cols];
                    dt[index * cols..(index + 1) * cols].copy_from_slice(&g);
                    accumulate(&mut grads, *table, dt);
                }
                Op::SoftmaxCrossEntropy { logits, target, probs } => {
                    let mut dz: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
                    dz[*target] = dz[*target] - g[0];
                    accumulate(&mut grads, *logits, dz);
                }
                Op::L1(pred, target) => {
                    let p = self.nodes[pred.0].value.data();
                    let t = self.nodes[target.0].value.data();
                    let inv = g[0] / T::of(p.len().max(1) as f64);
                    let dp = p
                        .iter()
                        .zip(t)
                        .map(|(&a, &b)| {
                            if a > b {
                                inv
                            } else if a < b {
                                -inv
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *pred, dp);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, x) in acc.iter_mut().zip(g) {
                *a = *a + x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `m×k` times `k×n`, row-major.
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for r in 0..m {
        let dst = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let x = a[r * k + c];
            if x == T::zero() {
                continue;
            }
            let brow = &b[c * n..(c + 1) * n];
            for (d, &y) in dst.iter_mut().zip(brow) {
                *d = *d + x * y;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let b = tape.constant(t(&[2, 2], &[3., 4., 5., 6.]));
        let c = tape.matmul(i2, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3., 4., 5., 6.]);

        let a = tape.constant(t(&[1, 2], &[1., 2.]));
        let b = tape.constant(t(&[2, 1], &[3., 4.]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(c), &[1, 1]);
        assert_eq!(tape.value(c).data(), &[11.]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::Dimension { .. })));
    }

    #[test]
    fn mean_over_time_cases() {
        let mut tape = Tape::new();
        let s = tape.constant(t(&[2, 2], &[0., 2., 2., 0.]));
        let m = tape.mean_over_time(s).unwrap();
        assert_eq!(tape.value(m).data(), &[1., 1.]);
        let s = tape.constant(t(&[1, 2], &[5., 7.]));
        let m = tape.mean_over_time(s).unwrap();
        assert_eq!(tape.value(m).data(), &[5., 7.]);
        let e = tape.constant(Tensor::zeros(&[0, 3]));
        assert!(matches!(tape.mean_over_time(e), Err(TensorError::EmptySequence)));
    }

    #[test]
    fn concat_cases() {
        let mut tape = Tape::new();
        let a = tape.variable(Tensor::vector(vec![1., 2.]));
        let b = tape.variable(Tensor::vector(vec![3.]));
        let c = tape.concat(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[1., 2., 3.]);
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1., 1.]);
        assert_eq!(tape.grad(b).unwrap(), &[1.]);

        let e = tape.constant(Tensor::vector(vec![]));
        let f = tape.constant(Tensor::vector(vec![4.]));
        let c = tape.concat(e, f).unwrap();
        assert_eq!(tape.value(c).data(), &[4.]);

        let m = tape.constant(Tensor::zeros(&[1, 1]));
        assert!(matches!(tape.concat(m, f), Err(TensorError::Rank { .. })));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::full(&[8], 0.3));
        let l = tape.softmax_cross_entropy(z, 5).unwrap();
        assert!((tape.value(l).item() - 8f64.ln()).abs() < 1e-12);

        let mut big = vec![0.0; 6];
        big[2] = 1000.0;
        let z = tape.constant(Tensor::vector(big));
        let l = tape.softmax_cross_entropy(z, 2).unwrap();
        assert!(tape.value(l).item().abs() < 1e-12);

        assert!(matches!(
            tape.softmax_cross_entropy(z, 6),
            Err(TensorError::Index { .. })
        ));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut tape = Tape::new();
        let logits: Vec<f64> = vec![0.5, -1.0, 2.0];
        let z = tape.variable(Tensor::vector(logits.clone()));
        let l = tape.softmax_cross_entropy(z, 1).unwrap();
        tape.backward(l).unwrap();
        let total: f64 = logits.iter().map(|x| x.exp()).sum();
        for (i, g) in tape.grad(z).unwrap().iter().enumerate() {
            let expected = logits[i].exp() / total - if i == 1 { 1.0 } else { 0.0 };
            assert!((g - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_cases() {
        let mut tape = Tape::new();
        let p = tape.variable(Tensor::vector(vec![1., 2.]));
        let q = tape.constant(Tensor::vector(vec![1., 2.]));
        let l = tape.l1_loss(p, q).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap(), &[0., 0.]);

        let z = tape.constant(Tensor::vector(vec![0., 0.]));
        let l = tape.l1_loss(p, z).unwrap();
        assert_eq!(tape.value(l).item(), 1.5);

        let short = tape.constant(Tensor::vector(vec![0.]));
        assert!(tape.l1_loss(p, short).is_err());
    }

    #[test]
    fn l1_target_gets_no_gradient() {
        let mut tape = Tape::new();
        let p = tape.variable(Tensor::vector(vec![1., -2.]));
        let q = tape.variable(Tensor::vector(vec![0., 0.]));
        let l = tape.l1_loss(p, q).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap(), &[0.5, -0.5]);
        assert_eq!(tape.grad(q).unwrap(), &[0., 0.]);
    }

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut tape = Tape::new();
        let w = tape.variable(Tensor::full(&[2, 3], 0.7));
        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_accumulates() {
        let mut tape = Tape::new();
        let w = tape.variable(Tensor::vector(vec![1., 2.]));
        let y = tape.mul(w, w).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[2., 4.]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[4., 8.]);
        tape.zero_grad();
        assert_eq!(tape.grad(w).unwrap(), &[0., 0.]);
    }

    #[test]
    fn loss_leaf_gets_exactly_one() {
        let mut tape = Tape::new();
        let other = tape.variable(Tensor::vector(vec![3., 4.]));
        let loss = tape.variable(Tensor::scalar(2.5));
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(loss).unwrap(), &[1.0]);
        assert_eq!(tape.grad(other).unwrap(), &[0., 0.]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(w), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![f64::MAX]));
        assert!(matches!(tape.affine(a, 10.0, 0.0), Err(TensorError::NonFinite(_))));
    }

    #[test]
    fn dropout_is_inverted_and_skippable() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = tape.constant(Tensor::full(&[1000], 1.0));
        let same = tape.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(same, x);
        let d = tape.dropout(x, 0.5, &mut rng).unwrap();
        let vals = tape.value(d).data();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
