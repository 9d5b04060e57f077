//! Index-based tape of tensor operations with reverse-mode backward.
//!
//! Nodes are appended in execution order, so ids are already a topological
//! order and backward is one reverse sweep.  Parameter nodes share their
//! storage with the owning `ParamStore` through an `Arc`; everything else
//! is owned by the tape.

use super::{Real, TensorData, TensorError};
use std::cell::{Ref, RefCell};
use std::sync::Arc;

/// Handle to a node in one [`Graph`]; invalid in any other graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<T> {
    Owned(TensorData<T>),
    Shared(Arc<TensorData<T>>),
}

impl<T> Value<T> {
    fn data(&self) -> &TensorData<T> {
        match self {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

enum Op<T> {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    LogSumExp(usize),
    // argmax fixed at forward time; ties keep the first occurrence
    MaxReduce(usize, usize),
    LogSoftmax(usize),
    Concat { axis: usize, inputs: Vec<usize> },
    GatherRows { input: usize, ids: Vec<usize> },
    SliceRows { input: usize, start: usize },
    Reshape(usize),
}

struct Node<T> {
    value: Value<T>,
    grad: Option<TensorData<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<Vec<(String, Var)>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()), params: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: TensorData<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Value::Owned(value), grad: None, op, requires_grad });
        Var(nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&self, t: TensorData<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn scalar(&self, v: T) -> Var {
        self.constant(TensorData::scalar(v))
    }

    pub fn leaf(&self, t: TensorData<T>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    /// Import a named parameter without copying.  Repeat registrations of
    /// one name return the original node so gradient contributions from
    /// every use site accumulate in one place.
    pub fn param(&self, name: &str, value: &Arc<TensorData<T>>) -> Var {
        if let Some((_, v)) = self.params.borrow().iter().find(|(n, _)| n == name) {
            return *v;
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Value::Shared(Arc::clone(value)),
            grad: None,
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(nodes.len() - 1);
        drop(nodes);
        self.params.borrow_mut().push((name.to_string(), v));
        v
    }

    /// Registered parameters in registration order.
    pub fn registered_params(&self) -> Vec<(String, Var)> {
        self.params.borrow().clone()
    }

    pub fn value(&self, v: Var) -> Ref<'_, TensorData<T>> {
        Ref::map(self.nodes.borrow(), |ns| ns[v.0].value.data())
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.data().shape()
    }

    pub fn item(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.data().item()
    }

    pub fn grad(&self, v: Var) -> Option<TensorData<T>> {
        self.nodes.borrow()[v.0].grad.clone()
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            assert_eq!(
                av.cols(),
                bv.rows(),
                "matmul: {:?} incompatible with {:?}",
                av.shape(),
                bv.shape()
            );
            matmul_nn(av, bv)
        };
        self.push(out, Op::Matmul(a.0, b.0), self.requires(&[a.0, b.0]))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let out = transpose(self.nodes.borrow()[a.0].value.data());
        self.push(out, Op::Transpose(a.0), self.requires(&[a.0]))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            assert_eq!(av.shape(), bv.shape(), "add: {:?} vs {:?}", av.shape(), bv.shape());
            let mut o = av.clone();
            o.add_assign(bv);
            o
        };
        self.push(out, Op::Add(a.0, b.0), self.requires(&[a.0, b.0]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            assert_eq!(av.shape(), bv.shape(), "mul: {:?} vs {:?}", av.shape(), bv.shape());
            elementwise(av, bv, |x, y| x * y)
        };
        self.push(out, Op::Mul(a.0, b.0), self.requires(&[a.0, b.0]))
    }

    pub fn scale(&self, a: Var, c: T) -> Var {
        let out = self.nodes.borrow()[a.0].value.data().map(|x| x * c);
        self.push(out, Op::Scale(a.0, c), self.requires(&[a.0]))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.nodes.borrow()[a.0].value.data().map(|x| x.tanh());
        self.push(out, Op::Tanh(a.0), self.requires(&[a.0]))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let one = T::one();
        let out = self.nodes.borrow()[a.0].value.data().map(|x| one / (one + (-x).exp()));
        self.push(out, Op::Sigmoid(a.0), self.requires(&[a.0]))
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = self.nodes.borrow()[a.0].value.data().map(|x| x.exp());
        self.push(out, Op::Exp(a.0), self.requires(&[a.0]))
    }

    pub fn log(&self, a: Var) -> Var {
        let out = self.nodes.borrow()[a.0].value.data().map(|x| x.ln());
        self.push(out, Op::Log(a.0), self.requires(&[a.0]))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self, a: Var) -> Var {
        let out = TensorData::scalar(self.nodes.borrow()[a.0].value.data().as_slice().iter().copied().sum());
        self.push(out, Op::Sum(a.0), self.requires(&[a.0]))
    }

    /// log(sum(exp(x))) over all entries, max-shifted for overflow safety.
    pub fn logsumexp(&self, a: Var) -> Var {
        let out = TensorData::scalar(logsumexp_slice(self.nodes.borrow()[a.0].value.data().as_slice()));
        self.push(out, Op::LogSumExp(a.0), self.requires(&[a.0]))
    }

    /// Maximum entry; the gradient routes to the first argmax.
    pub fn max_reduce(&self, a: Var) -> Var {
        let (arg, m) = {
            let nodes = self.nodes.borrow();
            let s = nodes[a.0].value.data().as_slice();
            let mut arg = 0;
            let mut m = s[0];
            for (i, &x) in s.iter().enumerate().skip(1) {
                if x > m {
                    m = x;
                    arg = i;
                }
            }
            (arg, m)
        };
        self.push(TensorData::scalar(m), Op::MaxReduce(a.0, arg), self.requires(&[a.0]))
    }

    /// x - logsumexp(x) over all entries, same shape as x.
    pub fn log_softmax(&self, a: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.data();
            let lse = logsumexp_slice(v.as_slice());
            v.map(|x| x - lse)
        };
        self.push(out, Op::LogSoftmax(a.0), self.requires(&[a.0]))
    }

    /// Concatenate along `axis` (0 = stack rows, 1 = stack columns).
    pub fn concat(&self, vars: &[Var], axis: usize) -> Var {
        assert!(!vars.is_empty(), "concat: no inputs");
        assert!(axis < 2, "concat: axis {axis} out of range");
        let out = {
            let nodes = self.nodes.borrow();
            let parts: Vec<&TensorData<T>> = vars.iter().map(|v| nodes[v.0].value.data()).collect();
            if axis == 0 {
                let cols = parts[0].cols();
                let rows = parts.iter().map(|p| p.rows()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for p in &parts {
                    assert_eq!(p.cols(), cols, "concat: {:?} vs {} cols", p.shape(), cols);
                    data.extend_from_slice(p.as_slice());
                }
                TensorData::new(rows, cols, data)
            } else {
                let rows = parts[0].rows();
                let cols = parts.iter().map(|p| p.cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for p in &parts {
                        assert_eq!(p.rows(), rows, "concat: {:?} vs {} rows", p.shape(), rows);
                        data.extend_from_slice(p.row(i));
                    }
                }
                TensorData::new(rows, cols, data)
            }
        };
        let ids = vars.iter().map(|v| v.0).collect::<Vec<_>>();
        let req = self.requires(&ids);
        self.push(out, Op::Concat { axis, inputs: ids }, req)
    }

    /// Select rows by index; repeated ids are allowed and their gradient
    /// contributions accumulate.
    pub fn gather_rows(&self, a: Var, ids: &[usize]) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.data();
            let mut data = Vec::with_capacity(ids.len() * v.cols());
            for &i in ids {
                assert!(i < v.rows(), "gather_rows: row {i} out of {:?}", v.shape());
                data.extend_from_slice(v.row(i));
            }
            TensorData::new(ids.len(), v.cols(), data)
        };
        self.push(out, Op::GatherRows { input: a.0, ids: ids.to_vec() }, self.requires(&[a.0]))
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.data();
            assert!(
                start + len <= v.rows(),
                "slice_rows: {start}..{} out of {:?}",
                start + len,
                v.shape()
            );
            let mut data = Vec::with_capacity(len * v.cols());
            for i in start..start + len {
                data.extend_from_slice(v.row(i));
            }
            TensorData::new(len, v.cols(), data)
        };
        self.push(out, Op::SliceRows { input: a.0, start }, self.requires(&[a.0]))
    }

    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.data();
            assert_eq!(v.len(), rows * cols, "reshape: {:?} to {rows}x{cols}", v.shape());
            TensorData::new(rows, cols, v.as_slice().to_vec())
        };
        self.push(out, Op::Reshape(a.0), self.requires(&[a.0]))
    }

    /// Reverse sweep from a scalar loss.  Each call propagates exactly one
    /// unit seed; the resulting leaf gradients add onto whatever previous
    /// calls left, so leaves accumulate until the graph is dropped or the
    /// store's gradients are zeroed.  Only leaves retain gradients.
    pub fn backward(&self, loss: Var) -> Result<(), TensorError> {
        {
            let nodes = self.nodes.borrow();
            let l = nodes[loss.0].value.data();
            if !l.is_scalar() {
                return Err(TensorError::NonScalarLoss(l.rows(), l.cols()));
            }
            if !nodes[loss.0].requires_grad {
                return Ok(());
            }
        }
        // per-pass gradients; index-aligned with the first loss.0+1 nodes
        let mut scratch: Vec<Option<TensorData<T>>> = (0..=loss.0).map(|_| None).collect();
        scratch[loss.0] = Some(TensorData::scalar(T::one()));
        let nodes = self.nodes.borrow();
        let acc = |scratch: &mut [Option<TensorData<T>>], j: usize, delta: TensorData<T>| {
            if !nodes[j].requires_grad {
                return;
            }
            match &mut scratch[j] {
                Some(g) => g.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                scratch[i] = None;
                continue;
            }
            if matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let og = match scratch[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Matmul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(&mut scratch, *a, matmul_nt(&og, nodes[*b].value.data()));
                    }
                    if nodes[*b].requires_grad {
                        acc(&mut scratch, *b, matmul_tn(nodes[*a].value.data(), &og));
                    }
                }
                Op::Transpose(a) => acc(&mut scratch, *a, transpose(&og)),
                Op::Add(a, b) => {
                    acc(&mut scratch, *a, og.clone());
                    acc(&mut scratch, *b, og);
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(&mut scratch, *a, elementwise(&og, nodes[*b].value.data(), |g, y| g * y));
                    }
                    if nodes[*b].requires_grad {
                        acc(&mut scratch, *b, elementwise(&og, nodes[*a].value.data(), |g, x| g * x));
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut scratch, *a, og.map(|g| g * c));
                }
                Op::Tanh(a) => {
                    let d = elementwise(&og, node.value.data(), |g, y| g * (T::one() - y * y));
                    acc(&mut scratch, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = elementwise(&og, node.value.data(), |g, y| g * y * (T::one() - y));
                    acc(&mut scratch, *a, d);
                }
                Op::Exp(a) => {
                    let d = elementwise(&og, node.value.data(), |g, y| g * y);
                    acc(&mut scratch, *a, d);
                }
                Op::Log(a) => {
                    let d = elementwise(&og, nodes[*a].value.data(), |g, x| g / x);
                    acc(&mut scratch, *a, d);
                }
                Op::Sum(a) => {
                    let g = og.item();
                    let (r, c) = nodes[*a].value.data().shape();
                    let mut d = TensorData::zeros(r, c);
                    d.fill(g);
                    acc(&mut scratch, *a, d);
                }
                Op::LogSumExp(a) => {
                    let g = og.item();
                    let y = node.value.data().item();
                    let d = nodes[*a].value.data().map(|x| g * (x - y).exp());
                    acc(&mut scratch, *a, d);
                }
                Op::MaxReduce(a, arg) => {
                    let g = og.item();
                    let (r, c) = nodes[*a].value.data().shape();
                    let mut d = TensorData::zeros(r, c);
                    d.as_mut_slice()[*arg] = g;
                    acc(&mut scratch, *a, d);
                }
                Op::LogSoftmax(a) => {
                    let gsum: T = og.as_slice().iter().copied().sum();
                    let y = node.value.data();
                    let mut d = og;
                    for (di, &yi) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *di -= yi.exp() * gsum;
                    }
                    acc(&mut scratch, *a, d);
                }
                Op::Concat { axis, inputs } => {
                    if *axis == 0 {
                        let mut row = 0;
                        for &id in inputs {
                            let r = nodes[id].value.data().rows();
                            let cols = og.cols();
                            let mut d = TensorData::zeros(r, cols);
                            d.as_mut_slice()
                                .copy_from_slice(&og.as_slice()[row * cols..(row + r) * cols]);
                            row += r;
                            acc(&mut scratch, id, d);
                        }
                    } else {
                        let mut col = 0;
                        for &id in inputs {
                            let c = nodes[id].value.data().cols();
                            let rows = og.rows();
                            let mut d = TensorData::zeros(rows, c);
                            for i in 0..rows {
                                for j in 0..c {
                                    d.set(i, j, og.get(i, col + j));
                                }
                            }
                            col += c;
                            acc(&mut scratch, id, d);
                        }
                    }
                }
                Op::GatherRows { input, ids } => {
                    let v = nodes[*input].value.data();
                    let mut d = TensorData::zeros(v.rows(), v.cols());
                    for (r, &i) in ids.iter().enumerate() {
                        for j in 0..og.cols() {
                            let cur = d.get(i, j);
                            d.set(i, j, cur + og.get(r, j));
                        }
                    }
                    acc(&mut scratch, *input, d);
                }
                Op::SliceRows { input, start } => {
                    let v = nodes[*input].value.data();
                    let mut d = TensorData::zeros(v.rows(), v.cols());
                    for r in 0..og.rows() {
                        for j in 0..og.cols() {
                            d.set(start + r, j, og.get(r, j));
                        }
                    }
                    acc(&mut scratch, *input, d);
                }
                Op::Reshape(a) => {
                    let (r, c) = nodes[*a].value.data().shape();
                    let d = TensorData::new(r, c, og.as_slice().to_vec());
                    acc(&mut scratch, *a, d);
                }
            }
        }
        drop(nodes);
        let mut nodes = self.nodes.borrow_mut();
        for (i, slot) in scratch.into_iter().enumerate() {
            if let Some(delta) = slot {
                let node = &mut nodes[i];
                debug_assert!(matches!(node.op, Op::Leaf));
                match &mut node.grad {
                    Some(g) => g.add_assign(&delta),
                    g @ None => *g = Some(delta),
                }
            }
        }
        Ok(())
    }
}

fn elementwise<T: Real>(
    a: &TensorData<T>,
    b: &TensorData<T>,
    f: impl Fn(T, T) -> T,
) -> TensorData<T> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    TensorData::new(a.rows(), a.cols(), data)
}

fn transpose<T: Real>(a: &TensorData<T>) -> TensorData<T> {
    let (r, c) = a.shape();
    let mut out = TensorData::zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            out.set(j, i, a.get(i, j));
        }
    }
    out
}

fn matmul_nn<T: Real>(a: &TensorData<T>, b: &TensorData<T>) -> TensorData<T> {
    let (m, k) = a.shape();
    let n = b.cols();
    let mut out = TensorData::zeros(m, n);
    for i in 0..m {
        for p in 0..k {
            let aip = a.get(i, p);
            if aip == T::zero() {
                continue;
            }
            let brow = b.row(p);
            let orow = &mut out.as_mut_slice()[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

// a . b^T
fn matmul_nt<T: Real>(a: &TensorData<T>, b: &TensorData<T>) -> TensorData<T> {
    let (m, k) = a.shape();
    let n = b.rows();
    assert_eq!(k, b.cols(), "matmul_nt: {:?} vs {:?}", a.shape(), b.shape());
    let mut out = TensorData::zeros(m, n);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(b.row(j)) {
                acc += x * y;
            }
            out.set(i, j, acc);
        }
    }
    out
}

// a^T . b
fn matmul_tn<T: Real>(a: &TensorData<T>, b: &TensorData<T>) -> TensorData<T> {
    let (m, k) = a.shape();
    let n = b.cols();
    assert_eq!(m, b.rows(), "matmul_tn: {:?} vs {:?}", a.shape(), b.shape());
    let mut out = TensorData::zeros(k, n);
    for p in 0..m {
        let arow = a.row(p);
        let brow = b.row(p);
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out.as_mut_slice()[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn logsumexp_slice<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}
