//! Define-by-run reverse-mode differentiation over whole tensors.
//!
//! Every forward op appends a node holding its value. Nodes only reference
//! earlier nodes, so walking the node list backwards is a valid reverse
//! topological order. A tape is single-use: build it, call [`Tape::backward`]
//! once, drop it.

use super::ops;
use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::{dot, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    GatherRows(ParamId, Vec<usize>),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    ScaleRows(NodeId, NodeId),
    Outer(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    SumRows(NodeId),
    Sum(NodeId),
    Sigmoid(NodeId),
    Prelu(NodeId, NodeId),
    Softmax(NodeId),
    NormalizeRows(NodeId, Vec<f64>),
    SoftmaxCrossEntropy(NodeId, usize, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node>,
    consumed: bool,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store: Some(store), nodes: Vec::new(), consumed: false }
    }

    /// A tape with no parameters; only constants can be leaves.
    pub fn detached() -> Tape<'static> {
        Tape { store: None, nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn grad2(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
    }

    fn store(&self) -> Result<&'a ParamStore> {
        self.store
            .ok_or_else(|| Error::Config("tape has no parameter store".into()))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId) -> Result<NodeId> {
        let value = self.store()?.value(id).clone();
        Ok(self.push(value, Op::Param(id), true))
    }

    /// Rows `indices` of a matrix parameter, without copying the whole matrix.
    pub fn gather(&mut self, id: ParamId, indices: &[usize]) -> Result<NodeId> {
        let value = self.store()?.value(id).gather_rows(indices)?;
        Ok(self.push(value, Op::GatherRows(id, indices.to_vec()), true))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(v, Op::Add(a, b), g))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(v, Op::Mul(a, b), g))
    }

    pub fn add_row(&mut self, mat: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.value(mat).add_row(self.value(row))?;
        let g = self.grad2(mat, row);
        Ok(self.push(v, Op::AddRow(mat, row), g))
    }

    pub fn scale_rows(&mut self, mat: NodeId, s: NodeId) -> Result<NodeId> {
        let v = self.value(mat).scale_rows(self.value(s))?;
        let g = self.grad2(mat, s);
        Ok(self.push(v, Op::ScaleRows(mat, s), g))
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = Tensor::outer(self.value(a), self.value(b));
        let g = self.grad2(a, b);
        Ok(self.push(v, Op::Outer(a, b), g))
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let v = self.value(m).matvec(self.value(x))?;
        let g = self.grad2(m, x);
        Ok(self.push(v, Op::MatVec(m, x), g))
    }

    /// `M^T p`: the `p`-weighted sum of the rows of `M`.
    pub fn vecmat(&mut self, p: NodeId, m: NodeId) -> Result<NodeId> {
        let v = self.value(m).vecmat(self.value(p))?;
        let g = self.grad2(p, m);
        Ok(self.push(v, Op::VecMat(p, m), g))
    }

    /// `A B^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(v, Op::MatMulNt(a, b), g))
    }

    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sum_rows();
        let g = self.nodes[x.0].needs_grad;
        self.push(v, Op::SumRows(x), g)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        let g = self.nodes[x.0].needs_grad;
        self.push(v, Op::Sum(x), g)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = ops::sigmoid(self.value(x));
        let g = self.nodes[x.0].needs_grad;
        self.push(v, Op::Sigmoid(x), g)
    }

    pub fn prelu(&mut self, x: NodeId, slopes: NodeId) -> Result<NodeId> {
        let v = ops::prelu(self.value(x), self.value(slopes))?;
        let g = self.grad2(x, slopes);
        Ok(self.push(v, Op::Prelu(x, slopes), g))
    }

    fn prelu_inputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().flat_map(move |n| match n.op {
            Op::Prelu(x, _) => self.nodes[x.0].value.data(),
            _ => &[][..],
        })
        .copied()
    }

    /// Branch taken by every PReLU input on the tape (`true` for `x >= 0`),
    /// in recording order.
    pub fn prelu_branches(&self) -> Vec<bool> {
        self.prelu_inputs().map(|x| x >= 0.0).collect()
    }

    /// Smallest `|x|` over all PReLU inputs, or infinity if there are none.
    pub fn prelu_margin(&self) -> f64 {
        self.prelu_inputs().map(f64::abs).fold(f64::INFINITY, f64::min)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = ops::softmax(self.value(x));
        let g = self.nodes[x.0].needs_grad;
        self.push(v, Op::Softmax(x), g)
    }

    /// Unit-normalizes each row (a vector is a single row).
    pub fn normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (v, norms) = ops::normalize_rows(self.value(x))?;
        let g = self.nodes[x.0].needs_grad;
        Ok(self.push(v, Op::NormalizeRows(x, norms), g))
    }

    /// `-log softmax(logits)[target]` as a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if target >= l.len() {
            return Err(Error::DimensionMismatch(format!("target {target} of {}", l.len())));
        }
        let loss = -ops::log_softmax(l).data()[target];
        let probs = ops::softmax(l);
        let g = self.nodes[logits.0].needs_grad;
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy(logits, target, probs), g))
    }

    /// Reverse sweep from a scalar `loss`. Parameter gradients are returned,
    /// summed over every use of each parameter on the tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::DoubleBackward);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut adj: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut grads = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let val = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    let slot = grads.slot(*pid, g.shape());
                    slot.add_assign(&g);
                }
                Op::GatherRows(pid, idx) => {
                    let shape = self.store()?.value(*pid).shape().to_vec();
                    let slot = grads.slot(*pid, &shape);
                    for (k, &r) in idx.iter().enumerate() {
                        slot.row_mut(r).iter_mut().zip(g.row(k)).for_each(|(d, s)| *d += s);
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut adj, *b, || g.clone());
                    self.acc(&mut adj, *a, || g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.acc(&mut adj, *a, || g.mul(bv).expect("shape checked in forward"));
                    self.acc(&mut adj, *b, || g.mul(av).expect("shape checked in forward"));
                }
                Op::AddRow(m, r) => {
                    self.acc(&mut adj, *r, || g.sum_rows());
                    self.acc(&mut adj, *m, || g);
                }
                Op::ScaleRows(m, s) => {
                    let (mv, sv) = (self.value(*m), self.value(*s));
                    self.acc(&mut adj, *s, || {
                        Tensor::vector((0..mv.rows()).map(|j| dot(g.row(j), mv.row(j))).collect())
                    });
                    self.acc(&mut adj, *m, || g.scale_rows(sv).expect("shape checked in forward"));
                }
                Op::Outer(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.acc(&mut adj, *a, || g.matvec(bv).expect("shape checked in forward"));
                    self.acc(&mut adj, *b, || g.vecmat(av).expect("shape checked in forward"));
                }
                Op::MatVec(m, x) => {
                    let (mv, xv) = (self.value(*m), self.value(*x));
                    self.acc(&mut adj, *x, || mv.vecmat(&g).expect("shape checked in forward"));
                    self.acc(&mut adj, *m, || Tensor::outer(&g, xv));
                }
                Op::VecMat(p, m) => {
                    let (pv, mv) = (self.value(*p), self.value(*m));
                    self.acc(&mut adj, *p, || mv.matvec(&g).expect("shape checked in forward"));
                    self.acc(&mut adj, *m, || Tensor::outer(pv, &g));
                }
                Op::MatMulNt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.acc(&mut adj, *a, || g.matmul(bv).expect("shape checked in forward"));
                    self.acc(&mut adj, *b, || g.matmul_tn(av).expect("shape checked in forward"));
                }
                Op::SumRows(x) => {
                    let xv = self.value(*x);
                    self.acc(&mut adj, *x, || {
                        let mut out = Tensor::zeros(xv.shape());
                        for r in 0..xv.rows() {
                            out.row_mut(r).copy_from_slice(g.data());
                        }
                        out
                    });
                }
                Op::Sum(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    self.acc(&mut adj, *x, || Tensor::filled(&shape, g.item()));
                }
                Op::Sigmoid(x) => {
                    self.acc(&mut adj, *x, || {
                        let mut out = g;
                        out.data_mut().iter_mut().zip(val.data()).for_each(|(d, y)| *d *= y * (1.0 - y));
                        out
                    });
                }
                Op::Prelu(x, s) => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let c = xv.cols();
                    self.acc(&mut adj, *s, || {
                        let mut ds = Tensor::zeros(sv.shape());
                        for (k, (&xi, &gi)) in xv.data().iter().zip(g.data()).enumerate() {
                            if xi < 0.0 {
                                ds.data_mut()[k % c] += gi * xi;
                            }
                        }
                        ds
                    });
                    self.acc(&mut adj, *x, || {
                        let mut dx = g;
                        for (k, (d, &xi)) in dx.data_mut().iter_mut().zip(xv.data()).enumerate() {
                            if xi < 0.0 {
                                *d *= sv.data()[k % c];
                            }
                        }
                        dx
                    });
                }
                Op::Softmax(x) => {
                    self.acc(&mut adj, *x, || {
                        let inner = dot(g.data(), val.data());
                        let mut dx = g;
                        dx.data_mut().iter_mut().zip(val.data()).for_each(|(d, y)| *d = y * (*d - inner));
                        dx
                    });
                }
                Op::NormalizeRows(x, norms) => {
                    self.acc(&mut adj, *x, || {
                        let mut dx = g;
                        for (r, n) in norms.iter().enumerate() {
                            let y = val.row(r);
                            let row = dx.row_mut(r);
                            let proj = dot(row, y);
                            row.iter_mut().zip(y).for_each(|(d, yi)| *d = (*d - yi * proj) / n);
                        }
                        dx
                    });
                }
                Op::SoftmaxCrossEntropy(x, target, probs) => {
                    self.acc(&mut adj, *x, || {
                        let mut dx = probs.clone();
                        dx.data_mut()[*target] -= 1.0;
                        dx.scale_assign(g.item());
                        dx
                    });
                }
            }
        }
        Ok(grads)
    }

    fn acc(&self, adj: &mut [Option<Tensor>], id: NodeId, g: impl FnOnce() -> Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let g = g();
        match &mut adj[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}
