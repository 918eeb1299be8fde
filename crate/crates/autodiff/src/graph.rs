//! Recorded computation graph with reverse-mode differentiation.
//!
//! Values are evaluated eagerly as nodes are appended to the tape. The
//! backward pass does not touch raw buffers directly: it *emits new graph
//! nodes* for every vector-Jacobian product, so a gradient is itself a
//! differentiable graph value. Differentiating a function of a gradient
//! (double backprop, as needed for input-gradient penalties) is then just
//! another backward pass over the extended tape.
//!
//! The op set is closed under differentiation: every VJP below is built
//! from ops in the same set.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::kernels::{self, ColGeom};
use crate::param::Parameter;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    /// 1/x with the convention 0 -> 0 (used for guarded norms).
    Recip0(usize),
    /// sqrt with subgradient 0 at 0.
    Sqrt0(usize),
    Ln(usize),
    Exp(usize),
    Tanh(usize),
    Sigmoid(usize),
    /// x > 0 ? 1 : slope. Gradient-blocking (derivative treated as 0).
    SlopeMask(usize),
    /// lo <= x <= hi ? 1 : 0. Gradient-blocking.
    RangeMask(usize),
    Clamp(usize, f64, f64),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    SumAll(usize),
    /// (M,N) -> (1,N)
    SumAxis0(usize),
    /// (M,N) -> (M,1)
    SumAxis1(usize),
    /// (1,N) -> (M,N)
    BroadcastRow(usize),
    /// (M,1) -> (M,N)
    BroadcastCol(usize),
    /// scalar -> arbitrary shape
    BroadcastScalar(usize),
    ConcatCols(usize, usize),
    /// (M,N), start, len -> (M,len)
    SliceCols(usize, usize, usize),
    /// (M,len), start, total -> (M,total), zero elsewhere
    EmbedCols(usize, usize, usize),
    Im2Col(usize, ColGeom),
    Col2Im(usize, ColGeom),
    Pad1d(usize, usize),
    Crop1d(usize, usize),
    SwapAxes12(usize),
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    requires_grad: bool,
    param: Option<Parameter>,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    param_leaves: Vec<usize>,
}

/// A shared, append-only tape. Cloning is cheap (handle copy).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<Inner>>,
}

/// Handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Var {
    graph: Graph,
    id: usize,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn same_graph(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, shape: Vec<usize>, data: Vec<f64>, op: Op, rg: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            shape,
            data,
            op,
            requires_grad: rg,
            param: None,
        });
        Var {
            graph: self.clone(),
            id: inner.nodes.len() - 1,
        }
    }

    /// Number of recorded nodes (diagnostics).
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, shape: &[usize], data: Vec<f64>) -> Var {
        self.push(shape.to_vec(), data, Op::Leaf, false)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(&[1], vec![v])
    }

    pub fn full(&self, shape: &[usize], v: f64) -> Var {
        self.constant(shape, vec![v; numel(shape)])
    }

    /// Leaf with `requires_grad` control; use for inputs whose gradient is
    /// wanted (e.g. interpolated samples in a gradient penalty).
    pub fn input(&self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Var {
        self.push(shape.to_vec(), data, Op::Leaf, requires_grad)
    }

    /// Leaf bound to a [`Parameter`]; `backward` accumulates into its grad.
    pub fn param(&self, p: &Parameter) -> Var {
        let (shape, value) = (p.shape(), p.value());
        let v = self.push(shape, value, Op::Leaf, true);
        let mut inner = self.inner.borrow_mut();
        inner.nodes[v.id].param = Some(p.clone());
        inner.param_leaves.push(v.id);
        v
    }

    fn rg(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].requires_grad
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.inner.borrow().nodes[id].shape.clone()
    }

    fn op_of(&self, id: usize) -> Op {
        self.inner.borrow().nodes[id].op.clone()
    }

    fn data_clone(&self, id: usize) -> Vec<f64> {
        self.inner.borrow().nodes[id].data.clone()
    }

    fn with_data<R>(&self, id: usize, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.borrow().nodes[id].data)
    }

    fn with_data2<R>(&self, a: usize, b: usize, f: impl FnOnce(&[f64], &[f64]) -> R) -> R {
        let inner = self.inner.borrow();
        f(&inner.nodes[a].data, &inner.nodes[b].data)
    }

    /// Reverse-mode pass from a scalar `loss`, accumulating gradients into
    /// every reachable [`Parameter`]. Repeated calls keep accumulating.
    pub fn backward(&self, loss: &Var) -> Result<()> {
        if loss.shape() != [1] {
            return Err(AutodiffError::NonScalarLoss(loss.shape()));
        }
        let param_leaves: Vec<usize> = {
            let inner = self.inner.borrow();
            inner
                .param_leaves
                .iter()
                .copied()
                .filter(|&id| id <= loss.id)
                .collect()
        };
        if param_leaves.is_empty() {
            return Ok(());
        }
        let seed = self.full(&[1], 1.0);
        let adjoints = self.backward_pass(loss.id, seed, &param_leaves)?;
        for (&leaf, adj) in param_leaves.iter().zip(&adjoints) {
            if let Some(adj) = adj {
                let data = self.data_clone(adj.id);
                let p = self.inner.borrow().nodes[leaf].param.clone();
                if let Some(p) = p {
                    p.accumulate_grad(&data);
                }
            }
        }
        Ok(())
    }

    /// Differentiable gradient of `output` w.r.t. `wrt` (create-graph mode).
    ///
    /// `seed` is the upstream cotangent; it defaults to all-ones of the
    /// output shape, which for a row-wise network with per-row scalar
    /// outputs yields each row's own input gradient. Returns zeros when
    /// `wrt` does not influence `output`.
    pub fn grad_wrt(&self, output: &Var, wrt: &Var, seed: Option<&Var>) -> Result<Var> {
        if !self.same_graph(&output.graph) || !self.same_graph(&wrt.graph) {
            return Err(AutodiffError::GraphMismatch);
        }
        let seed = match seed {
            Some(s) => {
                if s.shape() != output.shape() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "grad_wrt seed",
                        left: s.shape(),
                        right: output.shape(),
                    });
                }
                s.clone()
            }
            None => self.full(&output.shape(), 1.0),
        };
        let adjoints = self.backward_pass(output.id, seed, &[wrt.id])?;
        Ok(match adjoints.into_iter().next().flatten() {
            Some(v) => v,
            None => self.full(&wrt.shape(), 0.0),
        })
    }

    /// Shared engine: walk the tape from `root` downward, emitting VJP nodes
    /// for every node on a path from some target to `root`.
    fn backward_pass(&self, root: usize, seed: Var, targets: &[usize]) -> Result<Vec<Option<Var>>> {
        let n = root + 1;
        // descendants of targets (tape order is topological)
        let mut desc = vec![false; n];
        for &t in targets {
            if t < n {
                desc[t] = true;
            }
        }
        for id in 0..n {
            if desc[id] {
                continue;
            }
            let needed = {
                let inner = self.inner.borrow();
                parents_of(&inner.nodes[id].op)
                    .iter()
                    .any(|&p| desc[p])
            };
            if needed {
                desc[id] = true;
            }
        }
        if !desc[root] && targets.iter().all(|&t| t != root) {
            return Ok(vec![None; targets.len()]);
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        adjoint[root] = Some(seed);
        for id in (0..n).rev() {
            let dy = match adjoint[id].clone() {
                Some(v) => v,
                None => continue,
            };
            if !desc[id] {
                continue;
            }
            let op = self.op_of(id);
            self.emit_vjps(id, &op, &dy, &mut adjoint, &desc)?;
        }
        Ok(targets.iter().map(|&t| adjoint[t].clone()).collect())
    }

    fn accumulate(&self, adjoint: &mut [Option<Var>], parent: usize, contrib: Var) -> Result<()> {
        adjoint[parent] = Some(match adjoint[parent].take() {
            Some(prev) => prev.add(&contrib)?,
            None => contrib,
        });
        Ok(())
    }

    /// Emit the VJP contributions of one node to its parents. Contributions
    /// are built from public ops only, keeping gradients differentiable.
    fn emit_vjps(
        &self,
        id: usize,
        op: &Op,
        dy: &Var,
        adjoint: &mut [Option<Var>],
        desc: &[bool],
    ) -> Result<()> {
        let y = Var {
            graph: self.clone(),
            id,
        };
        let want = |p: usize| desc[p] && self.rg(p);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.clone())?;
                }
                if want(b) {
                    self.accumulate(adjoint, b, dy.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.clone())?;
                }
                if want(b) {
                    self.accumulate(adjoint, b, dy.neg())?;
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    let vb = Var {
                        graph: self.clone(),
                        id: b,
                    };
                    self.accumulate(adjoint, a, dy.mul(&vb)?)?;
                }
                if want(b) {
                    let va = Var {
                        graph: self.clone(),
                        id: a,
                    };
                    self.accumulate(adjoint, b, dy.mul(&va)?)?;
                }
            }
            Op::Neg(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.neg())?;
                }
            }
            Op::Scale(a, c) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.scale(c))?;
                }
            }
            Op::AddScalar(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.clone())?;
                }
            }
            Op::Recip0(a) => {
                if want(a) {
                    // d(1/x) = -1/x^2; stays 0 where x == 0
                    self.accumulate(adjoint, a, dy.mul(&y.mul(&y)?)?.neg())?;
                }
            }
            Op::Sqrt0(a) => {
                if want(a) {
                    // 1/(2 sqrt x), subgradient 0 at x == 0
                    self.accumulate(adjoint, a, dy.mul(&y.scale(2.0).recip0())?)?;
                }
            }
            Op::Ln(a) => {
                if want(a) {
                    let va = Var {
                        graph: self.clone(),
                        id: a,
                    };
                    self.accumulate(adjoint, a, dy.mul(&va.recip0())?)?;
                }
            }
            Op::Exp(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.mul(&y)?)?;
                }
            }
            Op::Tanh(a) => {
                if want(a) {
                    let one = self.full(&y.shape(), 1.0);
                    self.accumulate(adjoint, a, dy.mul(&one.sub(&y.mul(&y)?)?)?)?;
                }
            }
            Op::Sigmoid(a) => {
                if want(a) {
                    let one = self.full(&y.shape(), 1.0);
                    self.accumulate(adjoint, a, dy.mul(&y.mul(&one.sub(&y)?)?)?)?;
                }
            }
            Op::SlopeMask(..) | Op::RangeMask(..) => {}
            Op::Clamp(a, lo, hi) => {
                if want(a) {
                    let va = Var {
                        graph: self.clone(),
                        id: a,
                    };
                    self.accumulate(adjoint, a, dy.mul(&va.range_mask(lo, hi))?)?;
                }
            }
            Op::Matmul(a, b) => {
                let (va, vb) = (
                    Var {
                        graph: self.clone(),
                        id: a,
                    },
                    Var {
                        graph: self.clone(),
                        id: b,
                    },
                );
                if want(a) {
                    self.accumulate(adjoint, a, dy.matmul(&vb.t()?)?)?;
                }
                if want(b) {
                    self.accumulate(adjoint, b, va.t()?.matmul(dy)?)?;
                }
            }
            Op::Transpose(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.t()?)?;
                }
            }
            Op::Reshape(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.reshape(&self.shape_of(a))?)?;
                }
            }
            Op::SumAll(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.broadcast_scalar(&self.shape_of(a))?)?;
                }
            }
            Op::SumAxis0(a) => {
                if want(a) {
                    let m = self.shape_of(a)[0];
                    self.accumulate(adjoint, a, dy.broadcast_row(m)?)?;
                }
            }
            Op::SumAxis1(a) => {
                if want(a) {
                    let n2 = self.shape_of(a)[1];
                    self.accumulate(adjoint, a, dy.broadcast_col(n2)?)?;
                }
            }
            Op::BroadcastRow(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.sum_axis0()?)?;
                }
            }
            Op::BroadcastCol(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.sum_axis1()?)?;
                }
            }
            Op::BroadcastScalar(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.sum_all())?;
                }
            }
            Op::ConcatCols(a, b) => {
                let na = self.shape_of(a)[1];
                let nb = self.shape_of(b)[1];
                if want(a) {
                    self.accumulate(adjoint, a, dy.slice_cols(0, na)?)?;
                }
                if want(b) {
                    self.accumulate(adjoint, b, dy.slice_cols(na, nb)?)?;
                }
            }
            Op::SliceCols(a, start, _len) => {
                if want(a) {
                    let total = self.shape_of(a)[1];
                    self.accumulate(adjoint, a, dy.embed_cols(start, total)?)?;
                }
            }
            Op::EmbedCols(a, start, _total) => {
                if want(a) {
                    let len = self.shape_of(a)[1];
                    self.accumulate(adjoint, a, dy.slice_cols(start, len)?)?;
                }
            }
            Op::Im2Col(a, geom) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.col2im(geom)?)?;
                }
            }
            Op::Col2Im(a, geom) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.im2col_geom(geom)?)?;
                }
            }
            Op::Pad1d(a, p) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.crop1d(p)?)?;
                }
            }
            Op::Crop1d(a, p) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.pad1d(p)?)?;
                }
            }
            Op::SwapAxes12(a) => {
                if want(a) {
                    self.accumulate(adjoint, a, dy.swap_axes12()?)?;
                }
            }
        }
        Ok(())
    }
}

fn parents_of(op: &Op) -> Vec<usize> {
    match *op {
        Op::Leaf => vec![],
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Matmul(a, b)
        | Op::ConcatCols(a, b) => vec![a, b],
        Op::Neg(a)
        | Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Recip0(a)
        | Op::Sqrt0(a)
        | Op::Ln(a)
        | Op::Exp(a)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::SlopeMask(a)
        | Op::RangeMask(a)
        | Op::Clamp(a, _, _)
        | Op::Transpose(a)
        | Op::Reshape(a)
        | Op::SumAll(a)
        | Op::SumAxis0(a)
        | Op::SumAxis1(a)
        | Op::BroadcastRow(a)
        | Op::BroadcastCol(a)
        | Op::BroadcastScalar(a)
        | Op::SliceCols(a, _, _)
        | Op::EmbedCols(a, _, _)
        | Op::Im2Col(a, _)
        | Op::Col2Im(a, _)
        | Op::Pad1d(a, _)
        | Op::Crop1d(a, _)
        | Op::SwapAxes12(a) => vec![a],
    }
}

impl Var {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.shape_of(self.id)
    }

    pub fn value(&self) -> Vec<f64> {
        self.graph.data_clone(self.id)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let inner = self.graph.inner.borrow();
        debug_assert_eq!(inner.nodes[self.id].data.len(), 1);
        inner.nodes[self.id].data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.rg(self.id)
    }

    fn check_same_graph(&self, other: &Var) -> Result<()> {
        if self.graph.same_graph(&other.graph) {
            Ok(())
        } else {
            Err(AutodiffError::GraphMismatch)
        }
    }

    fn unop(&self, op: Op, data: Vec<f64>, shape: Vec<usize>) -> Var {
        self.graph.push(shape, data, op, self.requires_grad())
    }

    fn map(&self, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let data = self.graph.with_data(self.id, |d| d.iter().map(|&v| f(v)).collect());
        self.unop(op, data, self.shape())
    }

    fn elementwise(&self, other: &Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &'static str) -> Result<Var> {
        self.check_same_graph(other)?;
        if self.shape() != other.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: name,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .graph
            .with_data2(self.id, other.id, |a, b| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect());
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(self.shape(), data, op, rg))
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.elementwise(other, |a, b| a + b, Op::Add(self.id, other.id), "add")
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.elementwise(other, |a, b| a - b, Op::Sub(self.id, other.id), "sub")
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.elementwise(other, |a, b| a * b, Op::Mul(self.id, other.id), "mul")
    }

    pub fn neg(&self) -> Var {
        self.map(|v| -v, Op::Neg(self.id))
    }

    pub fn scale(&self, c: f64) -> Var {
        self.map(|v| v * c, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.map(|v| v + c, Op::AddScalar(self.id))
    }

    pub fn recip0(&self) -> Var {
        self.map(|v| if v == 0.0 { 0.0 } else { 1.0 / v }, Op::Recip0(self.id))
    }

    pub fn sqrt0(&self) -> Var {
        self.map(|v| if v <= 0.0 { 0.0 } else { v.sqrt() }, Op::Sqrt0(self.id))
    }

    pub fn ln(&self) -> Var {
        self.map(f64::ln, Op::Ln(self.id))
    }

    pub fn exp(&self) -> Var {
        self.map(f64::exp, Op::Exp(self.id))
    }

    pub fn tanh(&self) -> Var {
        self.map(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sigmoid(&self) -> Var {
        self.map(|v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(self.id))
    }

    pub fn relu(&self) -> Result<Var> {
        let mask = self.slope_mask(0.0);
        self.mul(&mask)
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var> {
        let mask = self.slope_mask(slope);
        self.mul(&mask)
    }

    /// x > 0 ? 1 : slope; blocks gradient flow into `self`.
    pub fn slope_mask(&self, slope: f64) -> Var {
        let data = self
            .graph
            .with_data(self.id, |d| d.iter().map(|&v| if v > 0.0 { 1.0 } else { slope }).collect());
        self.graph
            .push(self.shape(), data, Op::SlopeMask(self.id), false)
    }

    /// lo <= x <= hi ? 1 : 0; blocks gradient flow into `self`.
    pub fn range_mask(&self, lo: f64, hi: f64) -> Var {
        let data = self.graph.with_data(self.id, |d| {
            d.iter()
                .map(|&v| if v >= lo && v <= hi { 1.0 } else { 0.0 })
                .collect()
        });
        self.graph
            .push(self.shape(), data, Op::RangeMask(self.id), false)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        self.map(|v| v.clamp(lo, hi), Op::Clamp(self.id, lo, hi))
    }

    fn mat_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(AutodiffError::BadShape {
                op,
                expected: "a 2-D matrix",
                got: s,
            });
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var> {
        self.check_same_graph(other)?;
        let (m, k) = self.mat_dims("matmul")?;
        let (k2, n) = other.mat_dims("matmul")?;
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .graph
            .with_data2(self.id, other.id, |a, b| kernels::matmul(a, b, m, k, n));
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self
            .graph
            .push(vec![m, n], data, Op::Matmul(self.id, other.id), rg))
    }

    pub fn t(&self) -> Result<Var> {
        let (m, n) = self.mat_dims("transpose")?;
        let data = self.graph.with_data(self.id, |d| kernels::transpose(d, m, n));
        Ok(self.unop(Op::Transpose(self.id), data, vec![n, m]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(&self.shape()) {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                left: self.shape(),
                right: shape.to_vec(),
            });
        }
        let data = self.graph.data_clone(self.id);
        Ok(self.unop(Op::Reshape(self.id), data, shape.to_vec()))
    }

    pub fn sum_all(&self) -> Var {
        let s = self.graph.with_data(self.id, |d| d.iter().sum());
        self.unop(Op::SumAll(self.id), vec![s], vec![1])
    }

    pub fn mean_all(&self) -> Var {
        let n = numel(&self.shape());
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn sum_axis0(&self) -> Result<Var> {
        let (m, n) = self.mat_dims("sum_axis0")?;
        let data = self.graph.with_data(self.id, |d| {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] += d[i * n + j];
                }
            }
            out
        });
        Ok(self.unop(Op::SumAxis0(self.id), data, vec![1, n]))
    }

    pub fn sum_axis1(&self) -> Result<Var> {
        let (m, n) = self.mat_dims("sum_axis1")?;
        let data = self.graph.with_data(self.id, |d| {
            (0..m).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect()
        });
        Ok(self.unop(Op::SumAxis1(self.id), data, vec![m, 1]))
    }

    pub fn broadcast_row(&self, m: usize) -> Result<Var> {
        let (one, n) = self.mat_dims("broadcast_row")?;
        if one != 1 {
            return Err(AutodiffError::BadShape {
                op: "broadcast_row",
                expected: "shape (1,N)",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| {
            let mut out = Vec::with_capacity(m * n);
            for _ in 0..m {
                out.extend_from_slice(d);
            }
            out
        });
        Ok(self.unop(Op::BroadcastRow(self.id), data, vec![m, n]))
    }

    pub fn broadcast_col(&self, n: usize) -> Result<Var> {
        let (m, one) = self.mat_dims("broadcast_col")?;
        if one != 1 {
            return Err(AutodiffError::BadShape {
                op: "broadcast_col",
                expected: "shape (M,1)",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| {
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                out.extend(std::iter::repeat(d[i]).take(n));
            }
            out
        });
        Ok(self.unop(Op::BroadcastCol(self.id), data, vec![m, n]))
    }

    pub fn broadcast_scalar(&self, shape: &[usize]) -> Result<Var> {
        if self.shape() != [1] {
            return Err(AutodiffError::BadShape {
                op: "broadcast_scalar",
                expected: "a scalar",
                got: self.shape(),
            });
        }
        let v = self.item();
        Ok(self.unop(
            Op::BroadcastScalar(self.id),
            vec![v; numel(shape)],
            shape.to_vec(),
        ))
    }

    pub fn concat_cols(&self, other: &Var) -> Result<Var> {
        self.check_same_graph(other)?;
        let (m, na) = self.mat_dims("concat_cols")?;
        let (m2, nb) = other.mat_dims("concat_cols")?;
        if m != m2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_cols",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.graph.with_data2(self.id, other.id, |a, b| {
            let mut out = Vec::with_capacity(m * (na + nb));
            for i in 0..m {
                out.extend_from_slice(&a[i * na..(i + 1) * na]);
                out.extend_from_slice(&b[i * nb..(i + 1) * nb]);
            }
            out
        });
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(
            vec![m, na + nb],
            data,
            Op::ConcatCols(self.id, other.id),
            rg,
        ))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat_dims("slice_cols")?;
        if start + len > n {
            return Err(AutodiffError::BadShape {
                op: "slice_cols",
                expected: "start+len <= columns",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| {
            let mut out = Vec::with_capacity(m * len);
            for i in 0..m {
                out.extend_from_slice(&d[i * n + start..i * n + start + len]);
            }
            out
        });
        Ok(self.unop(Op::SliceCols(self.id, start, len), data, vec![m, len]))
    }

    pub fn embed_cols(&self, start: usize, total: usize) -> Result<Var> {
        let (m, len) = self.mat_dims("embed_cols")?;
        if start + len > total {
            return Err(AutodiffError::BadShape {
                op: "embed_cols",
                expected: "start+len <= total",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| {
            let mut out = vec![0.0; m * total];
            for i in 0..m {
                out[i * total + start..i * total + start + len]
                    .copy_from_slice(&d[i * len..(i + 1) * len]);
            }
            out
        });
        Ok(self.unop(Op::EmbedCols(self.id, start, total), data, vec![m, total]))
    }

    fn bcl_dims(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(AutodiffError::BadShape {
                op,
                expected: "a 3-D (batch, channel, length) tensor",
                got: s,
            });
        }
        Ok((s[0], s[1], s[2]))
    }

    /// (B,C,L) -> (B*Lout, C*K) patch matrix for conv-as-matmul.
    pub fn im2col_geom(&self, geom: ColGeom) -> Result<Var> {
        let (b, c, l) = self.bcl_dims("im2col")?;
        if b != geom.batch || c != geom.ch || l != geom.len {
            return Err(AutodiffError::BadShape {
                op: "im2col",
                expected: "shape matching geometry",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| kernels::im2col(d, geom));
        Ok(self.unop(
            Op::Im2Col(self.id, geom),
            data,
            vec![geom.batch * geom.lout, geom.ch * geom.k],
        ))
    }

    /// Adjoint of [`Var::im2col_geom`]; scatter-adds patches back to (B,C,L).
    pub fn col2im(&self, geom: ColGeom) -> Result<Var> {
        let s = self.shape();
        if s != [geom.batch * geom.lout, geom.ch * geom.k] {
            return Err(AutodiffError::BadShape {
                op: "col2im",
                expected: "patch matrix matching geometry",
                got: s,
            });
        }
        let data = self.graph.with_data(self.id, |d| kernels::col2im(d, geom));
        Ok(self.unop(
            Op::Col2Im(self.id, geom),
            data,
            vec![geom.batch, geom.ch, geom.len],
        ))
    }

    pub fn pad1d(&self, p: usize) -> Result<Var> {
        let (b, c, l) = self.bcl_dims("pad1d")?;
        let data = self.graph.with_data(self.id, |d| kernels::pad1d(d, b, c, l, p));
        Ok(self.unop(Op::Pad1d(self.id, p), data, vec![b, c, l + 2 * p]))
    }

    pub fn crop1d(&self, p: usize) -> Result<Var> {
        let (b, c, l) = self.bcl_dims("crop1d")?;
        if l < 2 * p + 1 {
            return Err(AutodiffError::BadShape {
                op: "crop1d",
                expected: "length > 2*padding",
                got: self.shape(),
            });
        }
        let data = self.graph.with_data(self.id, |d| kernels::crop1d(d, b, c, l, p));
        Ok(self.unop(Op::Crop1d(self.id, p), data, vec![b, c, l - 2 * p]))
    }

    pub fn swap_axes12(&self) -> Result<Var> {
        let (b, a, c) = self.bcl_dims("swap_axes12")?;
        let data = self
            .graph
            .with_data(self.id, |d| kernels::swap_axes12(d, b, a, c));
        Ok(self.unop(Op::SwapAxes12(self.id), data, vec![b, c, a]))
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&self, target: &Var) -> Result<Var> {
        let d = self.sub(target)?;
        Ok(d.mul(&d)?.mean_all())
    }

    /// Binary cross-entropy; probabilities are clamped to [1e-7, 1-1e-7].
    pub fn bce(&self, target: &Var) -> Result<Var> {
        let p = self.clamp(1e-7, 1.0 - 1e-7);
        let one = self.graph.full(&p.shape(), 1.0);
        let pos = target.mul(&p.ln())?;
        let negt = one.sub(target)?;
        let negp = one.sub(&p)?.ln();
        Ok(pos.add(&negt.mul(&negp)?)?.neg().mean_all())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let g = Graph::new();
        let p = Parameter::new("x", &[1], vec![3.0]);
        let x = g.param(&p);
        let loss = x.mul(&x).unwrap().sum_all();
        g.backward(&loss).unwrap();
        assert_eq!(p.grad(), vec![6.0]);
    }

    #[test]
    fn fanout_sums_contributions() {
        // d(x + x)/dx = 2
        let g = Graph::new();
        let p = Parameter::new("x", &[1], vec![1.5]);
        let x = g.param(&p);
        let loss = x.add(&x).unwrap().sum_all();
        g.backward(&loss).unwrap();
        assert_eq!(p.grad(), vec![2.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let g = Graph::new();
        let p = Parameter::new("x", &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = g.param(&p);
        let loss = x.sum_all();
        g.backward(&loss).unwrap();
        assert_eq!(p.grad(), vec![1.0; 6]);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let g = Graph::new();
        let p = Parameter::new("x", &[1], vec![2.0]);
        let x = g.param(&p);
        let loss = x.mul(&x).unwrap().sum_all();
        g.backward(&loss).unwrap();
        g.backward(&loss).unwrap();
        assert_eq!(p.grad(), vec![8.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let g = Graph::new();
        let p = Parameter::new("x", &[2], vec![1.0, 2.0]);
        let x = g.param(&p);
        assert!(matches!(
            g.backward(&x),
            Err(AutodiffError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let g = Graph::new();
        let a = g.full(&[2, 3], 1.0);
        let b = g.full(&[3, 3], 1.0);
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[3, 3]"), "{err}");
    }

    #[test]
    fn relu_values() {
        let g = Graph::new();
        let x = g.constant(&[2], vec![-1.0, 2.0]);
        assert_eq!(x.relu().unwrap().value(), vec![0.0, 2.0]);
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let g = Graph::new();
        let x = g.constant(&[4], vec![0.5, -1.0, 2.0, 0.0]);
        assert_eq!(x.mse(&x).unwrap().item(), 0.0);
    }

    #[test]
    fn second_order_via_recorded_backward() {
        // f(x) = x^3; grad = 3x^2; d(grad)/dx = 6x
        let g = Graph::new();
        let x = g.input(&[1], vec![2.0], true);
        let y = x.mul(&x).unwrap().mul(&x).unwrap();
        let dx = g.grad_wrt(&y, &x, None).unwrap();
        assert!((dx.item() - 12.0).abs() < 1e-12);
        let ddx = g.grad_wrt(&dx, &x, None).unwrap();
        assert!((ddx.item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn grad_wrt_disconnected_is_zero() {
        let g = Graph::new();
        let x = g.input(&[2], vec![1.0, 2.0], true);
        let y = g.input(&[1], vec![5.0], true);
        let loss = y.mul(&y).unwrap();
        let dx = g.grad_wrt(&loss, &x, None).unwrap();
        assert_eq!(dx.value(), vec![0.0, 0.0]);
    }
}
