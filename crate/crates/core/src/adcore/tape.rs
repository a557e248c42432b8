//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every operation as a node holding its output value and
//! the ids of its inputs. Because nodes are appended as they are computed,
//! the node list is already in topological order; [`Tape::backward`] walks it
//! once, in reverse, pushing adjoints to inputs.
//!
//! Tensors are lightweight `Copy` handles into the tape. Values are never
//! mutated after recording.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::conv;
use super::elementwise::{self, BinaryOp, UnaryOp};
use super::real::Real;
use super::reduce;
use super::shuffle;
use super::stencil::{self, StencilKernel};
use crate::array::Array;
use crate::error::{dim_err, Error, Result};

pub type NodeId = usize;

/// Numerical guard used by division, logarithm and square root in
/// [`Mode::Train`].
pub const GUARD_EPS: f64 = 1e-12;

/// How invalid-domain inputs (log/sqrt of negatives, division by zero) are
/// handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Raise [`Error::Domain`]. Used by all correctness tests.
    #[default]
    Strict,
    /// Clamp to [`GUARD_EPS`] and carry on. Used during training.
    Train,
}

pub(crate) enum Op {
    Leaf,
    Binary {
        kind: BinaryOp,
        a: NodeId,
        b: NodeId,
    },
    Unary {
        kind: UnaryOp,
        x: NodeId,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    Shuffle {
        x: NodeId,
        r: usize,
        unshuffle: bool,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Reshape {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    MeanAbsDiff {
        a: NodeId,
        b: NodeId,
    },
    Stencil {
        x: NodeId,
        kernel: std::sync::Arc<StencilKernel>,
    },
}

pub(crate) struct Node<T> {
    pub shape: Vec<usize>,
    pub value: Rc<Vec<T>>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Recording of one forward computation.
pub struct Tape<T: Real> {
    mode: Mode,
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Vec<T>>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    /// Strict-mode tape.
    pub fn new() -> Self {
        Self::with_mode(Mode::Strict)
    }

    /// Train-mode tape (epsilon guards instead of domain errors).
    pub fn training() -> Self {
        Self::with_mode(Mode::Train)
    }

    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: &Array<T>) -> Tensor<'_, T> {
        self.leaf(value.shape().to_vec(), value.data().to_vec(), true)
    }

    /// Non-differentiable leaf; never accumulates gradient.
    pub fn constant(&self, value: &Array<T>) -> Tensor<'_, T> {
        self.leaf(value.shape().to_vec(), value.data().to_vec(), false)
    }

    pub fn constant_vec(&self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Tensor<'_, T>> {
        let shape = shape.into();
        check_len(&shape, data.len())?;
        Ok(self.leaf(shape, data, false))
    }

    pub fn param_vec(&self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Tensor<'_, T>> {
        let shape = shape.into();
        check_len(&shape, data.len())?;
        Ok(self.leaf(shape, data, true))
    }

    /// Rank-0 constant.
    pub fn scalar(&self, v: f64) -> Tensor<'_, T> {
        self.leaf(Vec::new(), vec![T::from_f64(v)], false)
    }

    fn leaf(&self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Tensor<'_, T> {
        self.push(shape, data, Op::Leaf, requires_grad)
    }

    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        data: Vec<T>,
        op: Op,
        requires_grad: bool,
    ) -> Tensor<'_, T> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let op = if requires_grad || matches!(op, Op::Leaf) {
            op
        } else {
            Op::Leaf
        };
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            shape,
            value: Rc::new(data),
            op,
            requires_grad,
        });
        Tensor { tape: self, id }
    }

    pub(crate) fn shape_of(&self, id: NodeId) -> Vec<usize> {
        self.nodes.borrow()[id].shape.clone()
    }

    pub(crate) fn value_of(&self, id: NodeId) -> Rc<Vec<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn requires_grad_of(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad_of(&self, id: NodeId) -> Option<Vec<T>> {
        self.grads.borrow().get(id).and_then(|g| g.clone())
    }

    /// Drops all accumulated gradients.
    pub fn zero_grad(&self) {
        self.grads.borrow_mut().clear();
    }

    /// Reverse sweep from a scalar `loss`. Gradients of every reachable
    /// non-constant leaf are added to what previous calls accumulated.
    pub fn backward(&self, loss: Tensor<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return dim_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            ));
        }
        if !root.requires_grad {
            return Ok(());
        }
        let mut acc: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.id + 1);
        acc.resize_with(loss.id + 1, || None);
        acc[loss.id] = Some(vec![T::ONE]);

        let mut done: Vec<(NodeId, Vec<T>)> = Vec::new();
        let mut spare: HashMap<usize, Vec<Vec<T>>> = HashMap::new();
        for id in (0..=loss.id).rev() {
            let Some(g) = acc[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut sink = GradSink {
                nodes: &nodes,
                acc: &mut acc,
                spare: &mut spare,
            };
            propagate(&nodes, id, &g, &mut sink, self.mode);
            if matches!(node.op, Op::Leaf) {
                done.push((id, g));
            } else {
                spare.entry(g.len()).or_default().push(g);
            }
        }
        drop(nodes);

        let mut grads = self.grads.borrow_mut();
        if grads.len() < loss.id + 1 {
            grads.resize_with(loss.id + 1, || None);
        }
        for (id, g) in done {
            match &mut grads[id] {
                Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e += *v),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn check_len(shape: &[usize], n: usize) -> Result<()> {
    if shape.iter().product::<usize>() != n {
        return dim_err(format!("shape {:?} does not match {} values", shape, n));
    }
    Ok(())
}

/// Adjoint accumulator handed to per-op backward rules.
pub(crate) struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    acc: &'a mut [Option<Vec<T>>],
    spare: &'a mut HashMap<usize, Vec<Vec<T>>>,
}

impl<'a, T: Real> GradSink<'a, T> {
    pub fn wants(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Mutable adjoint buffer of `id`, zero-initialised on first use.
    pub fn slot(&mut self, id: NodeId) -> &mut [T] {
        let len = self.nodes[id].value.len();
        let spare = &mut *self.spare;
        self.acc[id].get_or_insert_with(|| match spare.get_mut(&len).and_then(Vec::pop) {
            Some(mut buf) => {
                buf.fill(T::ZERO);
                buf
            }
            None => vec![T::ZERO; len],
        })
    }

    pub fn value(&self, id: NodeId) -> &'a [T] {
        let nodes: &'a [Node<T>] = self.nodes;
        &nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> &'a [usize] {
        let nodes: &'a [Node<T>] = self.nodes;
        &nodes[id].shape
    }
}

fn propagate<T: Real>(nodes: &[Node<T>], id: NodeId, g: &[T], sink: &mut GradSink<'_, T>, mode: Mode) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            elementwise::binary_backward(*kind, *a, *b, &node.shape, &node.value, g, sink, mode)
        }
        Op::Unary { kind, x } => elementwise::unary_backward(*kind, *x, &node.value, g, sink, mode),
        Op::Conv2d {
            x,
            w,
            b,
            stride,
            pad,
        } => conv::conv2d_backward(*x, *w, *b, *stride, *pad, &node.shape, g, sink),
        Op::Shuffle { x, r, unshuffle } => shuffle::shuffle_backward(*x, *r, *unshuffle, g, sink),
        Op::Concat { parts } => shuffle::concat_backward(parts, g, sink),
        Op::Reshape { x } => {
            if sink.wants(*x) {
                sink.slot(*x).iter_mut().zip(g).for_each(|(s, v)| *s += *v);
            }
        }
        Op::Sum { x } => reduce::sum_backward(*x, g[0], 1.0, sink),
        Op::Mean { x } => {
            let n = sink.value(*x).len() as f64;
            reduce::sum_backward(*x, g[0], 1.0 / n, sink)
        }
        Op::MeanAbsDiff { a, b } => reduce::mean_abs_diff_backward(*a, *b, g[0], sink),
        Op::Stencil { x, kernel } => stencil::stencil_backward(*x, kernel, &node.shape, g, sink),
    }
}

/// Handle to a value recorded on a [`Tape`].
pub struct Tensor<'t, T: Real> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: NodeId,
}

impl<T: Real> Clone for Tensor<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real> Copy for Tensor<'_, T> {}

impl<T: Real> std::fmt::Debug for Tensor<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<'t, T: Real> Tensor<'t, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn value(&self) -> Rc<Vec<T>> {
        self.tape.value_of(self.id)
    }

    pub fn to_array(&self) -> Array<T> {
        Array::new(self.shape(), self.value().as_ref().clone()).expect("node shape is consistent")
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        let v = self.value();
        if v.len() != 1 {
            return dim_err(format!("item() on tensor of shape {:?}", self.shape()));
        }
        Ok(v[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    pub fn grad(&self) -> Option<Array<T>> {
        self.tape
            .grad_of(self.id)
            .map(|g| Array::new(self.shape(), g).expect("grad matches value shape"))
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(*self)
    }

    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape()[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            ref s => dim_err(format!("expected NCHW tensor, got shape {:?}", s)),
        }
    }

    pub(crate) fn same_tape(&self, other: &Tensor<'t, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Dimension("tensors belong to different tapes".into()))
        }
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        check_len(&shape, self.numel())?;
        let data = self.value().as_ref().clone();
        Ok(self.tape.push(shape, data, Op::Reshape { x: self.id }, self.requires_grad()))
    }
}
