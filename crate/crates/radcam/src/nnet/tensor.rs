//! Dense tensor with reverse-mode automatic differentiation.
//!
//! Tensors are cheap handles onto graph nodes. Ops (see `ops`) record their
//! inputs; `backward` walks the graph in reverse topological order and
//! accumulates gradients into every leaf created with `requires_grad`.
//! Graphs are built per forward pass and dropped afterwards.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::real::Real;
use super::NnError;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Saved operation context for the backward pass.
#[derive(Debug)]
pub(super) enum Op<T: Real> {
    Leaf,
    /// parents: [x, weight, bias]
    Conv2d { stride: usize, pad: usize },
    Relu,
    Upsample2x,
    Add,
    Sub,
    /// parents: [featmap]; reads `c_len` channels starting at `c0` at each
    /// (row, col) anchor.
    GatherPixels {
        anchors: Vec<(usize, usize)>,
        c0: usize,
        c_len: usize,
    },
    /// parents: [matrix]; selects rows.
    GatherRows { idx: Vec<usize> },
    /// parents: [matrix [n, m]]; output: per-row Euclidean norm [n].
    RowNorm,
    /// y = a * x + b; only the slope matters for the gradient.
    Affine { a: T },
    Sigmoid,
    Sum,
    Mean,
    /// parents: [s]; scale * sum over (i, j, k) of k * s_i * s_j.
    PairWeighted { pairs: Vec<(usize, usize, T)>, scale: T },
}

pub(super) struct Node<T: Real> {
    pub id: u64,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
    pub requires_grad: bool,
    pub parents: Vec<Tensor<T>>,
    pub op: Op<T>,
}

/// Handle onto a graph node.
pub struct Tensor<T: Real> {
    pub(super) inner: Rc<RefCell<Node<T>>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

pub(super) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        op: Op<T>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                parents,
                op,
            })),
        }
    }

    /// Constant leaf (no gradient).
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        if numel(&shape) != data.len() {
            return Err(NnError::ShapeMismatch {
                op: "from_vec",
                expected: format!("{} values for shape {shape:?}", numel(&shape)),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Tensor::build(shape, data, false, Vec::new(), Op::Leaf))
    }

    /// Leaf that accumulates a gradient during `backward`.
    pub fn param(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        let t = Tensor::from_vec(shape, data)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn scalar(value: T) -> Self {
        Tensor::build(vec![1], vec![value], false, Vec::new(), Op::Leaf)
    }

    pub(super) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        op: Op<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, op) = if requires_grad {
            (parents, op)
        } else {
            // Grad-free subgraphs are dropped eagerly.
            (Vec::new(), Op::Leaf)
        };
        Tensor::build(shape, data, requires_grad, parents, op)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn data(&self) -> Ref<'_, [T]> {
        Ref::map(self.inner.borrow(), |n| n.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T, NnError> {
        let n = self.inner.borrow();
        if n.data.len() != 1 {
            return Err(NnError::NotScalar {
                op: "item",
                shape: format!("{:?}", n.shape),
            });
        }
        Ok(n.data[0])
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    pub(super) fn accumulate_grad(&self, delta: &[T]) {
        let mut n = self.inner.borrow_mut();
        let len = n.data.len();
        let grad = n.grad.get_or_insert_with(|| vec![T::ZERO; len]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    /// Like `accumulate_grad` but takes ownership: the buffer is moved in
    /// when no gradient exists yet, sparing a zero-fill plus add pass.
    pub(super) fn accumulate_grad_owned(&self, delta: Vec<T>) {
        let mut n = self.inner.borrow_mut();
        match &mut n.grad {
            None => n.grad = Some(delta),
            Some(grad) => {
                for (g, d) in grad.iter_mut().zip(&delta) {
                    *g += *d;
                }
            }
        }
    }

    /// Reverse-mode differentiation from a scalar root. Gradients accumulate
    /// into every reachable `requires_grad` node; call `zero_grad` (or build
    /// fresh leaves) between passes.
    pub fn backward(&self) -> Result<(), NnError> {
        {
            let n = self.inner.borrow();
            if !n.requires_grad {
                return Ok(());
            }
            if n.data.len() != 1 {
                return Err(NnError::NotScalar {
                    op: "backward",
                    shape: format!("{:?}", n.shape),
                });
            }
        }
        // Postorder DFS over requires_grad nodes.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.inner.borrow().id);
        while let Some((node, child)) = stack.pop() {
            let next = {
                let n = node.inner.borrow();
                n.parents.get(child).cloned()
            };
            match next {
                Some(parent) => {
                    stack.push((node, child + 1));
                    let (pid, wants) = {
                        let p = parent.inner.borrow();
                        (p.id, p.requires_grad)
                    };
                    if wants && visited.insert(pid) {
                        stack.push((parent, 0));
                    }
                }
                None => order.push(node),
            }
        }
        self.inner.borrow_mut().grad = Some(vec![T::ONE]);
        for node in order.iter().rev() {
            super::ops::backward_step(node)?;
        }
        Ok(())
    }
}

/// Debug-mode finiteness check; release builds skip it.
pub(super) fn check_finite<T: Real>(op: &'static str, data: &[T]) -> Result<(), NnError> {
    if cfg!(debug_assertions) && !data.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite { op });
    }
    Ok(())
}
