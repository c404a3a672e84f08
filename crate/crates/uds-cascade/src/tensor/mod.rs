//! Dense f64 tensors with tape-free reverse-mode differentiation.
//!
//! Every operation returns a new [`Tensor`] holding its forward value and a
//! closure that scatters the incoming gradient to its parents. Calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order. Gradients accumulate until [`Tensor::zero_grad`] (or an optimizer
//! step) clears them.

pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// A node in the computation graph. Cheap to clone (reference counted).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("data", &self.inner.data)
            .finish()
    }
}

impl Tensor {
    pub(crate) fn new(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: RefCell::new(None),
                parents,
                backward,
            }),
        }
    }

    /// A leaf tensor with no provenance.
    pub fn leaf(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data, Vec::new(), None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::leaf(vec![1], vec![v])
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::leaf(shape, vec![0.0; n])
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor::leaf(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len());
        Tensor::leaf(vec![rows, cols], data)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.inner.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.inner.shape[1]
    }

    /// Value of a scalar tensor.
    pub fn value(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.inner.data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f64]) {
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (b, c) in buf.iter_mut().zip(contrib) {
                    *b += c;
                }
            }
            None => *g = Some(contrib.to_vec()),
        }
    }

    /// Reverse-mode gradient propagation from a scalar.
    ///
    /// Gradients accumulate into every reachable tensor's buffer; a second
    /// call without clearing doubles leaf gradients.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                msg: format!("expected scalar, got shape {:?}", self.shape()),
            });
        }
        let order = self.topo_order();
        // intermediate grads are per-pass scratch; only leaves accumulate
        // across calls
        for t in &order {
            if t.inner.backward.is_some() {
                t.zero_grad();
            }
        }
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            if let Some(back) = &t.inner.backward {
                let g = t.inner.grad.borrow().clone();
                if let Some(g) = g {
                    back(&g, &t.inner.parents);
                }
            }
        }
        Ok(())
    }

    /// Iterative post-order over the graph (children after parents).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        // (tensor, parents_pushed)
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in &t.inner.parents {
                if !seen.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}
