//! Reverse-mode autodiff on an append-only tape.
//!
//! Each traced operation pushes one node holding a boxed backward closure
//! over its saved inputs. Because the tape is append-only, a node's inputs
//! always have smaller ids than the node itself, so a single reverse sweep
//! over the node list propagates gradients in a valid topological order.
//! Gradients for shared inputs accumulate additively, and every kernel
//! adds contributions in a fixed element order, so a backward pass is
//! bit-for-bit reproducible.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

/// Backward step: receives the output gradient and adds each input's
/// contribution into the accumulator.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &mut Grads<T>)>;

struct Node<T: Scalar> {
    back: Option<BackwardFn<T>>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Tape<T> {
    /// A recording tape: traced operations will register backward steps.
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), recording: true }
    }

    /// A disabled tape for inference: `watch` and `record` become no-ops,
    /// so forward passes allocate nothing beyond their outputs.
    pub fn disabled() -> Self {
        Tape { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Marks a tensor as a differentiation root. Returns a copy that
    /// shares storage but carries a tape link; gradients can later be
    /// looked up through the returned tensor.
    pub fn watch(&mut self, t: &Tensor<T>) -> Tensor<T> {
        if !self.recording {
            return t.clone();
        }
        let id = self.leaf();
        t.clone().with_node(Some(id))
    }

    /// Registers a gradient sink with no backward step of its own.
    pub(crate) fn leaf(&mut self) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { back: None });
        id
    }

    /// Attaches `out` to the tape if recording is on and at least one
    /// input is traced. `make` is only invoked when a node is actually
    /// created, so untraced forward passes skip all capture work.
    pub(crate) fn record<F>(&mut self, out: Tensor<T>, inputs: &[Option<NodeId>], make: F) -> Tensor<T>
    where
        F: FnOnce() -> BackwardFn<T>,
    {
        if !self.recording || inputs.iter().all(Option::is_none) {
            return out;
        }
        debug_assert!(inputs.iter().flatten().all(|id| id.0 < self.nodes.len()));
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { back: Some(make()) });
        out.with_node(Some(id))
    }

    /// Runs the reverse sweep from a scalar loss.
    ///
    /// Returns the full gradient accumulator; use [`Grads::wrt`] to read
    /// the gradient of any watched tensor. If the loss is detached (no
    /// tape link) the result is an unseeded, all-empty accumulator —
    /// callers can detect that via [`Grads::seeded`].
    pub fn backward(&self, loss: &Tensor<T>) -> Result<Grads<T>> {
        if loss.len() != 1 {
            return Err(Error::NotScalar { len: loss.len() });
        }
        let mut grads = Grads { bufs: vec![None; self.nodes.len()], seeded: false };
        let Some(seed) = loss.node() else {
            return Ok(grads);
        };
        grads.seeded = true;
        grads.accumulate(seed, 1, |g| g[0] = T::one());
        for id in (0..=seed.0).rev() {
            // Take the buffer out so the closure can borrow the
            // accumulator mutably; inputs always have smaller ids, so a
            // node never touches its own slot.
            let Some(g) = grads.bufs[id].take() else { continue };
            if let Some(back) = &self.nodes[id].back {
                back(&g, &mut grads);
            }
            grads.bufs[id] = Some(g);
        }
        Ok(grads)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Per-node gradient buffers produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads<T: Scalar> {
    bufs: Vec<Option<Vec<T>>>,
    seeded: bool,
}

impl<T: Scalar> Grads<T> {
    /// Whether the backward pass actually ran (the loss was traced).
    pub fn seeded(&self) -> bool {
        self.seeded
    }

    /// Gradient with respect to a watched or recorded tensor. `None`
    /// means no gradient flowed there (treat as zero).
    pub fn wrt(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.node_grad(t.node()?)
    }

    pub fn node_grad(&self, id: NodeId) -> Option<&[T]> {
        self.bufs.get(id.0)?.as_deref()
    }

    /// Adds into the buffer for `id`, allocating zeros on first touch.
    pub(crate) fn accumulate(&mut self, id: NodeId, len: usize, f: impl FnOnce(&mut [T])) {
        let buf = self.bufs[id.0].get_or_insert_with(|| vec![T::zero(); len]);
        debug_assert_eq!(buf.len(), len);
        f(buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watch_on_disabled_tape_is_a_no_op() {
        let mut tape = Tape::<f32>::disabled();
        let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let w = tape.watch(&x);
        assert!(w.node().is_none());
        assert_eq!(tape.num_nodes(), 0);
    }

    #[test]
    fn backward_rejects_non_scalar_seed() {
        let mut tape = Tape::<f32>::new();
        let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let w = tape.watch(&x);
        assert_eq!(tape.backward(&w).unwrap_err(), Error::NotScalar { len: 2 });
    }

    #[test]
    fn backward_on_detached_loss_is_unseeded() {
        let tape = Tape::<f32>::new();
        let loss = Tensor::from_vec(vec![1], vec![0.5]).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert!(!grads.seeded());
    }

    #[test]
    fn manual_chain_accumulates_shared_input() {
        // y = 3*x + 5*x built by hand from two nodes feeding one sum node;
        // dy/dx must come out as 8.
        let mut tape = Tape::<f64>::new();
        let x = Tensor::from_vec(vec![1], vec![2.0]).unwrap();
        let xw = tape.watch(&x);
        let xid = xw.node().unwrap();

        let a = Tensor::from_vec(vec![1], vec![6.0]).unwrap();
        let a = tape.record(a, &[Some(xid)], || {
            Box::new(move |g, acc| acc.accumulate(xid, 1, |gx| gx[0] += 3.0 * g[0]))
        });
        let b = Tensor::from_vec(vec![1], vec![10.0]).unwrap();
        let b = tape.record(b, &[Some(xid)], || {
            Box::new(move |g, acc| acc.accumulate(xid, 1, |gx| gx[0] += 5.0 * g[0]))
        });
        let (aid, bid) = (a.node().unwrap(), b.node().unwrap());
        let y = Tensor::from_vec(vec![1], vec![16.0]).unwrap();
        let y = tape.record(y, &[Some(aid), Some(bid)], || {
            Box::new(move |g, acc| {
                acc.accumulate(aid, 1, |ga| ga[0] += g[0]);
                acc.accumulate(bid, 1, |gb| gb[0] += g[0]);
            })
        });

        let grads = tape.backward(&y).unwrap();
        assert!(grads.seeded());
        assert_eq!(grads.wrt(&xw).unwrap(), &[8.0]);
    }
}
