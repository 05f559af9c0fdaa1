//! Named parameter storage and the session that binds parameters to a tape.
//!
//! Layers hold [`ParamId`]s rather than tensors, so the same network
//! description serves training, inference and checkpoint IO. A [`Session`]
//! wraps one forward/backward pass: it lends parameters out as tape leaves,
//! collects their gradients afterwards, and carries the train/eval flag that
//! batch norm layers consult.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::{config_err, shape_err};

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

/// One named tensor with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
    has_grad: bool,
    trainable: bool,
}

impl<T: Scalar> Parameter<T> {
    /// Dotted path of the parameter, e.g. `"blocks.2.srb.1.dw.weight"`.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Current value (detached).
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    /// Accumulated gradient, if a backward pass has produced one.
    pub fn grad(&self) -> Option<&[T]> {
        if self.has_grad {
            Some(&self.grad)
        } else {
            None
        }
    }

    /// Whether the optimizer should update this parameter. Running batch
    /// norm statistics are stored here too but are not trainable.
    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// All parameters of a model, ordered by registration.
///
/// Registration order is part of the checkpoint contract: tensors are
/// serialized in this order, and two models built from the same spec and
/// seed register identical names in identical order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar> {
    params: Vec<Parameter<T>>,
    by_name: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: BTreeMap::new() }
    }

    /// Adds a parameter under a unique dotted name.
    pub fn register(
        &mut self,
        name: String,
        value: Tensor<T>,
        trainable: bool,
    ) -> Result<ParamId> {
        if self.by_name.contains_key(&name) {
            return Err(config_err!("duplicate parameter name {name:?}"));
        }
        let id = ParamId(self.params.len());
        let grad = vec![T::zero(); value.len()];
        self.by_name.insert(name.clone(), id.0);
        self.params.push(Parameter {
            name,
            value: value.detach(),
            grad,
            has_grad: false,
            trainable,
        });
        Ok(id)
    }

    /// Number of registered parameters (tensors, not scalars).
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Looks a parameter up by its dotted name.
    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    /// Current value of a parameter (detached).
    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: &Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if value.shape() != p.value.shape() {
            return Err(shape_err!(
                "set_value",
                "parameter {:?} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            ));
        }
        p.value = value.detach();
        Ok(())
    }

    /// Adds `delta` into the gradient buffer of `id` and marks it present.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[T]) -> Result<()> {
        let p = &mut self.params[id.0];
        if delta.len() != p.grad.len() {
            return Err(shape_err!(
                "accumulate_grad",
                "parameter {:?} has {} elements, gradient has {}",
                p.name,
                p.grad.len(),
                delta.len()
            ));
        }
        for (g, d) in p.grad.iter_mut().zip(delta) {
            *g = *g + *d;
        }
        p.has_grad = true;
        Ok(())
    }

    /// Clears all gradient buffers and presence flags.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
            p.has_grad = false;
        }
    }

    /// True when at least one trainable parameter carries a gradient.
    pub fn any_grads(&self) -> bool {
        self.params.iter().any(|p| p.trainable && p.has_grad)
    }
}

/// One forward/backward pass over a parameter store.
pub struct Session<'a, T: Scalar> {
    tape: &'a mut Tape<T>,
    store: &'a mut ParamStore<T>,
    train: bool,
    // Tape leaf for each parameter that has been used so far, so repeated
    // uses of one parameter share a node and gradients accumulate.
    bound: BTreeMap<ParamId, NodeId>,
    // Temporary stand-ins, used by gradient checks to probe one parameter.
    overrides: BTreeMap<ParamId, Tensor<T>>,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, store: &'a mut ParamStore<T>, train: bool) -> Self {
        Session { tape, store, train, bound: BTreeMap::new(), overrides: BTreeMap::new() }
    }

    /// Whether layers should run in training mode (batch statistics) or
    /// inference mode (running statistics).
    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn tape(&mut self) -> &mut Tape<T> {
        self.tape
    }

    /// Read-only view of the underlying store.
    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Fetches a parameter as a tape-tracked tensor.
    ///
    /// The first use per session watches the value on the tape; later uses
    /// return the same node so gradient contributions add up. A substitute
    /// that is already tape-tracked keeps its node, letting callers read
    /// the gradient off the tape directly.
    pub fn param(&mut self, id: ParamId) -> Tensor<T> {
        let value = match self.overrides.get(&id) {
            Some(v) => v.clone(),
            None => self.store.value(id).clone(),
        };
        if let Some(&node) = self.bound.get(&id) {
            return value.with_node(Some(node));
        }
        let tracked = match value.node() {
            Some(_) => value,
            None => self.tape.watch(&value),
        };
        if let Some(node) = tracked.node() {
            self.bound.insert(id, node);
        }
        tracked
    }

    /// Replaces a parameter's value for the remainder of this session.
    ///
    /// Must be called before the parameter's first use; the substitute is
    /// watched on the tape like the original would have been.
    pub fn substitute(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        if self.bound.contains_key(&id) {
            return Err(config_err!(
                "parameter {:?} already bound in this session",
                self.store.get(id).name()
            ));
        }
        if value.shape() != self.store.value(id).shape() {
            return Err(shape_err!(
                "substitute",
                "parameter {:?} has shape {:?}, got {:?}",
                self.store.get(id).name(),
                self.store.value(id).shape(),
                value.shape()
            ));
        }
        self.overrides.insert(id, value);
        Ok(())
    }

    /// Updates a running-statistics buffer in place (no gradient involved).
    pub fn update_running(&mut self, id: ParamId, batch: &[T], momentum: T) -> Result<()> {
        let old = self.store.value(id).to_vec();
        if old.len() != batch.len() {
            return Err(shape_err!(
                "update_running",
                "buffer {:?} has {} elements, batch statistic has {}",
                self.store.get(id).name(),
                old.len(),
                batch.len()
            ));
        }
        let keep = T::one() - momentum;
        let next: Vec<T> = old
            .iter()
            .zip(batch)
            .map(|(&o, &b)| keep * o + momentum * b)
            .collect();
        let shape = self.store.value(id).shape().to_vec();
        self.store.set_value(id, &Tensor::from_vec(shape, next)?)
    }

    /// Runs the reverse sweep from `loss` and accumulates parameter
    /// gradients into the store. Returns `false` when the loss was not
    /// connected to the tape (all gradients are then zero).
    pub fn backward(&mut self, loss: &Tensor<T>) -> Result<bool> {
        let grads = self.tape.backward(loss)?;
        if !grads.seeded() {
            return Ok(false);
        }
        for (&id, &node) in &self.bound {
            if !self.store.get(id).trainable() {
                continue;
            }
            if let Some(g) = grads.node_grad(node) {
                self.store.accumulate_grad(id, g)?;
            }
        }
        Ok(true)
    }

    /// Gradient of the last backward pass with respect to a substituted or
    /// ordinary parameter, read straight off the tape.
    pub fn node_of(&self, id: ParamId) -> Option<NodeId> {
        self.bound.get(&id).copied()
    }
}
