//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order, which is already a topological order. [`Graph::backward`] walks the
//! tape once in reverse. The graph is single-writer: it is neither `Send` nor
//! `Sync`, so recording and backward cannot race.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// What a backward rule sees: the gradient flowing into the op's output, the
/// op's input values, and which inputs actually need a gradient.
pub struct BackwardArgs<'a, T> {
    pub grad: &'a [T],
    pub inputs: &'a [Rc<Tensor<T>>],
    pub output: &'a Tensor<T>,
    pub needs: &'a [bool],
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&BackwardArgs<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    inputs: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    grad: Option<Vec<T>>,
}

#[derive(Default)]
struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, usize>,
    bound: HashMap<String, usize>,
}

pub struct Graph<T> {
    tape: RefCell<Tape<T>>,
    kink_distance: Cell<f64>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            tape: RefCell::new(Tape {
                nodes: Vec::new(),
                params: HashMap::new(),
                bound: HashMap::new(),
            }),
            kink_distance: Cell::new(f64::INFINITY),
        }
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut tape = self.tape.borrow_mut();
        tape.nodes.push(node);
        Var {
            graph: self,
            id: tape.nodes.len() - 1,
        }
    }

    /// A leaf that gradients flow into when `requires_grad` is set.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(Node {
            value: Rc::new(value),
            requires_grad,
            inputs: Vec::new(),
            backward: None,
            grad: None,
        })
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    /// A named parameter leaf. Frozen parameters are recorded as constants, so
    /// no gradient is ever computed for them.
    ///
    /// A name registered with [`Graph::bind_param`] resolves to the bound
    /// variable instead.
    pub fn param(&self, name: &str, value: &Tensor<T>, trainable: bool) -> Var<'_, T> {
        let bound = self.tape.borrow().bound.get(name).copied();
        if let Some(id) = bound {
            return Var { graph: self, id };
        }
        let var = self.leaf(value.clone(), trainable);
        self.tape
            .borrow_mut()
            .params
            .insert(name.to_string(), var.id);
        var
    }

    /// Makes later `param(name, ..)` calls return `var`, so a module's
    /// parameters can be driven from outside (gradient checking does this).
    pub fn bind_param(&self, name: &str, var: Var<'_, T>) {
        self.tape.borrow_mut().bound.insert(name.to_string(), var.id);
    }

    pub fn param_var(&self, name: &str) -> Option<Var<'_, T>> {
        let id = *self.tape.borrow().params.get(name)?;
        Some(Var { graph: self, id })
    }

    pub fn len(&self) -> usize {
        self.tape.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an op. The backward rule is dropped when no input requires a
    /// gradient.
    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        inputs: &[Var<'_, T>],
        backward: impl Fn(&BackwardArgs<'_, T>) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Var<'_, T> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let requires_grad = {
            let tape = self.tape.borrow();
            ids.iter().any(|&i| tape.nodes[i].requires_grad)
        };
        self.push(Node {
            value: Rc::new(value),
            requires_grad,
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            inputs: ids,
            grad: None,
        })
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.tape.borrow().nodes[id].value)
    }

    /// Smallest distance to a non-differentiable point (relu at 0, tied max
    /// pool window) seen since the graph was created.
    pub fn kink_distance(&self) -> f64 {
        self.kink_distance.get()
    }

    pub(crate) fn note_kink(&self, distance: f64) {
        if distance < self.kink_distance.get() {
            self.kink_distance.set(distance);
        }
    }

    /// Back-propagates from a scalar `loss`.
    ///
    /// Gradients accumulate: calling `backward` twice without
    /// [`Graph::zero_grad`] doubles every stored gradient.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let mut tape = self.tape.borrow_mut();
        let loss_node = &tape.nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        if !loss_node.requires_grad {
            return Ok(());
        }

        let mut pending: Vec<Option<Vec<T>>> = (0..=loss.id).map(|_| None).collect();
        pending[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &tape.nodes[id];
            if let Some(rule) = &node.backward {
                let inputs: Vec<Rc<Tensor<T>>> = node
                    .inputs
                    .iter()
                    .map(|&i| Rc::clone(&tape.nodes[i].value))
                    .collect();
                let needs: Vec<bool> = node
                    .inputs
                    .iter()
                    .map(|&i| tape.nodes[i].requires_grad)
                    .collect();
                let input_grads = rule(&BackwardArgs {
                    grad: &grad,
                    inputs: &inputs,
                    output: &node.value,
                    needs: &needs,
                });
                debug_assert_eq!(input_grads.len(), node.inputs.len());
                for (&input, g) in node.inputs.iter().zip(input_grads) {
                    let Some(g) = g else { continue };
                    if !tape.nodes[input].requires_grad {
                        continue;
                    }
                    match &mut pending[input] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        slot => *slot = Some(g),
                    }
                }
            }
            let node = &mut tape.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, b)| *a += *b),
                slot => *slot = Some(grad),
            }
        }
        Ok(())
    }

    pub fn zero_grad(&self) {
        for node in &mut self.tape.borrow_mut().nodes {
            node.grad = None;
        }
    }
}

impl<'g, T: Float> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.tape.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.tape.borrow().nodes[self.id].requires_grad
    }

    /// Accumulated gradient, if backward reached this value.
    pub fn grad(&self) -> Option<Tensor<T>> {
        let tape = self.graph.tape.borrow();
        let node = &tape.nodes[self.id];
        let grad = node.grad.as_ref()?;
        Some(Tensor::from_vec(node.value.shape().to_vec(), grad.clone()).expect("grad shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_scalar_loss_is_rejected() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones([2, 2]), true);
        assert!(matches!(g.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn frozen_param_gets_no_grad() {
        let g = Graph::<f64>::new();
        let w = g.param("w", &Tensor::ones([3]), false);
        let s = w.sum();
        g.backward(s).unwrap();
        assert!(w.grad().is_none());
        assert!(!s.requires_grad());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64s([3], &[1.0, -2.0, 0.5]).unwrap(), true);
        let loss = x.mul(x).unwrap().sum();
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[4.0, -8.0, 2.0]);
        g.zero_grad();
        g.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, -4.0, 1.0]);
    }
}
