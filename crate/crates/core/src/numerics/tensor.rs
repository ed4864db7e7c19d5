use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use super::Scalar;
use crate::error::{invalid, Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

/// Reverse-mode rule of one differentiable operation.
///
/// `backward` receives the op inputs, the forward output and the gradient
/// of the loss with respect to that output; it returns one gradient per
/// input (`None` where `needs[i]` is false).
pub(crate) trait Backward<T: Scalar> {
    fn name(&self) -> &'static str;
    fn backward(
        &self,
        inputs: &[Tensor<T>],
        output: &[T],
        grad: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

struct GraphLink<T: Scalar> {
    inputs: Vec<Tensor<T>>,
    op: Box<dyn Backward<T>>,
}

struct Node<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    link: Option<GraphLink<T>>,
}

/// Dense row-major N-dimensional array with optional autodiff tracking.
///
/// Values are immutable once created; only the gradient buffer of a leaf
/// changes, and it accumulates across `backward` calls until
/// [`Tensor::zero_grad`] is called.
pub struct Tensor<T: Scalar = f32>(Rc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.link.as_ref().map(|l| l.op.name()))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, link: Option<GraphLink<T>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            link,
        }))
    }

    /// Constant tensor; fails if `data` does not fill `shape`.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(invalid(alloc::format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Trainable leaf; gradients are accumulated into it by `backward`.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(t.into_param())
    }

    fn into_param(self) -> Self {
        match Rc::try_unwrap(self.0) {
            Ok(node) => Self::build(node.shape, node.data, true, None),
            Err(rc) => Self::build(rc.shape.clone(), rc.data.clone(), true, None),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![T::ZERO; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::build(shape.to_vec(), vec![v; numel(shape)], false, None)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(Vec::new(), vec![v], false, None)
    }

    /// Result of a differentiable op. Attaches the backward rule only when
    /// some input requires a gradient.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: &[&Tensor<T>],
        op: impl Backward<T> + 'static,
    ) -> Self {
        if inputs.iter().any(|t| t.requires_grad()) {
            let link = GraphLink {
                inputs: inputs.iter().map(|t| (*t).clone()).collect(),
                op: Box::new(op),
            };
            Self::build(shape, data, true, Some(link))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.link.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Elementwise conversion to another precision (as a constant).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::build(
            self.0.shape.clone(),
            self.0.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            false,
            None,
        )
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    /// Name of the op that produced this tensor (`None` for leaves).
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.link.as_ref().map(|l| l.op.name())
    }

    /// Reverse-mode pass from a scalar loss.
    ///
    /// Leaf gradients accumulate: call [`zero_grad`](Self::zero_grad) on the
    /// parameters between optimizer steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        // Ids grow with creation time, so descending id is a valid reverse
        // topological order.
        let mut nodes: BTreeMap<usize, Tensor<T>> = BTreeMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if nodes.contains_key(&t.0.id) {
                continue;
            }
            if let Some(link) = &t.0.link {
                for input in &link.inputs {
                    if input.requires_grad() && !nodes.contains_key(&input.0.id) {
                        stack.push(input.clone());
                    }
                }
            }
            nodes.insert(t.0.id, t);
        }

        let mut pending: BTreeMap<usize, Vec<T>> = BTreeMap::new();
        pending.insert(self.0.id, vec![T::ONE]);
        for (id, t) in nodes.iter().rev() {
            let Some(g) = pending.remove(id) else {
                continue;
            };
            match &t.0.link {
                Some(link) => {
                    let needs: Vec<bool> = link.inputs.iter().map(|i| i.requires_grad()).collect();
                    let grads = link.op.backward(&link.inputs, &t.0.data, &g, &needs);
                    debug_assert_eq!(grads.len(), link.inputs.len());
                    for ((input, gi), need) in link.inputs.iter().zip(grads).zip(needs) {
                        let Some(gi) = gi else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(gi.len(), input.numel(), "grad of {}", link.op.name());
                        accumulate(pending.entry(input.0.id).or_default(), gi);
                    }
                }
                None => {
                    let mut slot = t.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => add_into(acc, &g),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(slot: &mut Vec<T>, g: Vec<T>) {
    if slot.is_empty() {
        *slot = g;
    } else {
        add_into(slot, &g);
    }
}

pub(crate) fn add_into<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops;

    #[test]
    fn rejects_bad_shape() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::<f32>::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = ops::scale(&x, 2.0);
        assert!(matches!(y.backward(), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::<f32>::param(&[3], vec![1.0, -2.0, 5.0]).unwrap();
        ops::sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::<f32>::param(&[2], vec![1.0, 2.0]).unwrap();
        ops::sum(&ops::mul(&x, &x).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f32>::param(&[2], vec![1.0, 2.0]).unwrap();
        let loss = ops::sum(&x);
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn constants_build_no_graph() {
        let x = Tensor::<f32>::new(&[2], vec![1.0, 2.0]).unwrap();
        let y = ops::scale(&x, 3.0);
        assert!(!y.requires_grad());
        assert!(y.is_leaf());
    }

    #[test]
    fn shared_subexpression_gets_both_paths() {
        // y = x * x + x at x = 3 -> dy/dx = 2x + 1 = 7
        let x = Tensor::<f64>::param(&[1], vec![3.0]).unwrap();
        let y = ops::add(&ops::mul(&x, &x).unwrap(), &x).unwrap();
        ops::sum(&y).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![7.0]);
    }
}
