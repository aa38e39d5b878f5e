//! Reverse-mode differentiation over complex tensors.
//!
//! Gradient convention: for a real loss `L` and a complex entry `z = x + jy`
//! the stored gradient is `∂L/∂x + j·∂L/∂y` (twice the Wirtinger derivative
//! `∂L/∂z̄`). A step `z ← z − η·g` therefore descends on the real and
//! imaginary parts independently, which is exactly what the optimizers
//! assume. Under this convention:
//!
//! * a linear map `y = A z` pulls back as `g_z = Aᴴ g_y`;
//! * a general map `y = f(z)` pulls back as `g_z = conj(∂f/∂z)·g_y + ∂f/∂z̄·conj(g_y)`.
//!
//! Graphs live on a [`Tape`]; [`Var`] handles are cheap copies. A tape is
//! single-threaded; build one per sample to parallelize.

mod conv;
mod gemm;
pub mod gradcheck;
mod ops;

pub use conv::{conv2d, upconv2d};
pub use ops::{add, cardioid, cardioid_partials, concat, linear_apply, mae_loss, mse_loss, scale};

use std::cell::RefCell;
use std::rc::Rc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense row-major complex tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTensor {
    shape: Vec<usize>,
    values: Vec<Complex64>,
}

impl CTensor {
    pub fn new(shape: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(NahError::shape(n, values.len()));
        }
        Ok(CTensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        CTensor {
            shape,
            values: vec![ZERO; n],
        }
    }

    pub fn scalar(v: Complex64) -> Self {
        CTensor {
            shape: vec![1],
            values: vec![v],
        }
    }

    /// `[1, rows, cols]` view of a field.
    pub fn from_field(f: &ComplexField) -> Self {
        CTensor {
            shape: vec![1, f.rows(), f.cols()],
            values: f.values().to_vec(),
        }
    }

    /// Interpret the trailing two axes as a grid.
    pub fn to_field(&self, quantity: Quantity) -> Result<ComplexField> {
        let (rows, cols) = match self.shape.as_slice() {
            [.., r, c] => (*r, *c),
            [n] => (1, *n),
            [] => (1, 1),
        };
        if rows * cols != self.values.len() {
            return Err(NahError::shape(rows * cols, self.values.len()));
        }
        ComplexField::new(rows, cols, self.values.clone(), quantity)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.values.len() {
            return Err(NahError::shape(n, self.values.len()));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn add_assign(&mut self, other: &CTensor) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

type Backward = Box<dyn Fn(&CTensor, &[bool]) -> Vec<Option<CTensor>>>;

enum Kind {
    Constant,
    Leaf,
    Op { parents: Vec<usize>, backward: Backward },
}

struct Node {
    value: Rc<CTensor>,
    kind: Kind,
    requires_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Records operations for one backward pass.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<CTensor> {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trainable leaf.
    pub fn leaf(&self, t: CTensor) -> Var<'_> {
        self.push_node(t, Kind::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, t: CTensor) -> Var<'_> {
        self.push_node(t, Kind::Constant, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop the recorded graph so the tape can be reused.
    pub fn reset(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.consumed = false;
    }

    fn push_node(&self, value: CTensor, kind: Kind, requires_grad: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            value: Rc::new(value),
            kind,
            requires_grad,
        });
        Var {
            tape: self,
            id: inner.nodes.len() - 1,
        }
    }

    pub(crate) fn push_op<'t>(&'t self, value: CTensor, parents: &[Var<'t>], backward: Backward) -> Var<'t> {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            let parents = parents.iter().map(|p| p.id).collect();
            self.push_node(value, Kind::Op { parents, backward }, true)
        } else {
            self.push_node(value, Kind::Constant, false)
        }
    }

    /// Propagate from a real scalar `loss` to every trainable leaf.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(NahError::BackwardTwice);
        }
        let root = &inner.nodes[loss.id];
        if !root.requires_grad {
            return Err(NahError::NoGraph);
        }
        if root.value.len() != 1 {
            return Err(NahError::shape(1, root.value.len()));
        }
        inner.consumed = true;

        let nodes = &inner.nodes;
        let root = &nodes[loss.id];
        let mut grads: Vec<Option<CTensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(CTensor {
            shape: root.value.shape.clone(),
            values: vec![Complex64::new(1.0, 0.0)],
        });
        for id in (0..=loss.id).rev() {
            let Kind::Op { parents, backward } = &nodes[id].kind else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = parents.iter().map(|&p| nodes[p].requires_grad).collect();
            for (&p, pg) in parents.iter().zip(backward(&g, &needs)) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }

        let leaves = nodes
            .iter()
            .enumerate()
            .map(|(id, n)| match n.kind {
                Kind::Leaf => Some(grads[id].take().unwrap_or_else(|| CTensor::zeros(n.value.shape.clone()))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaves })
    }
}

/// Leaf gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<CTensor>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for constants and intermediates.
    pub fn get(&self, v: Var<'_>) -> Option<&CTensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_>) -> Option<CTensor> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

pub(crate) fn check_same_shape(a: &CTensor, b: &CTensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(NahError::Config(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}
