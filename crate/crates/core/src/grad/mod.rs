//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a flat arena of nodes built eagerly: every operation
//! computes its value at construction time, so "forward" is just reading
//! the stored value, and each node is evaluated exactly once per pass.
//! [`Graph::backward`] seeds the scalar root with 1 and walks the arena in
//! reverse insertion order (parents always precede children), accumulating
//! gradients by summation wherever a tensor is used more than once.
//!
//! All values are `f64`; attribution completeness checks and
//! finite-difference gradient tests need the headroom. Graphs are rebuilt
//! per forward pass; a graph instance is single-threaded.

mod check;
mod ops;
pub mod optim;
pub mod params;

pub use check::{central_difference, relative_error};
pub use ops::PadMode;
pub(crate) use ops::reflect_index;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

/// Handle to a tensor node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Cached data for conv2d backward: the im2col matrix and its gather map.
pub(crate) struct ConvCache {
    pub input: TensorId,
    pub kernel: TensorId,
    /// (positions, c_in*kh*kw) gather of the padded input.
    pub cols: ndarray::Array2<f64>,
    /// Flat input index per cols element; `usize::MAX` marks zero padding.
    pub index_map: Vec<usize>,
    pub out_spatial: (usize, usize),
}

pub(crate) enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    ScalarMul(TensorId, f64),
    ScalarAdd(TensorId),
    MatMul(TensorId, TensorId),
    Conv2d(Box<ConvCache>),
    Relu(TensorId),
    Sigmoid(TensorId),
    Softplus(TensorId),
    Exp(TensorId),
    Log(TensorId),
    LogClamped(TensorId, f64),
    MeanAxis(TensorId, usize),
    SumAxis(TensorId, usize),
    MaxAxis {
        input: TensorId,
        /// Flat input index of the (first) argmax per output element.
        argmax: Vec<usize>,
    },
    Reshape(TensorId),
    Slice {
        input: TensorId,
        /// Flat input index per output element.
        index_map: Vec<usize>,
    },
    BroadcastTo(TensorId),
    Transpose2(TensorId),
    /// Signal framing: gather with reflect padding, one row per frame.
    Frame {
        input: TensorId,
        index_map: Vec<usize>,
    },
}

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub grad: Option<ArrayD<f64>>,
    pub op: Op,
    pub needs_grad: bool,
}

/// A dynamically built differentiation graph.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> TensorId {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Differentiable leaf. `backward` will produce a gradient for it.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf (weights during attribution, constants).
    pub fn constant(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    /// 0-dimensional constant.
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.constant(ndarray::arr0(v).into_dyn())
    }

    /// The value computed for `id` during the (eager) forward pass.
    pub fn value(&self, id: TensorId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a 0-dimensional tensor as a plain float.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let v = &self.nodes[id.0].value;
        debug_assert_eq!(v.len(), 1);
        v.iter().next().copied().unwrap_or(f64::NAN)
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Gradient of the last `backward` root with respect to `id`.
    /// Leaves the graph never touched get an explicit zero gradient.
    pub fn grad(&self, id: TensorId) -> ArrayD<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => ArrayD::zeros(IxDyn(self.nodes[id.0].value.shape())),
        }
    }

    /// Errors if any value in `id` is NaN or infinite.
    pub fn assert_finite(&self, id: TensorId, context: &str) -> Result<()> {
        if self.nodes[id.0].value.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "non-finite value in {context}"
            )))
        }
    }

    /// Reverse pass from a scalar output. Gradients accumulate by summation
    /// across every use of a tensor; previous gradients in this graph are
    /// cleared first.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let seed = ArrayD::from_elem(IxDyn(self.nodes[root.0].value.shape()), 1.0);
        self.nodes[root.0].grad = Some(seed);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            // Temporarily take the output gradient to appease the borrow
            // checker while we mutate parent slots.
            let g_out = self.nodes[i].grad.take().expect("checked above");
            self.apply_backward(i, &g_out)?;
            self.nodes[i].grad = Some(g_out);
        }
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, id: TensorId, delta: ArrayD<f64>) {
        let node = &mut self.nodes[id.0];
        if !node.needs_grad {
            return;
        }
        debug_assert_eq!(node.value.shape(), delta.shape());
        match &mut node.grad {
            Some(g) => *g += &delta,
            None => {
                // Keep every stored gradient in standard layout; backward
                // rules index gradients as flat slices. GEMM results can
                // arrive column-major.
                let delta = if delta.is_standard_layout() {
                    delta
                } else {
                    delta.as_standard_layout().to_owned()
                };
                node.grad = Some(delta);
            }
        }
    }
}
