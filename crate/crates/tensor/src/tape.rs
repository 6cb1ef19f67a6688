use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use crate::backward::propagate;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub pad_left: usize,
}

/// Recorded primitive with whatever forward state its vector-Jacobian
/// product needs.
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Matmul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        cols: Vec<f64>,
        dims: ConvDims,
    },
    SumAll(Var),
    SumAxis {
        a: Var,
        axis: usize,
    },
    MeanAxis {
        a: Var,
        axis: usize,
    },
    MaxAxis {
        a: Var,
        argmax: Vec<usize>,
    },
    Softmax(Var),
    LogSumExp(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    Permute {
        a: Var,
        perm: Vec<usize>,
    },
    Reshape(Var),
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![*a, *b],
            Neg(a) | AddScalar(a) | MulScalar(a, _) | Exp(a) | Log(a) | Sqrt(a) | Relu(a)
            | Sigmoid(a) | Tanh(a) | SumAll(a) | Softmax(a) | LogSumExp(a) | Reshape(a) => {
                vec![*a]
            }
            Matmul { a, b, .. } => vec![*a, *b],
            Conv1d { x, w, bias, .. } => {
                let mut v = vec![*x, *w];
                v.extend(bias.iter().copied());
                v
            }
            SumAxis { a, .. } | MeanAxis { a, .. } | MaxAxis { a, .. } => vec![*a],
            LayerNorm { x, gamma, beta, .. } | BatchNorm { x, gamma, beta, .. } => {
                vec![*x, *gamma, *beta]
            }
            Concat { parts, .. } => parts.clone(),
            Slice { a, .. } | Permute { a, .. } => vec![*a],
        }
    }
}

pub(crate) struct Node {
    pub value: Arc<Tensor>,
    pub requires_grad: bool,
    pub op: Op,
}

/// Define-by-run record of one forward pass.
///
/// Nodes are appended in execution order, so inputs always precede the
/// operations that consume them. A tape supports a single backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Gradients of a scalar loss with respect to every leaf that requires grad.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }

    pub fn remove(&mut self, v: Var) -> Option<Tensor> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records a leaf. Gradients are reported for leaves created with
    /// `requires_grad`.
    pub fn leaf(&self, value: impl Into<Arc<Tensor>>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: value.into(),
            requires_grad,
            op: Op::Leaf,
        });
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: impl Into<Arc<Tensor>>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&self, value: impl Into<Arc<Tensor>>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> Arc<Tensor> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Appends an operation result. Operations none of whose inputs need a
    /// gradient are stored as constants and drop their saved state.
    pub(crate) fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().any(|i| nodes[i.0].requires_grad);
        nodes.push(Node {
            value: Arc::new(value),
            requires_grad,
            op: if requires_grad { op } else { Op::Leaf },
        });
        Var(nodes.len() - 1)
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape: a second call
    /// returns [`TensorError::TapeConsumed`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        self.consumed.set(true);

        let mut buf: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
        buf.resize_with(nodes.len(), || None);
        if loss_node.requires_grad {
            buf[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = buf[id].take() else { continue };
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                buf[id] = Some(g);
                continue;
            }
            for (input, contrib) in propagate(&nodes, node, &g) {
                if !nodes[input.0].requires_grad {
                    continue;
                }
                match &mut buf[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contrib),
                }
            }
        }

        let mut grads = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let shape = node.value.shape().to_vec();
                let t = match buf[id].take() {
                    Some(g) => Tensor::new(shape, g).expect("gradient shape"),
                    None => Tensor::zeros(&shape),
                };
                grads.insert(Var(id), t);
            }
        }
        Ok(grads.into())
    }
}

impl From<HashMap<Var, Tensor>> for Gradients {
    fn from(grads: HashMap<Var, Tensor>) -> Self {
        Self { grads }
    }
}
