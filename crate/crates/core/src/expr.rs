//! Immutable differentiable expression graphs.
//!
//! An [`Expr`] is a cheaply clonable handle to a node in a shared DAG. Graphs
//! are immutable after construction and safe to share across threads;
//! evaluation caches live per call, never on the nodes. Shapes are fixed at
//! construction time: binary arithmetic requires equal shapes or a scalar on
//! one side, and everything else is a shape error.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone)]
pub struct Expr(pub(crate) Arc<Node>);

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) kind: Kind,
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum UnaryOp {
    Neg,
    Tanh,
    /// max(slope * x, x) for slope in [0, 1); slope 0 is plain ReLU.
    LeakyRelu(f64),
    /// Derivative mask of LeakyRelu: 1 where x > 0, slope elsewhere.
    /// Piecewise constant, so it contributes nothing to second derivatives.
    LeakyReluGate(f64),
    /// Derivative mask of Clip: 1 strictly inside (lo, hi), 0 outside and at
    /// the boundary itself.
    ClipGate(f64, f64),
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) enum Kind {
    /// Data fed per evaluation (latents, samples).
    Input(String),
    /// Trainable quantity bound through the same environment.
    Param(String),
    Const(Tensor),
    Unary {
        op: UnaryOp,
        arg: Expr,
    },
    Binary {
        op: BinaryOp,
        lhs: Expr,
        rhs: Expr,
    },
    /// mat [r, c] times vec [c] -> [r]; with `transpose`, mat^T times vec [r] -> [c].
    MatVec {
        mat: Expr,
        vec: Expr,
        transpose: bool,
    },
    /// Outer product of two vectors [m], [n] -> [m, n].
    Outer {
        lhs: Expr,
        rhs: Expr,
    },
    /// Reduction to a rank-0 scalar.
    Sum {
        arg: Expr,
    },
    /// Extract flat element `index` as a scalar.
    Index {
        arg: Expr,
        index: usize,
    },
    Clip {
        arg: Expr,
        lo: f64,
        hi: f64,
    },
    /// Forward identity that blocks all derivative flow.
    StopGrad {
        arg: Expr,
    },
    /// The gradient of a scalar `source` with respect to `var`, kept as a
    /// first-class node. `expanded` is the equivalent primitive graph and is
    /// what evaluation and further differentiation operate on.
    GradOf {
        source: Expr,
        var: String,
        expanded: Expr,
    },
}

pub(crate) fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

fn fresh_id() -> u64 {
    next_id()
}

fn mk(shape: Vec<usize>, kind: Kind) -> Expr {
    Expr(Arc::new(Node {
        id: fresh_id(),
        shape,
        kind,
    }))
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Expr {
    pub fn input(name: impl Into<String>, shape: &[usize]) -> Expr {
        mk(shape.to_vec(), Kind::Input(name.into()))
    }

    pub fn param(name: impl Into<String>, shape: &[usize]) -> Expr {
        mk(shape.to_vec(), Kind::Param(name.into()))
    }

    pub fn constant(t: Tensor) -> Expr {
        mk(t.shape().to_vec(), Kind::Const(t))
    }

    pub fn scalar(v: f64) -> Expr {
        Expr::constant(Tensor::scalar(v).expect("finite scalar"))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub(crate) fn kind(&self) -> &Kind {
        &self.0.kind
    }

    /// For gradient nodes, the identifier the node differentiates with
    /// respect to.
    pub fn grad_var(&self) -> Option<&str> {
        match &self.0.kind {
            Kind::GradOf { var, .. } => Some(var),
            _ => None,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match &self.0.kind {
            Kind::Input(_) => "input",
            Kind::Param(_) => "param",
            Kind::Const(_) => "const",
            Kind::Unary { op, .. } => match op {
                UnaryOp::Neg => "neg",
                UnaryOp::Tanh => "tanh",
                UnaryOp::LeakyRelu(_) => "leaky_relu",
                UnaryOp::LeakyReluGate(_) => "leaky_relu_gate",
                UnaryOp::ClipGate(_, _) => "clip_gate",
            },
            Kind::Binary { op, .. } => match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            },
            Kind::MatVec { .. } => "matmul",
            Kind::Outer { .. } => "outer",
            Kind::Sum { .. } => "sum",
            Kind::Index { .. } => "index",
            Kind::Clip { .. } => "clip",
            Kind::StopGrad { .. } => "stop_gradient",
            Kind::GradOf { .. } => "gradient_of",
        }
    }

    fn binary(op: BinaryOp, lhs: &Expr, rhs: &Expr) -> Result<Expr> {
        let shape = if lhs.shape() == rhs.shape() {
            lhs.shape().to_vec()
        } else if lhs.is_scalar() {
            rhs.shape().to_vec()
        } else if rhs.is_scalar() {
            lhs.shape().to_vec()
        } else {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?} (only scalar-with-tensor broadcasts)",
                lhs.shape(),
                rhs.shape()
            )));
        };
        Ok(mk(
            shape,
            Kind::Binary {
                op,
                lhs: lhs.clone(),
                rhs: rhs.clone(),
            },
        ))
    }

    pub fn add(&self, rhs: &Expr) -> Result<Expr> {
        Expr::binary(BinaryOp::Add, self, rhs)
    }

    pub fn sub(&self, rhs: &Expr) -> Result<Expr> {
        Expr::binary(BinaryOp::Sub, self, rhs)
    }

    pub fn mul(&self, rhs: &Expr) -> Result<Expr> {
        Expr::binary(BinaryOp::Mul, self, rhs)
    }

    pub fn div(&self, rhs: &Expr) -> Result<Expr> {
        Expr::binary(BinaryOp::Div, self, rhs)
    }

    pub fn neg(&self) -> Expr {
        mk(
            self.shape().to_vec(),
            Kind::Unary {
                op: UnaryOp::Neg,
                arg: self.clone(),
            },
        )
    }

    pub fn tanh(&self) -> Expr {
        mk(
            self.shape().to_vec(),
            Kind::Unary {
                op: UnaryOp::Tanh,
                arg: self.clone(),
            },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Expr> {
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::InvalidConfig(format!(
                "leaky_relu slope must lie in [0, 1), got {slope}"
            )));
        }
        Ok(mk(
            self.shape().to_vec(),
            Kind::Unary {
                op: UnaryOp::LeakyRelu(slope),
                arg: self.clone(),
            },
        ))
    }

    pub fn relu(&self) -> Expr {
        self.leaky_relu(0.0).expect("slope 0 is valid")
    }

    pub(crate) fn leaky_relu_gate(&self, slope: f64) -> Expr {
        mk(
            self.shape().to_vec(),
            Kind::Unary {
                op: UnaryOp::LeakyReluGate(slope),
                arg: self.clone(),
            },
        )
    }

    pub(crate) fn clip_gate(&self, lo: f64, hi: f64) -> Expr {
        mk(
            self.shape().to_vec(),
            Kind::Unary {
                op: UnaryOp::ClipGate(lo, hi),
                arg: self.clone(),
            },
        )
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Result<Expr> {
        if !(lo < hi) {
            return Err(Error::InvalidConfig(format!("clip bounds [{lo}, {hi}]")));
        }
        Ok(mk(
            self.shape().to_vec(),
            Kind::Clip {
                arg: self.clone(),
                lo,
                hi,
            },
        ))
    }

    pub fn stop_grad(&self) -> Expr {
        mk(self.shape().to_vec(), Kind::StopGrad { arg: self.clone() })
    }

    /// mat [r, c] · vec [c] -> [r]
    pub fn matvec(&self, vec: &Expr) -> Result<Expr> {
        let (r, c) = self.mat_dims()?;
        if vec.shape() != [c] {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {:?} · {:?}",
                self.shape(),
                vec.shape()
            )));
        }
        Ok(mk(
            vec![r],
            Kind::MatVec {
                mat: self.clone(),
                vec: vec.clone(),
                transpose: false,
            },
        ))
    }

    /// matᵀ [c, r] · vec [r] -> [c] without materialising the transpose.
    pub fn matvec_t(&self, vec: &Expr) -> Result<Expr> {
        let (r, c) = self.mat_dims()?;
        if vec.shape() != [r] {
            return Err(Error::ShapeMismatch(format!(
                "matmul (transposed): {:?}ᵀ · {:?}",
                self.shape(),
                vec.shape()
            )));
        }
        Ok(mk(
            vec![c],
            Kind::MatVec {
                mat: self.clone(),
                vec: vec.clone(),
                transpose: true,
            },
        ))
    }

    fn mat_dims(&self) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::ShapeMismatch(format!(
                "matmul expects a rank-2 operand, got {other:?}"
            ))),
        }
    }

    pub fn outer(&self, rhs: &Expr) -> Result<Expr> {
        let (m, n) = match (self.shape(), rhs.shape()) {
            ([m], [n]) => (*m, *n),
            (a, b) => {
                return Err(Error::ShapeMismatch(format!(
                    "outer expects two vectors, got {a:?} and {b:?}"
                )))
            }
        };
        Ok(mk(
            vec![m, n],
            Kind::Outer {
                lhs: self.clone(),
                rhs: rhs.clone(),
            },
        ))
    }

    pub fn sum(&self) -> Expr {
        mk(vec![], Kind::Sum { arg: self.clone() })
    }

    pub fn index(&self, index: usize) -> Result<Expr> {
        if index >= self.numel() {
            return Err(Error::ShapeMismatch(format!(
                "index {index} out of range for {:?}",
                self.shape()
            )));
        }
        Ok(mk(
            vec![],
            Kind::Index {
                arg: self.clone(),
                index,
            },
        ))
    }

    pub fn dot(&self, rhs: &Expr) -> Result<Expr> {
        Ok(self.mul(rhs)?.sum())
    }

    pub fn sum_squares(&self) -> Expr {
        self.mul(self).expect("same shape").sum()
    }

    pub fn scale(&self, k: f64) -> Expr {
        self.mul(&Expr::scalar(k)).expect("scalar broadcasts")
    }

    /// Children in evaluation order.
    pub(crate) fn children(&self) -> Vec<Expr> {
        match &self.0.kind {
            Kind::Input(_) | Kind::Param(_) | Kind::Const(_) => vec![],
            Kind::Unary { arg, .. }
            | Kind::Sum { arg }
            | Kind::Index { arg, .. }
            | Kind::Clip { arg, .. }
            | Kind::StopGrad { arg } => vec![arg.clone()],
            Kind::Binary { lhs, rhs, .. } | Kind::Outer { lhs, rhs } => {
                vec![lhs.clone(), rhs.clone()]
            }
            Kind::MatVec { mat, vec, .. } => vec![mat.clone(), vec.clone()],
            Kind::GradOf { expanded, .. } => vec![expanded.clone()],
        }
    }
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}{:?}", self.kind_label(), self.0.id, self.0.shape)
    }
}

/// Post-order over the DAG reachable from `roots`: every node appears once,
/// after all of its children. Iterative, since nested derivative graphs get
/// deep enough to overflow a recursive walk.
pub(crate) fn topo_order(roots: &[Expr]) -> Vec<Expr> {
    let mut order = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut stack: Vec<(Expr, bool)> = roots.iter().rev().map(|r| (r.clone(), false)).collect();
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !seen.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        for child in node.children().into_iter().rev() {
            if !seen.contains(&child.id()) {
                stack.push((child, false));
            }
        }
    }
    order
}

/// Find the declared shape of `name`, looking through stop-gradients and
/// into both sides of gradient nodes.
pub(crate) fn find_leaf_shape(roots: &[Expr], name: &str) -> Option<Vec<usize>> {
    let mut stack: Vec<Expr> = roots.to_vec();
    let mut seen = std::collections::HashSet::new();
    while let Some(node) = stack.pop() {
        if !seen.insert(node.id()) {
            continue;
        }
        match node.kind() {
            Kind::Input(n) | Kind::Param(n) if n == name => {
                return Some(node.shape().to_vec());
            }
            Kind::GradOf {
                source, expanded, ..
            } => {
                stack.push(source.clone());
                stack.push(expanded.clone());
            }
            _ => stack.extend(node.children()),
        }
    }
    None
}
