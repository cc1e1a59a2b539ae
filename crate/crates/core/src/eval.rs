//! Forward evaluation of expression graphs.
//!
//! [`evaluate_many`] walks the DAG once with a per-call cache. For hot loops
//! (one training graph evaluated thousands of times with rebound inputs),
//! [`Session`] precompiles the topological order and slot indices so a run is
//! a flat sweep over a vector.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{topo_order, BinaryOp, Expr, Kind, UnaryOp};
use crate::tensor::Tensor;

/// Bindings from input/parameter identifiers to tensors.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    map: HashMap<String, Tensor>,
}

impl Environment {
    pub fn new() -> Self {
        Environment::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Tensor) -> &mut Self {
        self.map.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    fn lookup(&self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = self
            .map
            .get(name)
            .ok_or_else(|| Error::Unbound(name.to_string()))?;
        if t.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "`{name}` declared {:?} but bound {:?}",
                shape,
                t.shape()
            )));
        }
        Ok(t.clone())
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        a.zip(b, f).expect("shapes equal")
    } else if a.is_scalar() {
        let av = a.data()[0];
        b.map(|bv| f(av, bv))
    } else {
        let bv = b.data()[0];
        a.map(|av| f(av, bv))
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn eval_node(
    node: &Expr,
    env: &Environment,
    mut value_of: impl FnMut(&Expr) -> Tensor,
) -> Result<Tensor> {
    let out = match node.kind() {
        Kind::Input(name) | Kind::Param(name) => env.lookup(name, node.shape())?,
        Kind::Const(t) => t.clone(),
        Kind::Unary { op, arg } => {
            let a = value_of(arg);
            match op {
                UnaryOp::Neg => a.map(|v| -v),
                UnaryOp::Tanh => a.map(f64::tanh),
                UnaryOp::LeakyRelu(s) => a.map(|v| leaky(v, *s)),
                UnaryOp::LeakyReluGate(s) => a.map(|v| if v > 0.0 { 1.0 } else { *s }),
                UnaryOp::ClipGate(lo, hi) => a.map(|v| if *lo < v && v < *hi { 1.0 } else { 0.0 }),
            }
        }
        Kind::Binary { op, lhs, rhs } => {
            let a = value_of(lhs);
            let b = value_of(rhs);
            match op {
                BinaryOp::Add => broadcast_zip(&a, &b, |x, y| x + y),
                BinaryOp::Sub => broadcast_zip(&a, &b, |x, y| x - y),
                BinaryOp::Mul => broadcast_zip(&a, &b, |x, y| x * y),
                BinaryOp::Div => broadcast_zip(&a, &b, |x, y| x / y),
            }
        }
        Kind::MatVec {
            mat,
            vec,
            transpose,
        } => {
            let m = value_of(mat);
            let v = value_of(vec);
            let (rows, cols) = (m.shape()[0], m.shape()[1]);
            let md = m.data();
            let vd = v.data();
            if *transpose {
                let mut out = vec![0.0; cols];
                for r in 0..rows {
                    let vr = vd[r];
                    if vr == 0.0 {
                        continue;
                    }
                    let row = &md[r * cols..(r + 1) * cols];
                    for (o, &mrc) in out.iter_mut().zip(row) {
                        *o += mrc * vr;
                    }
                }
                Tensor::from_raw(vec![cols], out)
            } else {
                let mut out = vec![0.0; rows];
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &md[r * cols..(r + 1) * cols];
                    *o = row.iter().zip(vd).map(|(a, b)| a * b).sum();
                }
                Tensor::from_raw(vec![rows], out)
            }
        }
        Kind::Outer { lhs, rhs } => {
            let a = value_of(lhs);
            let b = value_of(rhs);
            let (m, n) = (a.len(), b.len());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = a.data()[i] * b.data()[j];
                }
            }
            Tensor::from_raw(vec![m, n], out)
        }
        Kind::Sum { arg } => {
            let a = value_of(arg);
            Tensor::from_raw(vec![], vec![a.sum()])
        }
        Kind::Index { arg, index } => {
            let a = value_of(arg);
            Tensor::from_raw(vec![], vec![a.data()[*index]])
        }
        Kind::Clip { arg, lo, hi } => {
            let a = value_of(arg);
            a.map(|v| v.clamp(*lo, *hi))
        }
        Kind::StopGrad { arg } => value_of(arg),
        Kind::GradOf { expanded, .. } => value_of(expanded),
    };
    Ok(out)
}

fn check_finite(node: &Expr, value: &Tensor, roots: &[Expr]) -> Result<()> {
    if value.all_finite() {
        return Ok(());
    }
    Err(Error::NonFinite(format!(
        "node {:?} (path: {})",
        node,
        path_to(roots, node.id()).join(" -> ")
    )))
}

/// Labels from a root down to the offending node, for error reports.
fn path_to(roots: &[Expr], target: u64) -> Vec<String> {
    fn dfs(
        node: &Expr,
        target: u64,
        path: &mut Vec<String>,
        seen: &mut std::collections::HashSet<u64>,
    ) -> bool {
        if !seen.insert(node.id()) {
            return false;
        }
        path.push(format!("{:?}", node));
        if node.id() == target {
            return true;
        }
        for child in node.children() {
            if dfs(&child, target, path, seen) {
                return true;
            }
        }
        path.pop();
        false
    }
    let mut seen = std::collections::HashSet::new();
    for root in roots {
        let mut path = Vec::new();
        if dfs(root, target, &mut path, &mut seen) {
            return path;
        }
    }
    vec!["<unreachable>".into()]
}

/// Evaluate several roots against one environment, sharing the value cache.
pub fn evaluate_many(roots: &[Expr], env: &Environment) -> Result<Vec<Tensor>> {
    let order = topo_order(roots);
    let mut values: HashMap<u64, Tensor> = HashMap::with_capacity(order.len());
    for node in &order {
        let value = eval_node(node, env, |child| {
            values.get(&child.id()).expect("topological order").clone()
        })?;
        check_finite(node, &value, roots)?;
        values.insert(node.id(), value);
    }
    Ok(roots
        .iter()
        .map(|r| values.get(&r.id()).expect("root evaluated").clone())
        .collect())
}

/// Deterministic single-root evaluation.
pub fn evaluate(expr: &Expr, env: &Environment) -> Result<Tensor> {
    Ok(evaluate_many(std::slice::from_ref(expr), env)?
        .pop()
        .expect("one root"))
}

/// A pre-compiled multi-root evaluator: the topological order and operand
/// slots are resolved once, so repeated runs avoid hashing entirely except
/// for leaf lookups in the environment.
pub struct Session {
    order: Vec<Expr>,
    /// Operand slot indices per node, parallel to `order`.
    operands: Vec<Vec<usize>>,
    root_slots: Vec<usize>,
    roots: Vec<Expr>,
}

impl Session {
    pub fn compile(roots: &[Expr]) -> Session {
        let order = topo_order(roots);
        let slot_of: HashMap<u64, usize> =
            order.iter().enumerate().map(|(i, e)| (e.id(), i)).collect();
        let operands = order
            .iter()
            .map(|node| {
                node.children()
                    .iter()
                    .map(|c| slot_of[&c.id()])
                    .collect::<Vec<_>>()
            })
            .collect();
        let root_slots = roots.iter().map(|r| slot_of[&r.id()]).collect();
        Session {
            order,
            operands,
            root_slots,
            roots: roots.to_vec(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    pub fn run(&self, env: &Environment) -> Result<Vec<Tensor>> {
        let mut values: Vec<Option<Tensor>> = vec![None; self.order.len()];
        for (i, node) in self.order.iter().enumerate() {
            let slots = &self.operands[i];
            let mut k = 0;
            let value = eval_node(node, env, |_| {
                let v = values[slots[k]]
                    .as_ref()
                    .expect("topological order")
                    .clone();
                k += 1;
                v
            });
            // `eval_node` consumes children positionally; `children()` order
            // matches the closure call order by construction.
            let value = value?;
            check_finite(node, &value, &self.roots)?;
            values[i] = Some(value);
        }
        Ok(self
            .root_slots
            .iter()
            .map(|&s| values[s].clone().expect("root evaluated"))
            .collect())
    }
}
