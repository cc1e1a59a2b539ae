//! Reverse-mode differentiation as a graph transformation.
//!
//! [`gradient_expr`] turns a scalar expression into a new expression for its
//! gradient, built from the same primitive set. Because the result is an
//! ordinary graph, it can be differentiated again, which is how the
//! second-order terms that arise from back-propagating through a latent
//! update are obtained without hand-derived Hessians. Nesting is exercised
//! and validated to depth 2; stop-gradient blocks flow, and the clip
//! derivative is 1 strictly inside the interval and 0 at the boundary.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::eval::{evaluate_many, Environment};
use crate::expr::{find_leaf_shape, topo_order, BinaryOp, Expr, Kind, UnaryOp};
use crate::tensor::Tensor;

/// Shape an adjoint contribution for its target node. The only broadcast in
/// forward arithmetic is scalar-with-tensor, so a mismatched contribution is
/// either a full reduction (tensor flowing back into a scalar operand) or a
/// rank fix-up between the interchangeable scalar shapes ([] vs [1]).
fn reduce_for(target: &Expr, contribution: Expr) -> Expr {
    if contribution.shape() == target.shape() {
        return contribution;
    }
    debug_assert!(target.is_scalar());
    let rank0 = if contribution.shape().is_empty() {
        contribution
    } else {
        contribution.sum()
    };
    if target.shape().is_empty() {
        rank0
    } else {
        rank0
            .mul(&Expr::constant(Tensor::ones(target.shape())))
            .expect("scalar broadcasts")
    }
}

struct Accumulator {
    adjoints: HashMap<u64, Expr>,
}

impl Accumulator {
    fn push(&mut self, target: &Expr, contribution: Expr) -> Result<()> {
        let contribution = reduce_for(target, contribution);
        match self.adjoints.remove(&target.id()) {
            Some(prev) => {
                self.adjoints.insert(target.id(), prev.add(&contribution)?);
            }
            None => {
                self.adjoints.insert(target.id(), contribution);
            }
        }
        Ok(())
    }
}

/// Adjoint expressions of every reachable leaf, keyed by identifier. Leaves
/// only reachable through stop-gradient do not appear.
pub(crate) fn leaf_adjoints(root: &Expr) -> Result<HashMap<String, Expr>> {
    if !root.is_scalar() {
        return Err(Error::NonScalar(root.shape().to_vec()));
    }
    let order = topo_order(std::slice::from_ref(root));
    let mut acc = Accumulator {
        adjoints: HashMap::new(),
    };
    // Scalar roots may be rank-0 or a one-element vector; the seed adjoint
    // takes the root's own shape so downstream shapes line up.
    acc.adjoints
        .insert(root.id(), Expr::constant(Tensor::ones(root.shape())));
    let mut leaves: HashMap<String, Expr> = HashMap::new();

    for node in order.iter().rev() {
        let Some(adj) = acc.adjoints.get(&node.id()).cloned() else {
            continue;
        };
        match node.kind() {
            Kind::Input(name) | Kind::Param(name) => match leaves.remove(name.as_str()) {
                Some(prev) => {
                    leaves.insert(name.clone(), prev.add(&adj)?);
                }
                None => {
                    leaves.insert(name.clone(), adj);
                }
            },
            Kind::Const(_) => {}
            Kind::Unary { op, arg } => match op {
                UnaryOp::Neg => acc.push(arg, adj.neg())?,
                UnaryOp::Tanh => {
                    // d tanh = 1 - tanh², reusing the forward node.
                    let one_minus = Expr::scalar(1.0).sub(&node.mul(node)?)?;
                    acc.push(arg, adj.mul(&one_minus)?)?;
                }
                UnaryOp::LeakyRelu(slope) => {
                    acc.push(arg, adj.mul(&arg.leaky_relu_gate(*slope))?)?;
                }
                // The gates are piecewise constant: zero derivative.
                UnaryOp::LeakyReluGate(_) | UnaryOp::ClipGate(_, _) => {}
            },
            Kind::Binary { op, lhs, rhs } => match op {
                BinaryOp::Add => {
                    acc.push(lhs, adj.clone())?;
                    acc.push(rhs, adj)?;
                }
                BinaryOp::Sub => {
                    acc.push(lhs, adj.clone())?;
                    acc.push(rhs, adj.neg())?;
                }
                BinaryOp::Mul => {
                    acc.push(lhs, adj.mul(rhs)?)?;
                    acc.push(rhs, adj.mul(lhs)?)?;
                }
                BinaryOp::Div => {
                    acc.push(lhs, adj.div(rhs)?)?;
                    // d(l/r)/dr = -(l/r)/r, reusing the forward quotient node.
                    acc.push(rhs, adj.mul(node)?.div(rhs)?.neg())?;
                }
            },
            Kind::MatVec {
                mat,
                vec,
                transpose,
            } => {
                if *transpose {
                    // y = mᵀ v : dm = v ⊗ adj, dv = m · adj
                    acc.push(mat, vec.outer(&adj)?)?;
                    acc.push(vec, mat.matvec(&adj)?)?;
                } else {
                    // y = m v : dm = adj ⊗ v, dv = mᵀ · adj
                    acc.push(mat, adj.outer(vec)?)?;
                    acc.push(vec, mat.matvec_t(&adj)?)?;
                }
            }
            Kind::Outer { lhs, rhs } => {
                acc.push(lhs, adj.matvec(rhs)?)?;
                acc.push(rhs, adj.matvec_t(lhs)?)?;
            }
            Kind::Sum { arg } => {
                let ones = Expr::constant(Tensor::ones(arg.shape()));
                acc.push(arg, adj.mul(&ones)?)?;
            }
            Kind::Index { arg, index } => {
                let basis = Expr::constant(Tensor::one_hot(arg.shape(), *index));
                acc.push(arg, adj.mul(&basis)?)?;
            }
            Kind::Clip { arg, lo, hi } => {
                acc.push(arg, adj.mul(&arg.clip_gate(*lo, *hi))?)?;
            }
            Kind::StopGrad { .. } => {}
            Kind::GradOf { expanded, .. } => {
                acc.push(expanded, adj)?;
            }
        }
    }
    Ok(leaves)
}

fn adjoint_or_zeros(root: &Expr, leaves: &HashMap<String, Expr>, var: &str) -> Result<Expr> {
    if let Some(adj) = leaves.get(var) {
        return Ok(adj.clone());
    }
    // Present but unreachable for derivatives (e.g. behind stop-gradient):
    // the derivative is exactly zero with the leaf's declared shape.
    match find_leaf_shape(std::slice::from_ref(root), var) {
        Some(shape) => Ok(Expr::constant(Tensor::zeros(&shape))),
        None => Err(Error::UnknownVariable(var.to_string())),
    }
}

/// The gradient of a scalar expression with respect to `var`, as a
/// differentiable expression. The returned node evaluates to ∂expr/∂var and
/// can itself be differentiated with respect to any identifier.
pub fn gradient_expr(expr: &Expr, var: &str) -> Result<Expr> {
    let leaves = leaf_adjoints(expr)?;
    let expanded = adjoint_or_zeros(expr, &leaves, var)?;
    Ok(Expr::grad_of(expr.clone(), var.to_string(), expanded))
}

impl Expr {
    pub(crate) fn grad_of(source: Expr, var: String, expanded: Expr) -> Expr {
        let shape = expanded.shape().to_vec();
        Expr(std::sync::Arc::new(crate::expr::Node {
            id: crate::expr::next_id(),
            shape,
            kind: Kind::GradOf {
                source,
                var,
                expanded,
            },
        }))
    }
}

/// Adjoint expressions for several variables from one reverse sweep.
/// Variables reachable only through stop-gradient come back as zeros.
pub fn gradient_exprs(expr: &Expr, vars: &[&str]) -> Result<Vec<Expr>> {
    let leaves = leaf_adjoints(expr)?;
    vars.iter()
        .map(|var| adjoint_or_zeros(expr, &leaves, var))
        .collect()
}

/// Exact reverse-mode derivatives of a scalar expression with respect to
/// each named variable, evaluated against `env`. One reverse sweep serves
/// all variables; evaluation shares a single cache.
pub fn gradient(expr: &Expr, vars: &[&str], env: &Environment) -> Result<Vec<Tensor>> {
    let leaves = leaf_adjoints(expr)?;
    let mut roots = Vec::with_capacity(vars.len());
    for var in vars {
        if env.get(var).is_none() {
            return Err(Error::Unbound(var.to_string()));
        }
        roots.push(adjoint_or_zeros(expr, &leaves, var)?);
    }
    evaluate_many(&roots, env)
}

/// Replace named leaves by whole expressions, preserving sharing.
///
/// A gradient node is treated as the function its expansion computes:
/// substitution applies inside the expansion, so replacing `z` in an
/// expression containing ∂f/∂z yields the gradient function evaluated at
/// the new argument, (∂f/∂z)∘(replacement) — it does not re-derive a total
/// derivative through the replacement. This is the meaning every caller
/// here needs (iterated latent steps, unrolled parameter updates).
pub fn substitute(expr: &Expr, map: &HashMap<String, Expr>) -> Result<Expr> {
    let mut rewritten: HashMap<u64, Expr> = HashMap::new();
    subst_walk(expr, map, &mut rewritten)
}

fn subst_walk(
    node: &Expr,
    map: &HashMap<String, Expr>,
    rewritten: &mut HashMap<u64, Expr>,
) -> Result<Expr> {
    if let Some(done) = rewritten.get(&node.id()) {
        return Ok(done.clone());
    }
    let out = match node.kind() {
        Kind::Input(name) | Kind::Param(name) => {
            if let Some(replacement) = map.get(name.as_str()) {
                if replacement.shape() != node.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "substitution for `{name}`: {:?} vs {:?}",
                        node.shape(),
                        replacement.shape()
                    )));
                }
                replacement.clone()
            } else {
                node.clone()
            }
        }
        Kind::Const(_) => node.clone(),
        Kind::Unary { op, arg } => {
            let a = subst_walk(arg, map, rewritten)?;
            match op {
                UnaryOp::Neg => a.neg(),
                UnaryOp::Tanh => a.tanh(),
                UnaryOp::LeakyRelu(s) => a.leaky_relu(*s)?,
                UnaryOp::LeakyReluGate(s) => a.leaky_relu_gate(*s),
                UnaryOp::ClipGate(lo, hi) => a.clip_gate(*lo, *hi),
            }
        }
        Kind::Binary { op, lhs, rhs } => {
            let l = subst_walk(lhs, map, rewritten)?;
            let r = subst_walk(rhs, map, rewritten)?;
            match op {
                BinaryOp::Add => l.add(&r)?,
                BinaryOp::Sub => l.sub(&r)?,
                BinaryOp::Mul => l.mul(&r)?,
                BinaryOp::Div => l.div(&r)?,
            }
        }
        Kind::MatVec {
            mat,
            vec,
            transpose,
        } => {
            let m = subst_walk(mat, map, rewritten)?;
            let v = subst_walk(vec, map, rewritten)?;
            if *transpose {
                m.matvec_t(&v)?
            } else {
                m.matvec(&v)?
            }
        }
        Kind::Outer { lhs, rhs } => {
            let l = subst_walk(lhs, map, rewritten)?;
            let r = subst_walk(rhs, map, rewritten)?;
            l.outer(&r)?
        }
        Kind::Sum { arg } => subst_walk(arg, map, rewritten)?.sum(),
        Kind::Index { arg, index } => subst_walk(arg, map, rewritten)?.index(*index)?,
        Kind::Clip { arg, lo, hi } => subst_walk(arg, map, rewritten)?.clip(*lo, *hi)?,
        Kind::StopGrad { arg } => subst_walk(arg, map, rewritten)?.stop_grad(),
        Kind::GradOf { expanded, .. } => subst_walk(expanded, map, rewritten)?,
    };
    rewritten.insert(node.id(), out.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;

    fn scalar_env(pairs: &[(&str, f64)]) -> Environment {
        let mut env = Environment::new();
        for (name, v) in pairs {
            env.bind(*name, Tensor::scalar(*v).unwrap());
        }
        env
    }

    #[test]
    fn square_rule() {
        let x = Expr::input("x", &[]);
        let e = x.mul(&x).unwrap();
        let g = gradient(&e, &["x"], &scalar_env(&[("x", 3.0)])).unwrap();
        assert_eq!(g[0].item().unwrap(), 6.0);
    }

    #[test]
    fn bilinear_rule() {
        let d = Expr::param("theta_d", &[]);
        let gp = Expr::param("theta_g", &[]);
        let e = d.mul(&gp).unwrap();
        let g = gradient(
            &e,
            &["theta_g"],
            &scalar_env(&[("theta_d", 1.0), ("theta_g", 5.0)]),
        )
        .unwrap();
        assert_eq!(g[0].item().unwrap(), 1.0);
    }

    #[test]
    fn stop_gradient_blocks_one_factor() {
        let x = Expr::input("x", &[]);
        let e = x.stop_grad().mul(&x).unwrap();
        let g = gradient(&e, &["x"], &scalar_env(&[("x", 5.0)])).unwrap();
        assert_eq!(g[0].item().unwrap(), 5.0);
    }

    #[test]
    fn stop_gradient_only_leaf_gives_zeros() {
        let x = Expr::input("x", &[2]);
        let e = x.stop_grad().sum();
        let mut env = Environment::new();
        env.bind("x", Tensor::vector(vec![1.0, 2.0]).unwrap());
        let g = gradient(&e, &["x"], &env).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn unknown_variable_is_an_error() {
        let x = Expr::input("x", &[]);
        let e = x.mul(&x).unwrap();
        assert!(matches!(
            gradient_expr(&e, "nope"),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let x = Expr::input("x", &[3]);
        assert!(matches!(gradient_expr(&x, "x"), Err(Error::NonScalar(_))));
    }

    #[test]
    fn second_derivative_of_cube() {
        let x = Expr::input("x", &[]);
        let cube = x.mul(&x).unwrap().mul(&x).unwrap();
        let first = gradient_expr(&cube, "x").unwrap();
        let env = scalar_env(&[("x", 2.0)]);
        assert_eq!(evaluate(&first, &env).unwrap().item().unwrap(), 12.0);
        let second = gradient(&first, &["x"], &env).unwrap();
        assert_eq!(second[0].item().unwrap(), 12.0); // 6x at x = 2
    }

    #[test]
    fn mixed_partial_of_trilinear() {
        // f = θ_D · θ_G · z ; ∂f/∂z = θ_D θ_G ; ∂²f/∂z∂θ_D = θ_G
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[]);
        let f = d.mul(&g).unwrap().mul(&z).unwrap();
        let df_dz = gradient_expr(&f, "z").unwrap();
        let env = scalar_env(&[("theta_d", 7.0), ("theta_g", 2.0), ("z", 0.3)]);
        assert_eq!(evaluate(&df_dz, &env).unwrap().item().unwrap(), 14.0);
        let mixed = gradient(&df_dz, &["theta_d"], &env).unwrap();
        assert_eq!(mixed[0].item().unwrap(), 2.0);
    }

    #[test]
    fn clip_derivative_convention() {
        let x = Expr::input("x", &[]);
        let e = x.clip(-1.0, 1.0).unwrap();
        for (v, want) in [(0.5, 1.0), (1.0, 0.0), (-1.0, 0.0), (1.5, 0.0), (-3.0, 0.0)] {
            let g = gradient(&e, &["x"], &scalar_env(&[("x", v)])).unwrap();
            assert_eq!(g[0].item().unwrap(), want, "at x = {v}");
        }
    }

    #[test]
    fn matvec_gradients_match_fd() {
        let w = Expr::param("w", &[3, 2]);
        let v = Expr::input("v", &[2]);
        let y = w.matvec(&v).unwrap().tanh().sum_squares();
        let wt = Tensor::matrix(3, 2, vec![0.3, -0.7, 0.1, 0.9, -0.4, 0.2]).unwrap();
        let vt = Tensor::vector(vec![0.5, -0.25]).unwrap();
        let mut env = Environment::new();
        env.bind("w", wt.clone());
        env.bind("v", vt.clone());
        let got = gradient(&y, &["w", "v"], &env).unwrap();

        let fd_w = crate::fd::finite_difference(
            &mut |p: &Tensor| {
                let mut e = Environment::new();
                e.bind("w", p.clone());
                e.bind("v", vt.clone());
                evaluate(&y, &e)?.item()
            },
            &wt,
            1e-6,
        )
        .unwrap();
        assert!(crate::fd::max_rel_err(&got[0], &fd_w) < 1e-8);

        let fd_v = crate::fd::finite_difference(
            &mut |p: &Tensor| {
                let mut e = Environment::new();
                e.bind("w", wt.clone());
                e.bind("v", p.clone());
                evaluate(&y, &e)?.item()
            },
            &vt,
            1e-6,
        )
        .unwrap();
        assert!(crate::fd::max_rel_err(&got[1], &fd_v) < 1e-8);
    }

    #[test]
    fn stop_gradient_product_property() {
        // gradient(stop_gradient(e) * v, v) == value(e) for a non-trivial e
        let x = Expr::input("x", &[]);
        let v = Expr::input("v", &[]);
        let e = x.tanh().mul(&x).unwrap();
        let expr = e.stop_grad().mul(&v).unwrap();
        let env = scalar_env(&[("x", 0.8), ("v", -2.0)]);
        let g = gradient(&expr, &["v"], &env).unwrap();
        let want = evaluate(&e, &env).unwrap();
        assert_eq!(g[0].item().unwrap(), want.item().unwrap());
    }

    #[test]
    fn substitution_rewires_leaves() {
        // f(z) = z², substitute z -> z + c, check value and gradient.
        let z = Expr::input("z", &[]);
        let f = z.mul(&z).unwrap();
        let c = Expr::input("c", &[]);
        let mut map = HashMap::new();
        map.insert("z".to_string(), z.add(&c).unwrap());
        let g = substitute(&f, &map).unwrap();
        let env = scalar_env(&[("z", 2.0), ("c", 3.0)]);
        assert_eq!(evaluate(&g, &env).unwrap().item().unwrap(), 25.0);
        let dz = gradient(&g, &["z"], &env).unwrap();
        assert_eq!(dz[0].item().unwrap(), 10.0);
    }

    #[test]
    fn substitution_re_derives_gradient_nodes() {
        // h = d(z³)/dz = 3z²; substituting z -> 2z must give 12z².
        let z = Expr::input("z", &[]);
        let cube = z.mul(&z).unwrap().mul(&z).unwrap();
        let h = gradient_expr(&cube, "z").unwrap();
        let mut map = HashMap::new();
        map.insert("z".to_string(), z.scale(2.0));
        let hs = substitute(&h, &map).unwrap();
        let env = scalar_env(&[("z", 1.5)]);
        // d((2z)³)/d(2z) = 3(2z)² = 27 at z = 1.5
        assert!((evaluate(&hs, &env).unwrap().item().unwrap() - 27.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_requires_bound_vars() {
        let x = Expr::input("x", &[]);
        let e = x.mul(&x).unwrap();
        assert!(matches!(
            gradient(&e, &["x"], &Environment::new()),
            Err(Error::Unbound(_))
        ));
    }
}
