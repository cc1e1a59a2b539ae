//! The latent refinement step.
//!
//! Given the critic's gradient g = ∂f/∂z, the update is either plain
//! gradient ascent Δz = α·g or a damped empirical-Fisher natural-gradient
//! step Δz = α/(β + ‖g‖²)·g, the closed form of solving (g·gᵀ + βI)Δz = αg.
//! Only a leading portion c of the coordinates is optimised, the regulariser
//! R_z = w_r·‖Δz‖² is taken from the pre-clip step, and the refined latent
//! is clipped back into [-1, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Environment;
use crate::expr::{find_leaf_shape, Expr};
use crate::grad::{gradient, gradient_expr, substitute};
use crate::linalg::{lu_solve, Matrix};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentMethod {
    Gd,
    Ngd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentOptConfig {
    pub method: LatentMethod,
    /// Step size α. Zero is allowed and disables the update, which is the
    /// vanilla-GAN reduction the trainer's equivalence check relies on.
    pub alpha: f64,
    /// Tikhonov damping β (natural-gradient method only).
    pub beta: f64,
    /// Weight of the step-norm regulariser.
    pub w_r: f64,
    /// Optimised portion of the latent, in [0, 1].
    pub c: f64,
    /// Refinement steps during training.
    pub steps: u32,
    /// Refinement steps during evaluation.
    pub eval_steps: u32,
}

impl LatentOptConfig {
    /// Best grid values for the small-model setting: α=0.9, β=0.1,
    /// w_r=0.1, c=0.8.
    pub fn small_profile() -> Self {
        LatentOptConfig {
            method: LatentMethod::Ngd,
            alpha: 0.9,
            beta: 0.1,
            w_r: 0.1,
            c: 0.8,
            steps: 1,
            eval_steps: 0,
        }
    }

    /// Best grid values for the large-model setting: α=0.9, β=5.0,
    /// w_r=300.0, c=0.5.
    pub fn large_profile() -> Self {
        LatentOptConfig {
            method: LatentMethod::Ngd,
            alpha: 0.9,
            beta: 5.0,
            w_r: 300.0,
            c: 0.5,
            steps: 1,
            eval_steps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "latent step size must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if self.method == LatentMethod::Ngd && !(self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "damping factor must be positive for the natural-gradient method, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::InvalidConfig(format!(
                "optimised portion must lie in [0, 1], got {}",
                self.c
            )));
        }
        if self.w_r < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "regulariser weight must be non-negative, got {}",
                self.w_r
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Plain gradient step Δz = α·g.
pub fn gd_step(g: &Tensor, alpha: f64) -> Result<Tensor> {
    if !g.all_finite() || !alpha.is_finite() {
        return Err(Error::NonFinite("gd_step input".into()));
    }
    Ok(g.scale(alpha))
}

/// Closed-form damped natural-gradient step Δz = α/(β + ‖g‖²)·g.
/// No matrix inversion is involved; the update stays colinear with g and
/// its norm is bounded by α/(2√β).
pub fn ngd_step(g: &Tensor, alpha: f64, beta: f64) -> Result<Tensor> {
    if !g.all_finite() || !alpha.is_finite() {
        return Err(Error::NonFinite("ngd_step input".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "damping factor must be positive, got {beta}"
        )));
    }
    let sq = g.data().iter().map(|v| v * v).sum::<f64>();
    Ok(g.scale(alpha / (beta + sq)))
}

/// Validation oracle for [`ngd_step`]: assemble the damped empirical Fisher
/// F' = g·gᵀ + βI explicitly and solve F'·Δz = α·g with a dense LU solve.
pub fn ngd_step_oracle(g: &Tensor, alpha: f64, beta: f64) -> Result<Tensor> {
    let n = g.len();
    if n > 512 {
        return Err(Error::InvalidConfig(format!(
            "explicit dense solve capped at dimension 512, got {n}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "damping factor must be positive, got {beta}"
        )));
    }
    let gd = g.data();
    let mut fisher = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            fisher.set(i, j, gd[i] * gd[j]);
        }
        fisher.set(i, i, fisher.get(i, i) + beta);
    }
    let rhs: Vec<f64> = gd.iter().map(|v| alpha * v).collect();
    // β > 0 makes the system positive definite; a singular pivot here is a bug.
    let solved = lu_solve(fisher, &rhs).expect("damped Fisher is positive definite");
    Tensor::new(g.shape().to_vec(), solved)
}

/// Number of leading coordinates kept by the mask: ⌈c·dim⌉.
pub fn masked_len(c: f64, dim: usize) -> usize {
    // Nudge below the product so representation noise in c·dim cannot bump
    // the ceiling up a slot.
    (((c * dim as f64) - 1e-9).ceil().max(0.0) as usize).min(dim)
}

/// Zero all but the leading ⌈c·dim⌉ components of an update.
pub fn apply_mask(dz: &Tensor, c: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidConfig(format!(
            "optimised portion must lie in [0, 1], got {c}"
        )));
    }
    let keep = masked_len(c, dz.len());
    let mut out = dz.clone();
    for v in &mut out.data_mut()[keep..] {
        *v = 0.0;
    }
    Ok(out)
}

/// The 0/1 mask as a tensor, for use inside expressions.
pub fn mask_tensor(c: f64, dim: usize) -> Tensor {
    let keep = masked_len(c, dim);
    let mut data = vec![0.0; dim];
    for v in &mut data[..keep] {
        *v = 1.0;
    }
    Tensor::new(vec![dim], data).expect("finite mask")
}

/// R_z = w_r·‖Δz‖², as a differentiable scalar.
pub fn latent_regulariser(dz: &Expr, w_r: f64) -> Result<Expr> {
    if w_r < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "regulariser weight must be non-negative, got {w_r}"
        )));
    }
    Ok(dz.sum_squares().scale(w_r))
}

/// The refinement chain as differentiable expressions: z′ together with the
/// step that produced it, so parameter gradients can flow back through the
/// latent update.
#[derive(Debug, Clone)]
pub struct LatentStepResult {
    /// z′ after all steps, clipped into [-1, 1].
    pub z_refined: Expr,
    /// Masked, pre-clip update summed over steps; masked-out components are
    /// exactly zero. This is what the regulariser sees.
    pub delta_z: Expr,
    /// ∂f/∂z at the starting point (first step's gradient).
    pub grad: Expr,
    /// First step's curvature estimate 1/(β + ‖g‖²); absent for plain GD.
    pub curvature: Option<Expr>,
}

/// Build the refinement chain over an arbitrary scalar critic expression in
/// the leaf named `z_name`. The caller chooses the critic's gating (for the
/// ablations the critic passed here has the blocked parameter group wrapped
/// in stop-gradient), so everything downstream differentiates through
/// exactly the intended paths.
pub fn refine_latent_expr(
    critic: &Expr,
    z_name: &str,
    cfg: &LatentOptConfig,
    steps: u32,
) -> Result<LatentStepResult> {
    cfg.validate()?;
    let dim = match find_leaf_shape(std::slice::from_ref(critic), z_name) {
        Some(shape) if shape.len() == 1 => shape[0],
        Some(shape) => {
            return Err(Error::ShapeMismatch(format!(
                "latent `{z_name}` must be a vector, found shape {shape:?}"
            )))
        }
        None => return Err(Error::UnknownVariable(z_name.to_string())),
    };
    let mask = Expr::constant(mask_tensor(cfg.c, dim));
    let grad_fn = gradient_expr(critic, z_name)?;

    let z_leaf = Expr::input(z_name, &[dim]);
    let mut z_cur = z_leaf;
    let mut delta_total: Option<Expr> = None;
    let mut first_grad: Option<Expr> = None;
    let mut first_curvature: Option<Expr> = None;

    for step in 0..steps.max(1) {
        let g = if step == 0 {
            grad_fn.clone()
        } else {
            let mut map = std::collections::HashMap::new();
            map.insert(z_name.to_string(), z_cur.clone());
            substitute(&grad_fn, &map)?
        };
        let (dz_raw, curvature) = step_expr(&g, cfg)?;
        let dz_masked = dz_raw.mul(&mask)?;
        z_cur = z_cur.add(&dz_masked)?.clip(-1.0, 1.0)?;
        delta_total = Some(match delta_total {
            Some(prev) => prev.add(&dz_masked)?,
            None => dz_masked,
        });
        if step == 0 {
            first_grad = Some(g);
            first_curvature = curvature;
        }
    }

    Ok(LatentStepResult {
        z_refined: z_cur,
        delta_z: delta_total.expect("at least one step"),
        grad: first_grad.expect("at least one step"),
        curvature: first_curvature,
    })
}

fn step_expr(g: &Expr, cfg: &LatentOptConfig) -> Result<(Expr, Option<Expr>)> {
    match cfg.method {
        LatentMethod::Gd => Ok((g.scale(cfg.alpha), None)),
        LatentMethod::Ngd => {
            let denom = Expr::scalar(cfg.beta).add(&g.sum_squares())?;
            let curvature = Expr::scalar(1.0).div(&denom)?;
            let dz = curvature.scale(cfg.alpha).mul(g)?;
            Ok((dz, Some(curvature)))
        }
    }
}

/// The same refinement executed numerically: iterate gradient evaluations
/// and tensor updates in place of building an expression chain. Used by the
/// evaluation sweeps (no parameter gradients needed) and as an independent
/// route for testing the expression chain.
pub fn refine_latent_numeric(
    critic: &Expr,
    z_name: &str,
    z0: &Tensor,
    cfg: &LatentOptConfig,
    steps: u32,
    env: &Environment,
) -> Result<NumericRefinement> {
    cfg.validate()?;
    let mut env = env.clone();
    let mut z = z0.clone();
    let mut delta_total = Tensor::zeros(z0.shape());
    let mut first_grad = None;
    let mut first_curvature = None;
    for step in 0..steps {
        env.bind(z_name, z.clone());
        let g = gradient(critic, &[z_name], &env)?.remove(0);
        let (dz, curvature) = match cfg.method {
            LatentMethod::Gd => (gd_step(&g, cfg.alpha)?, None),
            LatentMethod::Ngd => {
                let sq = g.data().iter().map(|v| v * v).sum::<f64>();
                (
                    ngd_step(&g, cfg.alpha, cfg.beta)?,
                    Some(1.0 / (cfg.beta + sq)),
                )
            }
        };
        let dz = apply_mask(&dz, cfg.c)?;
        z = z.zip(&dz, |a, b| (a + b).clamp(-1.0, 1.0))?;
        delta_total = delta_total.add(&dz)?;
        if step == 0 {
            first_grad = Some(g);
            first_curvature = curvature;
        }
    }
    Ok(NumericRefinement {
        z_refined: z,
        delta_z: delta_total,
        grad: first_grad,
        curvature: first_curvature,
    })
}

#[derive(Debug, Clone)]
pub struct NumericRefinement {
    pub z_refined: Tensor,
    pub delta_z: Tensor,
    /// First step's gradient; `None` when zero steps were requested.
    pub grad: Option<Tensor>,
    pub curvature: Option<f64>,
}

/// Refine a model's latent with an ungated critic over the leaf `z`.
pub fn refine_latent(
    model: &crate::models::GanModel,
    cfg: &LatentOptConfig,
) -> Result<LatentStepResult> {
    let z = Expr::input("z", &[model.latent_dim()]);
    let critic = model.critic_value(&z)?;
    refine_latent_expr(&critic, "z", cfg, cfg.steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::models::{init_model, MlpSpec};
    use crate::rng::Rng;

    fn gd_cfg(alpha: f64) -> LatentOptConfig {
        LatentOptConfig {
            method: LatentMethod::Gd,
            alpha,
            beta: 0.1,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        }
    }

    #[test]
    fn gd_step_examples() {
        let g = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let dz = gd_step(&g, 0.0001).unwrap();
        assert!((dz.data()[0] - 0.0003).abs() < 1e-18);
        assert!((dz.data()[1] - 0.0004).abs() < 1e-18);
        let zero = Tensor::zeros(&[3]);
        assert_eq!(gd_step(&zero, 1.0).unwrap().data(), &[0.0, 0.0, 0.0]);
        let e1 = Tensor::vector(vec![1.0, 0.0]).unwrap();
        assert_eq!(gd_step(&e1, 1.0).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn ngd_against_hand_inverted_two_by_two() {
        // Solve (g·gᵀ + βI)Δz = αg by hand for g = (3, 4):
        // F' = [[9.1, 12], [12, 16.1]], and F'⁻¹·αg = (0.9/25.1)·(3, 4).
        let g = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let dz = ngd_step(&g, 0.9, 0.1).unwrap();
        let scale = 0.9 / 25.1;
        assert!((dz.data()[0] - 3.0 * scale).abs() < 1e-15);
        assert!((dz.data()[1] - 4.0 * scale).abs() < 1e-15);
        // literal values for the record
        assert!((dz.data()[0] - 0.10756972111553784).abs() < 1e-12);
        assert!((dz.data()[1] - 0.14342629482071714).abs() < 1e-12);

        let det: f64 = 9.1 * 16.1 - 12.0 * 12.0;
        let inv = [[16.1 / det, -12.0 / det], [-12.0 / det, 9.1 / det]];
        let rhs = [0.9 * 3.0, 0.9 * 4.0];
        let hand = [
            inv[0][0] * rhs[0] + inv[0][1] * rhs[1],
            inv[1][0] * rhs[0] + inv[1][1] * rhs[1],
        ];
        assert!((dz.data()[0] - hand[0]).abs() < 1e-12);
        assert!((dz.data()[1] - hand[1]).abs() < 1e-12);
    }

    #[test]
    fn ngd_zero_gradient_and_large_gradient_limits() {
        let zero = Tensor::zeros(&[4]);
        assert_eq!(ngd_step(&zero, 0.9, 0.1).unwrap().data(), &[0.0; 4]);
        assert_eq!(ngd_step_oracle(&zero, 0.9, 1.0).unwrap().data(), &[0.0; 4]);
        let huge = Tensor::vector(vec![1e6, 0.0]).unwrap();
        let dz = ngd_step(&huge, 0.9, 0.1).unwrap();
        assert!((dz.norm() - 9e-7).abs() < 1e-12);
    }

    #[test]
    fn ngd_oracle_unit_vector_eigencase() {
        // g = e₁, α = β = 1: e₁ is an eigenvector of F' with eigenvalue 2.
        let g = Tensor::vector(vec![1.0, 0.0, 0.0]).unwrap();
        let dz = ngd_step_oracle(&g, 1.0, 1.0).unwrap();
        assert!((dz.data()[0] - 0.5).abs() < 1e-12);
        assert_eq!(dz.data()[1], 0.0);
        assert_eq!(dz.data()[2], 0.0);
    }

    #[test]
    fn sherman_morrison_identity_random() {
        let mut rng = Rng::seed_from(17);
        for dim in [2usize, 5, 16, 64] {
            for _ in 0..20 {
                let g = Tensor::new(
                    vec![dim],
                    (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect(),
                )
                .unwrap();
                let alpha = rng.uniform_in(0.01, 2.0);
                let beta = rng.uniform_in(0.01, 5.0);
                let fast = ngd_step(&g, alpha, beta).unwrap();
                let slow = ngd_step_oracle(&g, alpha, beta).unwrap();
                assert!(
                    crate::fd::max_rel_err(&fast, &slow) < 1e-12,
                    "dim {dim}: {fast:?} vs {slow:?}"
                );
            }
        }
    }

    #[test]
    fn step_norm_bound_holds() {
        let mut rng = Rng::seed_from(3);
        let (alpha, beta): (f64, f64) = (0.9, 0.1);
        let bound = alpha / (2.0 * beta.sqrt());
        for _ in 0..200 {
            let g = Tensor::new(
                vec![8],
                (0..8).map(|_| rng.uniform_in(-10.0, 10.0)).collect(),
            )
            .unwrap();
            let dz = ngd_step(&g, alpha, beta).unwrap();
            assert!(dz.norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn ngd_update_colinear_with_gradient() {
        let mut rng = Rng::seed_from(4);
        for _ in 0..100 {
            let g =
                Tensor::new(vec![6], (0..6).map(|_| rng.uniform_in(-5.0, 5.0)).collect()).unwrap();
            let dz = ngd_step(&g, 0.9, 0.1).unwrap();
            let cos = dz.dot(&g).unwrap() / (dz.norm() * g.norm());
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_semantics() {
        let dz = Tensor::vector(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(apply_mask(&dz, 1.0).unwrap().data(), &[1.0; 4]);
        assert_eq!(apply_mask(&dz, 0.0).unwrap().data(), &[0.0; 4]);
        assert_eq!(apply_mask(&dz, 0.5).unwrap().data(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(masked_len(0.8, 16), 13);
        assert!(apply_mask(&dz, 1.5).is_err());
    }

    #[test]
    fn regulariser_values() {
        let dz = Expr::input("dz", &[2]);
        let mut env = Environment::new();
        env.bind("dz", Tensor::zeros(&[2]));
        let r = latent_regulariser(&dz, 0.1).unwrap();
        assert_eq!(evaluate(&r, &env).unwrap().item().unwrap(), 0.0);
        env.bind("dz", Tensor::vector(vec![1.0, 1.0]).unwrap());
        assert!((evaluate(&r, &env).unwrap().item().unwrap() - 0.2).abs() < 1e-15);
        let r300 = latent_regulariser(&dz, 300.0).unwrap();
        env.bind("dz", Tensor::vector(vec![0.1, 0.0]).unwrap());
        assert!((evaluate(&r300, &env).unwrap().item().unwrap() - 3.0).abs() < 1e-12);
        assert!(latent_regulariser(&dz, -1.0).is_err());
    }

    #[test]
    fn zero_alpha_is_identity() {
        let m = init_model(
            MlpSpec::new(vec![4, 8, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 8, 1], 0.2).unwrap(),
            4,
            2,
            0,
        )
        .unwrap();
        let out = refine_latent(&m, &gd_cfg(0.0)).unwrap();
        let mut env = m.env();
        let z0 = Tensor::vector(vec![0.3, -0.8, 0.1, 0.9]).unwrap();
        env.bind("z", z0.clone());
        let z1 = evaluate(&out.z_refined, &env).unwrap();
        assert_eq!(z1.data(), z0.data());
        let dz = evaluate(&out.delta_z, &env).unwrap();
        assert_eq!(dz.data(), &[0.0; 4]);
    }

    #[test]
    fn small_step_ascends_the_critic() {
        let mut rng = Rng::seed_from(77);
        let mut ascents = 0;
        for seed in 0..100 {
            let m = init_model(
                MlpSpec::new(vec![4, 10, 2], 0.2).unwrap(),
                MlpSpec::new(vec![2, 10, 1], 0.2).unwrap(),
                4,
                2,
                seed,
            )
            .unwrap();
            let z = Expr::input("z", &[4]);
            let f = m.critic_value(&z).unwrap();
            let z0 =
                Tensor::new(vec![4], (0..4).map(|_| rng.uniform_in(-0.5, 0.5)).collect()).unwrap();
            let mut env = m.env();
            env.bind("z", z0.clone());
            let f0 = evaluate(&f, &env).unwrap().item().unwrap();
            let refined = refine_latent_numeric(&f, "z", &z0, &gd_cfg(1e-3), 1, &env).unwrap();
            env.bind("z", refined.z_refined);
            let f1 = evaluate(&f, &env).unwrap().item().unwrap();
            if f1 >= f0 - 1e-12 {
                ascents += 1;
            }
        }
        assert_eq!(ascents, 100);
    }

    #[test]
    fn one_ngd_step_on_trilinear_toy() {
        // f = θ_D·θ_G·z with θ_D = θ_G = 1, z = 0: g = 1, Δz = 0.9/1.1,
        // clip inactive.
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[1]);
        let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
        let cfg = LatentOptConfig {
            method: LatentMethod::Ngd,
            alpha: 0.9,
            beta: 0.1,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let out = refine_latent_expr(&f, "z", &cfg, 1).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.0).unwrap());
        env.bind("theta_g", Tensor::scalar(1.0).unwrap());
        env.bind("z", Tensor::vector(vec![0.0]).unwrap());
        let z1 = evaluate(&out.z_refined, &env).unwrap();
        assert!((z1.data()[0] - 0.9 / 1.1).abs() < 1e-15);
        let curv = evaluate(out.curvature.as_ref().unwrap(), &env).unwrap();
        assert!((curv.item().unwrap() - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn expression_and_numeric_paths_agree() {
        let m = init_model(
            MlpSpec::new(vec![6, 12, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 12, 1], 0.2).unwrap(),
            6,
            2,
            21,
        )
        .unwrap();
        let z = Expr::input("z", &[6]);
        let f = m.critic_value(&z).unwrap();
        let cfg = LatentOptConfig {
            method: LatentMethod::Ngd,
            alpha: 0.9,
            beta: 0.1,
            w_r: 0.1,
            c: 0.5,
            steps: 3,
            eval_steps: 0,
        };
        let chain = refine_latent_expr(&f, "z", &cfg, 3).unwrap();
        let z0 = Tensor::vector(vec![0.2, -0.4, 0.7, -0.9, 0.05, 0.33]).unwrap();
        let mut env = m.env();
        env.bind("z", z0.clone());
        let z_expr = evaluate(&chain.z_refined, &env).unwrap();
        let numeric = refine_latent_numeric(&f, "z", &z0, &cfg, 3, &env).unwrap();
        assert!(crate::fd::max_rel_err(&z_expr, &numeric.z_refined) < 1e-12);
        // masked coordinates of z′ equal z exactly
        let keep = masked_len(cfg.c, 6);
        for i in keep..6 {
            assert_eq!(z_expr.data()[i], z0.data()[i]);
        }
        // everything stays in the box
        assert!(z_expr.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = LatentOptConfig::small_profile();
        cfg.alpha = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = LatentOptConfig::small_profile();
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LatentOptConfig::small_profile();
        cfg.c = 1.2;
        assert!(cfg.validate().is_err());
        let mut cfg = LatentOptConfig::small_profile();
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
    }
}
