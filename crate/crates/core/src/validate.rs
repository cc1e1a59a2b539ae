//! The named oracle battery: every derivative, closed form and dynamics
//! claim in the crate checked against an independent route. `logan-lab
//! check` runs these and fails loudly on any regression; the acceptance
//! suite reuses them at full scale.

use std::collections::HashMap;

use crate::data::DataDistribution;
use crate::dynamics::{
    logan_approx_sga_check, simulate_dynamics, unrolled_gradient, DynamicsMethod, Game, UnrollSide,
};
use crate::error::Result;
use crate::eval::{evaluate, Environment};
use crate::expr::Expr;
use crate::fd::{finite_difference, max_rel_err};
use crate::grad::{gradient, gradient_expr, substitute};
use crate::latent::{ngd_step, ngd_step_oracle, refine_latent_expr, LatentMethod, LatentOptConfig};
use crate::linalg::Matrix;
use crate::metrics::{
    gaussian_frechet, gaussian_frechet_oracle, moving_normalise, GaussianSummary,
};
use crate::models::{init_model, losses, GanModel, LossKind, MlpSpec, ParamGate};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub max_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn from_err(name: &'static str, max_err: f64, tolerance: f64, detail: String) -> Self {
        CheckReport {
            name,
            max_err,
            tolerance,
            passed: max_err <= tolerance,
            detail,
        }
    }

    fn failure(name: &'static str, detail: String) -> Self {
        CheckReport {
            name,
            max_err: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            detail,
        }
    }
}

fn guard(name: &'static str, body: impl FnOnce() -> Result<CheckReport>) -> CheckReport {
    match body() {
        Ok(report) => report,
        Err(e) => CheckReport::failure(name, format!("errored: {e}")),
    }
}

/// A small tanh critic: smooth everywhere, so finite differences and
/// order-of-convergence sweeps behave.
fn tanh_model(seed: u64) -> GanModel {
    init_model(
        MlpSpec::with_tanh(vec![3, 5, 2]).unwrap(),
        MlpSpec::with_tanh(vec![2, 5, 1]).unwrap(),
        3,
        2,
        seed,
    )
    .unwrap()
}

fn leaky_model(seed: u64) -> GanModel {
    init_model(
        MlpSpec::new(vec![3, 6, 2], 0.2).unwrap(),
        MlpSpec::new(vec![2, 6, 1], 0.2).unwrap(),
        3,
        2,
        seed,
    )
    .unwrap()
}

fn trilinear_critic() -> (Expr, Environment) {
    let d = Expr::param("theta_d", &[]);
    let g = Expr::param("theta_g", &[]);
    let z = Expr::input("z", &[1]);
    let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
    let mut env = Environment::new();
    env.bind("theta_d", Tensor::scalar(1.3).unwrap());
    env.bind("theta_g", Tensor::scalar(0.6).unwrap());
    env.bind("z", Tensor::vector(vec![0.1]).unwrap());
    (f, env)
}

pub fn check_sherman_morrison() -> CheckReport {
    guard("sherman_morrison_equivalence", || {
        let mut rng = Rng::seed_from(101);
        let mut worst = 0.0f64;
        for dim in [2usize, 16, 64, 128] {
            for _ in 0..50 {
                let g = Tensor::new(
                    vec![dim],
                    (0..dim).map(|_| rng.uniform_in(-3.0, 3.0)).collect(),
                )?;
                let alpha = rng.uniform_in(0.01, 2.0);
                let beta = rng.uniform_in(0.01, 6.0);
                let fast = ngd_step(&g, alpha, beta)?;
                let slow = ngd_step_oracle(&g, alpha, beta)?;
                worst = worst.max(max_rel_err(&fast, &slow));
            }
        }
        Ok(CheckReport::from_err(
            "sherman_morrison_equivalence",
            worst,
            1e-10,
            "closed form vs dense solve of the damped empirical Fisher, 200 systems".into(),
        ))
    })
}

pub fn check_ngd_closed_form() -> CheckReport {
    guard("ngd_closed_form_hand_cases", || {
        let g = Tensor::vector(vec![3.0, 4.0])?;
        let dz = ngd_step(&g, 0.9, 0.1)?;
        let e1 = (dz.data()[0] - 0.9 / 25.1 * 3.0).abs();
        let e2 = (dz.data()[1] - 0.9 / 25.1 * 4.0).abs();
        let eig = ngd_step_oracle(&Tensor::vector(vec![1.0, 0.0])?, 1.0, 1.0)?;
        let e3 = (eig.data()[0] - 0.5).abs().max(eig.data()[1].abs());
        Ok(CheckReport::from_err(
            "ngd_closed_form_hand_cases",
            e1.max(e2).max(e3),
            1e-12,
            "g=(3,4) with alpha 0.9, beta 0.1, and the unit-vector eigencase".into(),
        ))
    })
}

pub fn check_gradient_vs_fd() -> CheckReport {
    guard("gradient_vs_finite_differences", || {
        let mut worst = 0.0f64;
        for seed in 0..10u64 {
            let m = tanh_model(seed);
            let z_leaf = Expr::input("z", &[3]);
            let f = m.critic_value(&z_leaf)?;
            let mut rng = Rng::seed_from(1000 + seed);
            let z = Tensor::new(vec![3], (0..3).map(|_| rng.uniform_in(-0.8, 0.8)).collect())?;
            let mut env = m.env();
            env.bind("z", z.clone());
            let names: Vec<String> = std::iter::once("z".to_string())
                .chain(m.param_names())
                .collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let grads = gradient(&f, &refs, &env)?;
            for (name, got) in names.iter().zip(&grads) {
                let point = env.get(name).expect("bound").clone();
                let fd = finite_difference(
                    &mut |p: &Tensor| {
                        let mut probe = env.clone();
                        probe.bind(name.clone(), p.clone());
                        evaluate(&f, &probe)?.item()
                    },
                    &point,
                    1e-5,
                )?;
                worst = worst.max(max_rel_err(got, &fd));
            }
        }
        Ok(CheckReport::from_err(
            "gradient_vs_finite_differences",
            worst,
            1e-5,
            "critic gradients w.r.t. z and every parameter, 10 smooth models".into(),
        ))
    })
}

pub fn check_fd_order() -> CheckReport {
    guard("finite_difference_second_order", || {
        // x³ has constant third derivative: error is exactly ε².
        let p = Tensor::scalar(1.0)?;
        let mut cube = |x: &Tensor| Ok(x.data()[0].powi(3));
        let coarse = finite_difference(&mut cube, &p, 1e-4)?.item()? - 3.0;
        let fine = finite_difference(&mut cube, &p, 1e-5)?.item()? - 3.0;
        let ratio = coarse.abs() / fine.abs().max(1e-18);
        let err = if (30.0..300.0).contains(&ratio) {
            0.0
        } else {
            ratio
        };
        Ok(CheckReport::from_err(
            "finite_difference_second_order",
            err,
            0.0,
            format!("eps 1e-4 vs 1e-5 error ratio {ratio:.1} (expect ~100)"),
        ))
    })
}

pub fn check_nested_gradient_vs_fd() -> CheckReport {
    guard("nested_gradient_vs_fd", || {
        let mut worst = 0.0f64;
        // polynomial: d²(x³)/dx² = 6x
        let x = Expr::input("x", &[]);
        let cube = x.mul(&x)?.mul(&x)?;
        let first = gradient_expr(&cube, "x")?;
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(1.7)?);
        let second = gradient(&first, &["x"], &env)?[0].item()?;
        worst = worst.max((second - 6.0 * 1.7).abs() / (6.0 * 1.7));

        // mixed second derivative of a smooth critic vs nested central FD
        for seed in 0..5u64 {
            let m = tanh_model(seed + 40);
            let z_leaf = Expr::input("z", &[3]);
            let f = m.critic_value(&z_leaf)?;
            let df_dz = gradient_expr(&f, "z")?;
            let probe = df_dz.index(0)?;
            let mut env = m.env();
            env.bind("z", Tensor::vector(vec![0.21, -0.4, 0.05])?);
            let name = "d.w0";
            let got = gradient(&probe, &[name], &env)?.remove(0);
            let point = env.get(name).expect("bound").clone();
            let fd = finite_difference(
                &mut |p: &Tensor| {
                    let mut inner_env = env.clone();
                    inner_env.bind(name, p.clone());
                    Ok(gradient(&f, &["z"], &inner_env)?[0].data()[0])
                },
                &point,
                1e-5,
            )?;
            worst = worst.max(max_rel_err(&got, &fd));
        }
        Ok(CheckReport::from_err(
            "nested_gradient_vs_fd",
            worst,
            1e-4,
            "second derivatives from doubly-applied reverse mode vs nested central differences"
                .into(),
        ))
    })
}

/// Parameter gradients through one latent gradient step versus central
/// finite differences of the end-to-end loss (with the latent update inside
/// the probe).
pub fn check_latent_chain_vs_fd() -> CheckReport {
    guard("latent_chain_grads_vs_fd", || {
        let cfg = LatentOptConfig {
            method: LatentMethod::Gd,
            alpha: 0.05,
            beta: 1.0,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let mut worst = 0.0f64;
        for seed in 0..5u64 {
            let m = tanh_model(seed + 7);
            let z_leaf = Expr::input("z", &[3]);
            let f = m.critic_value(&z_leaf)?;
            let refined = refine_latent_expr(&f, "z", &cfg, 1)?;
            let mut map = HashMap::new();
            map.insert("z".to_string(), refined.z_refined);
            let loss = substitute(&f, &map)?;
            let mut env = m.env();
            env.bind("z", Tensor::vector(vec![0.3, -0.2, 0.15])?);
            for name in m.param_names() {
                let got = gradient(&loss, &[name.as_str()], &env)?.remove(0);
                let point = env.get(&name).expect("bound").clone();
                let fd = finite_difference(
                    &mut |p: &Tensor| {
                        let mut probe = env.clone();
                        probe.bind(name.clone(), p.clone());
                        evaluate(&loss, &probe)?.item()
                    },
                    &point,
                    1e-5,
                )?;
                worst = worst.max(max_rel_err(&got, &fd));
            }
        }
        Ok(CheckReport::from_err(
            "latent_chain_grads_vs_fd",
            worst,
            1e-4,
            "gradients through the refinement chain vs end-to-end finite differences".into(),
        ))
    })
}

pub fn check_trilinear_hand_expansion() -> CheckReport {
    guard("trilinear_hand_expansion", || {
        let (f, env) = trilinear_critic();
        let (td, tg, zv, alpha) = (1.3, 0.6, 0.1, 0.25);
        let cfg = LatentOptConfig {
            method: LatentMethod::Gd,
            alpha,
            beta: 1.0,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let refined = refine_latent_expr(&f, "z", &cfg, 1)?;
        let mut map = HashMap::new();
        map.insert("z".to_string(), refined.z_refined);
        let f_prime = substitute(&f, &map)?;
        let dd = gradient(&f_prime, &["theta_d"], &env)?[0].item()?;
        let dg = gradient(&f_prime.neg(), &["theta_g"], &env)?[0].item()?;
        let want_dd = tg * zv + 2.0 * alpha * td * tg * tg;
        let want_dg = -(td * zv + 2.0 * alpha * td * td * tg);
        let err = (dd - want_dd).abs().max((dg - want_dg).abs());
        Ok(CheckReport::from_err(
            "trilinear_hand_expansion",
            err,
            1e-10,
            "through-the-update gradients vs the hand-expanded closed form".into(),
        ))
    })
}

pub fn check_approx_sga_multilinear() -> CheckReport {
    guard("approx_sga_multilinear", || {
        let (f, env) = trilinear_critic();
        let mut worst = 0.0f64;
        for alpha in [0.5, 0.1, 0.01, 0.001] {
            let report = logan_approx_sga_check(
                &f,
                "z",
                &["theta_d".into()],
                &["theta_g".into()],
                &env,
                alpha,
                1.0 / 64.0,
            )?;
            worst = worst.max(report.max_rel_discrepancy);
        }
        Ok(CheckReport::from_err(
            "approx_sga_multilinear",
            worst,
            1e-8,
            "the local approximation is exact when the mixed second derivative is constant in z"
                .into(),
        ))
    })
}

/// Discrepancy between the adjusted three-player gradients and the
/// through-the-update gradients shrinks at least linearly in the step size.
pub fn check_approx_sga_alpha_sweep() -> CheckReport {
    guard("approx_sga_alpha_sweep", || {
        let alphas = [1e-1, 1e-2, 1e-3];
        let mut min_slope = f64::INFINITY;
        let mut detail = String::new();
        for seed in 0..3u64 {
            let m = tanh_model(seed + 60);
            let z_leaf = Expr::input("z", &[3]);
            let f = m.critic_value(&z_leaf)?;
            let mut env = m.env();
            env.bind("z", Tensor::vector(vec![0.25, -0.35, 0.1])?);
            let discrepancies: Vec<f64> = alphas
                .iter()
                .map(|&alpha| {
                    logan_approx_sga_check(
                        &f,
                        "z",
                        &m.discriminator_param_names(),
                        &m.generator_param_names(),
                        &env,
                        alpha,
                        1.0 / 64.0,
                    )
                    .map(|r| r.max_rel_discrepancy)
                })
                .collect::<Result<_>>()?;
            for w in discrepancies.windows(2) {
                if w[1] > w[0] {
                    return Ok(CheckReport::failure(
                        "approx_sga_alpha_sweep",
                        format!("discrepancy not monotone over alpha: {discrepancies:?}"),
                    ));
                }
            }
            let slope = log_log_slope(&alphas, &discrepancies);
            min_slope = min_slope.min(slope);
            detail = format!("discrepancies {discrepancies:?}, worst slope {min_slope:.3}");
        }
        let err = if min_slope >= 0.9 {
            0.0
        } else {
            0.9 - min_slope
        };
        Ok(CheckReport::from_err(
            "approx_sga_alpha_sweep",
            err,
            0.0,
            detail,
        ))
    })
}

pub(crate) fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

pub fn check_unrolled_hand_case() -> CheckReport {
    guard("unrolled_hand_case", || {
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let f = d.mul(&g)?;
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.0)?);
        env.bind("theta_g", Tensor::scalar(2.0)?);
        let report = unrolled_gradient(
            &f,
            &["theta_d".into()],
            &["theta_g".into()],
            &env,
            0.1,
            UnrollSide::UnrollD,
        )?;
        let err = (report.taylor[0].item()? - 0.6)
            .abs()
            .max((report.exact[0].item()? - 0.6).abs());
        Ok(CheckReport::from_err(
            "unrolled_hand_case",
            err,
            1e-12,
            "theta_d - 2*alpha*theta_g = 0.6 at (1, 2, alpha = 0.1)".into(),
        ))
    })
}

/// Taylor form vs exact one-step unroll differ by O(α²): log-log slope ≥ 1.9
/// across three decades on random quadratic critics.
pub fn check_unrolled_taylor_order() -> CheckReport {
    guard("unrolled_taylor_order", || {
        let alphas = [1e-1, 1e-2, 1e-3];
        let mut min_slope = f64::INFINITY;
        for seed in 0..5u64 {
            let mut rng = Rng::seed_from(900 + seed);
            let n = 3usize;
            // quadratic critic: f = θ_Dᵀ A θ_G + ½θ_Dᵀ B θ_D + ½θ_Gᵀ C θ_G
            let mk_mat = |rng: &mut Rng| {
                Tensor::matrix(
                    n,
                    n,
                    (0..n * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
                )
                .expect("finite")
            };
            let a = Expr::constant(mk_mat(&mut rng));
            let b = Expr::constant(mk_mat(&mut rng));
            let c = Expr::constant(mk_mat(&mut rng));
            let td = Expr::param("theta_d", &[n]);
            let tg = Expr::param("theta_g", &[n]);
            let f = td
                .dot(&a.matvec(&tg)?)?
                .add(&td.dot(&b.matvec(&td)?)?.scale(0.5))?
                .add(&tg.dot(&c.matvec(&tg)?)?.scale(0.5))?;
            let mut env = Environment::new();
            env.bind(
                "theta_d",
                Tensor::new(vec![n], (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect())?,
            );
            env.bind(
                "theta_g",
                Tensor::new(vec![n], (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect())?,
            );
            let diffs: Vec<f64> = alphas
                .iter()
                .map(|&alpha| {
                    unrolled_gradient(
                        &f,
                        &["theta_d".into()],
                        &["theta_g".into()],
                        &env,
                        alpha,
                        UnrollSide::UnrollD,
                    )
                    .map(|r| r.max_rel_diff)
                })
                .collect::<Result<_>>()?;
            min_slope = min_slope.min(log_log_slope(&alphas, &diffs));
        }
        let err = if min_slope >= 1.9 {
            0.0
        } else {
            1.9 - min_slope
        };
        Ok(CheckReport::from_err(
            "unrolled_taylor_order",
            err,
            0.0,
            format!("worst log-log slope {min_slope:.3} (expect ~2)"),
        ))
    })
}

pub fn check_bilinear_dynamics() -> CheckReport {
    guard("bilinear_dynamics_oracle", || {
        let game = Game::bilinear(1.0, 1.0);
        let out = simulate_dynamics(&game, DynamicsMethod::SimGrad, 0.1, 100)?;
        let mut worst = 0.0f64;
        let (mut x, mut y) = (1.0f64, 1.0f64);
        for (i, state) in out.states[1..].iter().enumerate() {
            let nx = x - 0.1 * y;
            let ny = y + 0.1 * x;
            worst = worst.max((state[0] - nx).abs().max((state[1] - ny).abs()));
            if out.param_norms[i + 1] <= out.param_norms[i] {
                return Ok(CheckReport::failure(
                    "bilinear_dynamics_oracle",
                    "simultaneous-gradient norm failed to increase".into(),
                ));
            }
            x = nx;
            y = ny;
        }
        let inward = simulate_dynamics(&game, DynamicsMethod::Sga { lambda: 1.0 }, 0.1, 100)?;
        let (mut x, mut y) = (1.0f64, 1.0f64);
        for (i, state) in inward.states[1..].iter().enumerate() {
            let nx = 0.9 * x - 0.1 * y;
            let ny = 0.1 * x + 0.9 * y;
            worst = worst.max((state[0] - nx).abs().max((state[1] - ny).abs()));
            if inward.param_norms[i + 1] >= inward.param_norms[i] {
                return Ok(CheckReport::failure(
                    "bilinear_dynamics_oracle",
                    "adjusted norm failed to decrease".into(),
                ));
            }
            x = nx;
            y = ny;
        }
        Ok(CheckReport::from_err(
            "bilinear_dynamics_oracle",
            worst,
            1e-12,
            "spiral-out under the raw gradient, spiral-in with adjustment, vs direct iteration"
                .into(),
        ))
    })
}

/// Parameter gradients of one full latent-optimised loss decompose exactly:
/// full = both-blocked + (term recovered by unblocking D) + (term recovered
/// by unblocking G).
pub fn check_ablation_decomposition() -> CheckReport {
    guard("ablation_decomposition", || {
        let cfg = LatentOptConfig {
            method: LatentMethod::Ngd,
            alpha: 0.9,
            beta: 0.1,
            w_r: 0.1,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let mut worst = 0.0f64;
        for seed in 0..20u64 {
            let m = leaky_model(seed);
            let mut rng = Rng::seed_from(3000 + seed);
            let z = Tensor::new(vec![3], (0..3).map(|_| rng.uniform_in(-0.6, 0.6)).collect())?;
            let grads = |block_d: bool, block_g: bool| -> Result<Vec<Tensor>> {
                ablation_gradients(&m, &z, &cfg, block_d, block_g)
            };
            let full = grads(false, false)?;
            let both = grads(true, true)?;
            let d_on = grads(false, true)?; // only the D-side term present
            let g_on = grads(true, false)?; // only the G-side term present
            for i in 0..full.len() {
                let d_term = d_on[i].zip(&both[i], |a, b| a - b)?;
                let g_term = g_on[i].zip(&both[i], |a, b| a - b)?;
                let rebuilt = both[i].add(&d_term)?.add(&g_term)?;
                worst = worst.max(max_rel_err(&rebuilt, &full[i]));
            }
        }
        Ok(CheckReport::from_err(
            "ablation_decomposition",
            worst,
            1e-12,
            "full gradient equals blocked gradient plus the two recovered terms, 20 models".into(),
        ))
    })
}

/// Both players' parameter gradients of the latent-optimised losses under
/// the given stop-gradient switches (the trainer's construction, minus the
/// batch machinery).
pub fn ablation_gradients(
    model: &GanModel,
    z: &Tensor,
    cfg: &LatentOptConfig,
    block_d: bool,
    block_g: bool,
) -> Result<Vec<Tensor>> {
    let z_leaf = Expr::input("z", &[model.latent_dim()]);
    let gate = ParamGate {
        gate_generator: block_g,
        gate_discriminator: block_d,
    };
    let inner = model.critic_gated(&z_leaf, gate)?;
    let refined = refine_latent_expr(&inner, "z", cfg, cfg.steps)?;
    let plain = model.critic_value(&z_leaf)?;
    let mut map = HashMap::new();
    map.insert("z".to_string(), refined.z_refined);
    let f_prime = substitute(&plain, &map)?;
    let mut env = model.env();
    env.bind("z", z.clone());
    let d_names = model.discriminator_param_names();
    let g_names = model.generator_param_names();
    let d_refs: Vec<&str> = d_names.iter().map(String::as_str).collect();
    let g_refs: Vec<&str> = g_names.iter().map(String::as_str).collect();
    let mut out = gradient(&f_prime, &d_refs, &env)?;
    out.extend(gradient(&f_prime.neg(), &g_refs, &env)?);
    Ok(out)
}

pub fn check_stop_gradient_rule() -> CheckReport {
    guard("stop_gradient_rule", || {
        let x = Expr::input("x", &[]);
        let v = Expr::input("v", &[]);
        let e = x.tanh().mul(&x)?;
        let expr = e.stop_grad().mul(&v)?;
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(0.8)?);
        env.bind("v", Tensor::scalar(-2.0)?);
        let got = gradient(&expr, &["v"], &env)?[0].item()?;
        let want = evaluate(&e, &env)?.item()?;
        Ok(CheckReport::from_err(
            "stop_gradient_rule",
            (got - want).abs(),
            0.0,
            "d(stop(e)·v)/dv equals value(e) exactly".into(),
        ))
    })
}

pub fn check_clip_boundary() -> CheckReport {
    guard("clip_boundary_convention", || {
        let x = Expr::input("x", &[]);
        let e = x.clip(-1.0, 1.0)?;
        let mut worst = 0.0f64;
        for (v, want) in [(0.3, 1.0), (1.0, 0.0), (-1.0, 0.0), (2.0, 0.0), (-5.0, 0.0)] {
            let mut env = Environment::new();
            env.bind("x", Tensor::scalar(v)?);
            let got = gradient(&e, &["x"], &env)?[0].item()?;
            worst = worst.max((got - want).abs());
        }
        Ok(CheckReport::from_err(
            "clip_boundary_convention",
            worst,
            0.0,
            "derivative 1 strictly inside, 0 at the boundary and outside".into(),
        ))
    })
}

pub fn check_hinge_dead_zone() -> CheckReport {
    guard("hinge_dead_zone", || {
        let dr = Expr::input("dr", &[]);
        let df = Expr::input("df", &[]);
        let (l_d, _) = losses(LossKind::Hinge, &dr, &df)?;
        let mut env = Environment::new();
        env.bind("dr", Tensor::scalar(0.5)?);
        env.bind("df", Tensor::scalar(-1.8)?);
        let inside = gradient(&l_d, &["df"], &env)?[0].item()?;
        let fd = finite_difference(
            &mut |p: &Tensor| {
                let mut probe = env.clone();
                probe.bind("df", p.clone());
                evaluate(&l_d, &probe)?.item()
            },
            &Tensor::scalar(-1.8)?,
            1e-5,
        )?
        .item()?;
        let err = inside.abs().max(fd.abs());
        Ok(CheckReport::from_err(
            "hinge_dead_zone",
            err,
            1e-12,
            "both reverse mode and finite differences report zero slope below the margin".into(),
        ))
    })
}

pub fn check_frechet_oracle() -> CheckReport {
    guard("frechet_oracle_agreement", || {
        let mut rng = Rng::seed_from(404);
        let mut worst = 0.0f64;
        for dim in [2usize, 8] {
            for _ in 0..20 {
                let mk = |rng: &mut Rng| {
                    let mut base = Matrix::zeros(dim, dim);
                    for i in 0..dim {
                        for j in 0..dim {
                            base.set(i, j, rng.uniform_in(-1.0, 1.0));
                        }
                    }
                    let mut cov = base.matmul(&base.transpose()).expect("square");
                    for i in 0..dim {
                        cov.set(i, i, cov.get(i, i) + 1e-6);
                    }
                    let mean = (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
                    GaussianSummary::from_moments(mean, cov, 0).expect("symmetric")
                };
                let p = mk(&mut rng);
                let q = mk(&mut rng);
                let direct = gaussian_frechet(&p, &q)?;
                let oracle = gaussian_frechet_oracle(&p, &q)?;
                worst = worst.max((direct - oracle).abs());
            }
        }
        Ok(CheckReport::from_err(
            "frechet_oracle_agreement",
            worst,
            1e-8,
            "symmetrised-product route vs swapped route (and 2x2 closed form), 40 pairs".into(),
        ))
    })
}

pub fn check_moving_normalise() -> CheckReport {
    guard("moving_normalise_hand_case", || {
        let series: Vec<f64> = (0..12)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let out = moving_normalise(&series, 2)?;
        let mut worst = 0.0f64;
        for (i, v) in out.iter().enumerate() {
            let want = series[i] / 2f64.sqrt();
            worst = worst.max((v.expect("nonzero sigma") - want).abs());
        }
        // exact invariance under power-of-two rescaling
        let base = moving_normalise(&[0.4, 1.9, -0.3, 0.8, 2.2], 3)?;
        let scaled =
            moving_normalise(&[0.4 * 4.0, 1.9 * 4.0, -0.3 * 4.0, 0.8 * 4.0, 2.2 * 4.0], 3)?;
        for (a, b) in base.iter().zip(&scaled) {
            if a.expect("nonzero").to_bits() != b.expect("nonzero").to_bits() {
                return Ok(CheckReport::failure(
                    "moving_normalise_hand_case",
                    "rescaling by 4 changed the output bits".into(),
                ));
            }
        }
        Ok(CheckReport::from_err(
            "moving_normalise_hand_case",
            worst,
            1e-12,
            "alternating series normalises to x/sqrt(2); rescale invariance exact".into(),
        ))
    })
}

pub fn check_mask_prefix() -> CheckReport {
    guard("mask_prefix_semantics", || {
        let cases = [
            (1.0, 4, 4usize),
            (0.0, 4, 0),
            (0.5, 4, 2),
            (0.8, 16, 13),
            (0.5, 16, 8),
        ];
        for (c, dim, want) in cases {
            let got = crate::latent::masked_len(c, dim);
            if got != want {
                return Ok(CheckReport::failure(
                    "mask_prefix_semantics",
                    format!("ceil({c}*{dim}) gave {got}, want {want}"),
                ));
            }
        }
        Ok(CheckReport::from_err(
            "mask_prefix_semantics",
            0.0,
            0.0,
            "leading-coordinate mask keeps exactly ceil(c*dim) entries".into(),
        ))
    })
}

pub fn check_hessian_antisymmetry() -> CheckReport {
    guard("hessian_and_antisymmetry", || {
        use crate::dynamics::{antisymmetric_part, game_hessian};
        let game = Game::quadratic_pair([0.5, 1.2, -0.3, 0.7, -0.9, 0.25], 0.4, -0.8)?;
        let h = game_hessian(&game)?;
        let a = antisymmetric_part(&h)?;
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((a.get(i, j) + a.get(j, i)).abs());
            }
        }
        // central-difference cross-check of every entry
        let eps = 1e-6;
        let grad_at = |xv: f64, yv: f64| -> Result<Vec<f64>> {
            let mut env2 = game.env.clone();
            env2.bind("x", Tensor::scalar(xv)?);
            env2.bind("y", Tensor::scalar(yv)?);
            let shifted = Game::new(game.players.clone(), env2)?;
            Ok(crate::dynamics::simultaneous_grad(&shifted)?
                .data()
                .to_vec())
        };
        let (x0, y0) = (0.4, -0.8);
        for j in 0..2 {
            let (plus, minus) = if j == 0 {
                (grad_at(x0 + eps, y0)?, grad_at(x0 - eps, y0)?)
            } else {
                (grad_at(x0, y0 + eps)?, grad_at(x0, y0 - eps)?)
            };
            for i in 0..2 {
                let fd = (plus[i] - minus[i]) / (2.0 * eps);
                worst = worst.max((h.get(i, j) - fd).abs());
            }
        }
        Ok(CheckReport::from_err(
            "hessian_and_antisymmetry",
            worst,
            1e-4,
            "dense Hessian vs finite-difference rows; exact anti-symmetry of A".into(),
        ))
    })
}

pub fn check_determinism() -> CheckReport {
    guard("evaluation_determinism", || {
        let m = leaky_model(77);
        let z_leaf = Expr::input("z", &[3]);
        let f = m.critic_value(&z_leaf)?;
        let mut env = m.env();
        env.bind("z", Tensor::vector(vec![0.11, -0.52, 0.93])?);
        let a = evaluate(&f, &env)?;
        let b = evaluate(&f, &env)?;
        let err = if a.data() == b.data() { 0.0 } else { 1.0 };
        Ok(CheckReport::from_err(
            "evaluation_determinism",
            err,
            0.0,
            "same expression and environment give bit-identical values".into(),
        ))
    })
}

pub fn check_latent_step_bound() -> CheckReport {
    guard("ngd_step_norm_bound", || {
        let mut rng = Rng::seed_from(88);
        let (alpha, beta): (f64, f64) = (0.9, 0.1);
        let bound = alpha / (2.0 * beta.sqrt());
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let dim = 1 + (rng.next_u64() % 16) as usize;
            let g = Tensor::new(
                vec![dim],
                (0..dim).map(|_| rng.uniform_in(-20.0, 20.0)).collect(),
            )?;
            let dz = ngd_step(&g, alpha, beta)?;
            worst = worst.max(dz.norm() - bound);
            // colinearity
            if g.norm() > 0.0 {
                let cos = dz.dot(&g)? / (dz.norm() * g.norm());
                worst = worst.max((cos - 1.0).abs());
            }
        }
        Ok(CheckReport::from_err(
            "ngd_step_norm_bound",
            worst.max(0.0),
            1e-12,
            "norm bounded by alpha/(2*sqrt(beta)); update colinear with the gradient".into(),
        ))
    })
}

pub fn check_truncation_variance() -> CheckReport {
    guard("truncation_variance_scaling", || {
        let mut rng = Rng::seed_from(2024);
        let n = 200_000usize;
        let s = 0.6f64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = s * rng.uniform_in(-1.0, 1.0);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let want = s * s / 3.0;
        // standard error of the variance of a scaled uniform
        let se = s * s * (4.0f64 / 45.0 / n as f64).sqrt();
        let err = (var - want).abs();
        Ok(CheckReport::from_err(
            "truncation_variance_scaling",
            err,
            3.0 * se,
            format!(
                "Var(s·z) = {var:.6} vs s²/3 = {want:.6} (3 SE = {:.2e})",
                3.0 * se
            ),
        ))
    })
}

/// The full battery, in a stable order.
pub fn run_all_checks() -> Vec<CheckReport> {
    vec![
        check_sherman_morrison(),
        check_ngd_closed_form(),
        check_latent_step_bound(),
        check_gradient_vs_fd(),
        check_fd_order(),
        check_nested_gradient_vs_fd(),
        check_latent_chain_vs_fd(),
        check_trilinear_hand_expansion(),
        check_approx_sga_multilinear(),
        check_approx_sga_alpha_sweep(),
        check_unrolled_hand_case(),
        check_unrolled_taylor_order(),
        check_bilinear_dynamics(),
        check_ablation_decomposition(),
        check_stop_gradient_rule(),
        check_clip_boundary(),
        check_hinge_dead_zone(),
        check_frechet_oracle(),
        check_moving_normalise(),
        check_mask_prefix(),
        check_hessian_antisymmetry(),
        check_truncation_variance(),
        check_determinism(),
    ]
}

/// Small-scale distribution check used by tests and the CLI alike.
pub fn ring_default() -> DataDistribution {
    DataDistribution::GaussianRing {
        modes: 8,
        radius: 2.0,
        std: 0.02,
    }
}
