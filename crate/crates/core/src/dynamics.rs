//! Exact reference implementations of the differentiable-games math on
//! models small enough for dense computation: the simultaneous gradient,
//! the full game Hessian and its anti-symmetric part, symplectic gradient
//! adjustment, the three-player latent game, the unrolled-gradient
//! correspondence, and a step-by-step dynamics simulator.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::eval::{evaluate, Environment};
use crate::expr::{find_leaf_shape, Expr};
use crate::fd::max_rel_err;
use crate::grad::{gradient, gradient_expr, substitute};
use crate::latent::{refine_latent_expr, LatentMethod, LatentOptConfig};
use crate::linalg::Matrix;
use crate::tensor::Tensor;

/// Adjustment coefficient λ and latent-player weight η = 1/N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgaConfig {
    pub lambda: f64,
    pub eta: f64,
}

impl SgaConfig {
    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "adjustment coefficient must be positive, got {lambda}"
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "latent-player weight must lie in (0, 1], got {eta}"
            )));
        }
        Ok(SgaConfig { lambda, eta })
    }

    /// γ = (1 + η)/2, always derived, never stored.
    pub fn gamma(&self) -> f64 {
        (1.0 + self.eta) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct Player {
    pub name: String,
    /// Ordered parameter identifiers owned by this player.
    pub params: Vec<String>,
    /// This player's scalar loss.
    pub loss: Expr,
}

/// A differentiable game: ordered players with scalar losses over a shared
/// environment. Kept small enough (≤ 512 parameters) that dense Hessians
/// stay an exact reference rather than an approximation.
#[derive(Debug, Clone)]
pub struct Game {
    pub players: Vec<Player>,
    pub env: Environment,
    adversarial: Option<AdversarialCore>,
}

/// Extra structure carried by two-player critic games so the latent-update
/// dynamics method can rebuild its losses through a refinement chain.
#[derive(Debug, Clone)]
struct AdversarialCore {
    critic: Expr,
    latent: String,
}

impl Game {
    pub fn new(players: Vec<Player>, env: Environment) -> Result<Game> {
        let game = Game {
            players,
            env,
            adversarial: None,
        };
        game.validate()?;
        Ok(game)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let mut total = 0usize;
        for player in &self.players {
            if !player.loss.is_scalar() {
                return Err(Error::NonScalar(player.loss.shape().to_vec()));
            }
            for param in &player.params {
                if !seen.insert(param.clone()) {
                    return Err(Error::InvalidConfig(format!(
                        "parameter `{param}` owned by more than one player"
                    )));
                }
                let bound = self
                    .env
                    .get(param)
                    .ok_or_else(|| Error::Unbound(param.clone()))?;
                total += bound.len();
                if find_leaf_shape(std::slice::from_ref(&player.loss), param).is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "loss of player `{}` does not mention its parameter `{param}`",
                        player.name
                    )));
                }
            }
        }
        if total > 512 {
            return Err(Error::InvalidConfig(format!(
                "game has {total} parameters; dense reference math is capped at 512"
            )));
        }
        Ok(())
    }

    /// Two-player bilinear game: L₁ = x·y, L₂ = −x·y.
    pub fn bilinear(x0: f64, y0: f64) -> Game {
        let x = Expr::param("x", &[]);
        let y = Expr::param("y", &[]);
        let xy = x.mul(&y).expect("scalars");
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(x0).expect("finite"));
        env.bind("y", Tensor::scalar(y0).expect("finite"));
        Game::new(
            vec![
                Player {
                    name: "x".into(),
                    params: vec!["x".into()],
                    loss: xy.clone(),
                },
                Player {
                    name: "y".into(),
                    params: vec!["y".into()],
                    loss: xy.neg(),
                },
            ],
            env,
        )
        .expect("valid by construction")
    }

    /// Potential game: both players share the loss x² + y².
    pub fn potential(x0: f64, y0: f64) -> Game {
        let x = Expr::param("x", &[]);
        let y = Expr::param("y", &[]);
        let loss = x
            .mul(&x)
            .expect("scalars")
            .add(&y.mul(&y).expect("scalars"))
            .expect("scalars");
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(x0).expect("finite"));
        env.bind("y", Tensor::scalar(y0).expect("finite"));
        Game::new(
            vec![
                Player {
                    name: "x".into(),
                    params: vec!["x".into()],
                    loss: loss.clone(),
                },
                Player {
                    name: "y".into(),
                    params: vec!["y".into()],
                    loss,
                },
            ],
            env,
        )
        .expect("valid by construction")
    }

    /// Two scalar players with quadratic losses
    /// L₁ = a₁x² + b₁xy + c₁y², L₂ = a₂x² + b₂xy + c₂y².
    pub fn quadratic_pair(coeffs: [f64; 6], x0: f64, y0: f64) -> Result<Game> {
        let x = Expr::param("x", &[]);
        let y = Expr::param("y", &[]);
        let xx = x.mul(&x)?;
        let xy = x.mul(&y)?;
        let yy = y.mul(&y)?;
        let combine = |a: f64, b: f64, c: f64| -> Result<Expr> {
            xx.scale(a).add(&xy.scale(b))?.add(&yy.scale(c))
        };
        let l1 = combine(coeffs[0], coeffs[1], coeffs[2])?;
        let l2 = combine(coeffs[3], coeffs[4], coeffs[5])?;
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(x0)?);
        env.bind("y", Tensor::scalar(y0)?);
        Game::new(
            vec![
                Player {
                    name: "x".into(),
                    params: vec!["x".into()],
                    loss: l1,
                },
                Player {
                    name: "y".into(),
                    params: vec!["y".into()],
                    loss: l2,
                },
            ],
            env,
        )
    }

    /// Zero-sum pair built from a scalar critic f: the first player descends
    /// f, the second descends −f. Carries the critic so the latent-update
    /// dynamics method can differentiate through a refinement of `latent`.
    pub fn adversarial_pair(
        critic: Expr,
        d_params: Vec<String>,
        g_params: Vec<String>,
        latent: impl Into<String>,
        env: Environment,
    ) -> Result<Game> {
        let latent = latent.into();
        if find_leaf_shape(std::slice::from_ref(&critic), &latent).is_none() {
            return Err(Error::UnknownVariable(latent));
        }
        let mut game = Game::new(
            vec![
                Player {
                    name: "discriminator".into(),
                    params: d_params,
                    loss: critic.clone(),
                },
                Player {
                    name: "generator".into(),
                    params: g_params,
                    loss: critic.neg(),
                },
            ],
            env,
        )?;
        game.adversarial = Some(AdversarialCore { critic, latent });
        Ok(game)
    }

    /// The three-player form of the latent game: the update Δz joins as a
    /// player with down-weighted loss η·L_G, alongside the discriminator
    /// (loss f(z+Δz)) and generator (loss −f(z+Δz)).
    pub fn three_player_latent(
        critic: &Expr,
        z_name: &str,
        d_params: Vec<String>,
        g_params: Vec<String>,
        eta: f64,
        mut env: Environment,
        dz0: &Tensor,
    ) -> Result<Game> {
        let dim = match find_leaf_shape(std::slice::from_ref(critic), z_name) {
            Some(shape) => shape,
            None => return Err(Error::UnknownVariable(z_name.to_string())),
        };
        if dz0.shape() != dim.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "latent update of shape {:?}, expected {:?}",
                dz0.shape(),
                dim
            )));
        }
        let z = Expr::input(z_name, &dim);
        let dz = Expr::param("dz", &dim);
        let z_prime = z.add(&dz)?;
        let mut map = HashMap::new();
        map.insert(z_name.to_string(), z_prime);
        let f = substitute(critic, &map)?;
        env.bind("dz", dz0.clone());
        Game::new(
            vec![
                Player {
                    name: "latent".into(),
                    params: vec!["dz".into()],
                    loss: f.neg().scale(eta),
                },
                Player {
                    name: "discriminator".into(),
                    params: d_params,
                    loss: f.clone(),
                },
                Player {
                    name: "generator".into(),
                    params: g_params,
                    loss: f.neg(),
                },
            ],
            env,
        )
    }

    /// Flat parameter layout: (identifier, length) in player order.
    pub fn layout(&self) -> Vec<(String, usize)> {
        self.players
            .iter()
            .flat_map(|p| p.params.iter())
            .map(|name| {
                let len = self.env.get(name).expect("validated").len();
                (name.clone(), len)
            })
            .collect()
    }

    pub fn total_dim(&self) -> usize {
        self.layout().iter().map(|(_, len)| len).sum()
    }

    fn flat_state(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for (name, _) in self.layout() {
            out.extend_from_slice(self.env.get(&name).expect("validated").data());
        }
        out
    }

    fn write_state(&mut self, flat: &[f64]) {
        let layout = self.layout();
        let mut offset = 0;
        for (name, len) in layout {
            let shape = self.env.get(&name).expect("validated").shape().to_vec();
            let chunk = flat[offset..offset + len].to_vec();
            self.env
                .bind(name, Tensor::new(shape, chunk).expect("finite state"));
            offset += len;
        }
    }
}

/// Per-player gradient of its own loss with respect to its own parameters,
/// concatenated in player order. Not the gradient of any single function.
pub fn simultaneous_grad(game: &Game) -> Result<Tensor> {
    let mut out = Vec::with_capacity(game.total_dim());
    for player in &game.players {
        let names: Vec<&str> = player.params.iter().map(String::as_str).collect();
        for block in gradient(&player.loss, &names, &game.env)? {
            out.extend_from_slice(block.data());
        }
    }
    Tensor::new(vec![out.len()], out)
}

/// Dense game Hessian H = ∇(simultaneous gradient), assembled row by row
/// with nested reverse-mode differentiation.
pub fn game_hessian(game: &Game) -> Result<Matrix> {
    let layout = game.layout();
    let all_names: Vec<&str> = layout.iter().map(|(n, _)| n.as_str()).collect();
    let dim = game.total_dim();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for player in &game.players {
        for param in &player.params {
            let g_block = gradient_expr(&player.loss, param)?;
            let block_len = game.env.get(param).expect("validated").len();
            for i in 0..block_len {
                let g_i = g_block.index(i)?;
                let row_blocks = gradient(&g_i, &all_names, &game.env)?;
                let mut row = Vec::with_capacity(dim);
                for b in row_blocks {
                    row.extend_from_slice(b.data());
                }
                rows.push(row);
            }
        }
    }
    Matrix::from_rows(rows)
}

/// A = ½(H − Hᵀ); exactly anti-symmetric by construction.
pub fn antisymmetric_part(h: &Matrix) -> Result<Matrix> {
    if h.rows() != h.cols() {
        return Err(Error::DimensionMismatch(format!(
            "anti-symmetric part of a {}x{} matrix",
            h.rows(),
            h.cols()
        )));
    }
    let n = h.rows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, 0.5 * (h.get(i, j) - h.get(j, i)));
        }
    }
    Ok(a)
}

/// Adjusted gradient g* = g + λ·Aᵀ·g with A the anti-symmetric part of H.
pub fn sga_adjust(g: &Tensor, h: &Matrix, lambda: f64) -> Result<Tensor> {
    if h.rows() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "adjustment: gradient of length {} vs Hessian {}x{}",
            g.len(),
            h.rows(),
            h.cols()
        )));
    }
    let a = antisymmetric_part(h)?;
    let at = a.transpose();
    let atg = at.matvec(g.data())?;
    let data = g
        .data()
        .iter()
        .zip(&atg)
        .map(|(gi, ai)| gi + lambda * ai)
        .collect();
    Tensor::new(vec![g.len()], data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsMethod {
    SimGrad,
    Sga {
        lambda: f64,
    },
    /// Each player differentiates through its opponent's simulated gradient
    /// step (two-player games only).
    Unrolled,
    /// Gradients taken through one latent ascent step of size `alpha`
    /// (adversarial-pair games only).
    Logan {
        alpha: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Flat parameter state per step, including the initial state.
    pub states: Vec<Vec<f64>>,
    pub param_norms: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Set when the norm passed 1e6 and the trajectory was truncated.
    pub diverged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain gradient-step dynamics under the chosen update direction.
/// Deterministic; truncates with the `diverged` flag when the parameter
/// norm passes 1e6.
pub fn simulate_dynamics(
    game: &Game,
    method: DynamicsMethod,
    lr: f64,
    steps: usize,
) -> Result<Trajectory> {
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let mut game = game.clone();
    let mut states = vec![game.flat_state()];
    let mut param_norms = vec![norm(&states[0])];
    let mut grad_norms = Vec::new();
    let mut diverged = false;

    for _ in 0..steps {
        let direction = update_direction(&game, method)?;
        grad_norms.push(direction.norm());
        let state = game.flat_state();
        let next: Vec<f64> = state
            .iter()
            .zip(direction.data())
            .map(|(p, d)| p - lr * d)
            .collect();
        let next_norm = norm(&next);
        if !next_norm.is_finite() || next_norm > 1e6 {
            diverged = true;
            break;
        }
        game.write_state(&next);
        states.push(next.clone());
        param_norms.push(next_norm);
    }

    Ok(Trajectory {
        states,
        param_norms,
        grad_norms,
        diverged,
    })
}

fn update_direction(game: &Game, method: DynamicsMethod) -> Result<Tensor> {
    match method {
        DynamicsMethod::SimGrad => simultaneous_grad(game),
        DynamicsMethod::Sga { lambda } => {
            let g = simultaneous_grad(game)?;
            let h = game_hessian(game)?;
            sga_adjust(&g, &h, lambda)
        }
        DynamicsMethod::Unrolled => unrolled_direction(game),
        DynamicsMethod::Logan { alpha } => logan_direction(game, alpha),
    }
}

/// Each player's own-loss gradient after substituting the opponent's
/// one-step gradient update into its loss.
fn unrolled_direction(game: &Game) -> Result<Tensor> {
    if game.players.len() != 2 {
        return Err(Error::InvalidConfig(
            "unrolled dynamics are defined for two-player games".into(),
        ));
    }
    let mut out = Vec::with_capacity(game.total_dim());
    for (idx, player) in game.players.iter().enumerate() {
        let opponent = &game.players[1 - idx];
        let mut map = HashMap::new();
        for oparam in &opponent.params {
            let leaf_shape = game.env.get(oparam).expect("validated").shape().to_vec();
            let leaf = Expr::param(oparam.clone(), &leaf_shape);
            // opponent update uses the same step size as the outer dynamics:
            // one inner gradient step on its own loss
            let step = gradient_expr(&opponent.loss, oparam)?;
            map.insert(oparam.clone(), leaf.sub(&step.scale(UNROLL_INNER_LR))?);
        }
        let unrolled_loss = substitute(&player.loss, &map)?;
        let names: Vec<&str> = player.params.iter().map(String::as_str).collect();
        for block in gradient(&unrolled_loss, &names, &game.env)? {
            out.extend_from_slice(block.data());
        }
    }
    Tensor::new(vec![out.len()], out)
}

/// Inner step size for the unrolled method; fixed so trajectories are a
/// deterministic function of (game, lr, steps).
const UNROLL_INNER_LR: f64 = 0.1;

/// Both players' gradients taken through one latent ascent step on the
/// shared critic, mirroring the training-time update.
fn logan_direction(game: &Game, alpha: f64) -> Result<Tensor> {
    let core = game.adversarial.as_ref().ok_or_else(|| {
        Error::InvalidConfig(
            "latent-update dynamics need an adversarial-pair game with a latent input".into(),
        )
    })?;
    let cfg = LatentOptConfig {
        method: LatentMethod::Gd,
        alpha,
        beta: 1.0,
        w_r: 0.0,
        c: 1.0,
        steps: 1,
        eval_steps: 0,
    };
    let refined = refine_latent_expr(&core.critic, &core.latent, &cfg, 1)?;
    let mut map = HashMap::new();
    map.insert(core.latent.clone(), refined.z_refined);
    let f_prime = substitute(&core.critic, &map)?;
    let mut out = Vec::with_capacity(game.total_dim());
    for (idx, player) in game.players.iter().enumerate() {
        let loss = if idx == 0 {
            f_prime.clone()
        } else {
            f_prime.neg()
        };
        let names: Vec<&str> = player.params.iter().map(String::as_str).collect();
        for block in gradient(&loss, &names, &game.env)? {
            out.extend_from_slice(block.data());
        }
    }
    Tensor::new(vec![out.len()], out)
}

/// How closely differentiating through one latent gradient step reproduces
/// the approximate symplectic adjustment of the three-player game, with the
/// shared coefficient fixed by λγ = α.
#[derive(Debug, Clone)]
pub struct SgaDiscrepancyReport {
    pub max_rel_discrepancy: f64,
    pub discriminator_rel: f64,
    pub generator_rel: f64,
    /// The adjustment coefficient implied by λγ = α.
    pub implied_lambda: f64,
}

/// Compare (i) the approximate three-player adjustment — the direct term
/// plus λγ·(∂²f/∂z∂θ)ᵀ∂f/∂z, all evaluated at z′ — against (ii) the
/// gradients obtained by differentiating through an actual latent gradient
/// step. Exact (≤ 1e-8) whenever ∂²f/∂z∂θ is constant in z; O(α) otherwise.
pub fn logan_approx_sga_check(
    critic: &Expr,
    z_name: &str,
    d_params: &[String],
    g_params: &[String],
    env: &Environment,
    alpha: f64,
    eta: f64,
) -> Result<SgaDiscrepancyReport> {
    let sga = SgaConfig::new(alpha.max(f64::MIN_POSITIVE), eta)?;
    let cfg = LatentOptConfig {
        method: LatentMethod::Gd,
        alpha,
        beta: 1.0,
        w_r: 0.0,
        c: 1.0,
        steps: 1,
        eval_steps: 0,
    };

    // (ii) the through-the-update gradients
    let refined = refine_latent_expr(critic, z_name, &cfg, 1)?;
    let mut map = HashMap::new();
    map.insert(z_name.to_string(), refined.z_refined.clone());
    let f_prime = substitute(critic, &map)?;
    let d_names: Vec<&str> = d_params.iter().map(String::as_str).collect();
    let g_names: Vec<&str> = g_params.iter().map(String::as_str).collect();
    let logan_d = gradient(&f_prime, &d_names, env)?;
    let logan_g_raw = gradient(&f_prime.neg(), &g_names, env)?;

    // (i) the adjusted gradients at the refined point
    let z_prime_val = evaluate(&refined.z_refined, env)?;
    let mut env_at = env.clone();
    env_at.bind(z_name, z_prime_val);
    let direct_d = gradient(critic, &d_names, &env_at)?;
    let direct_g = gradient(critic, &g_names, &env_at)?;
    let grad_z = gradient_expr(critic, z_name)?;
    let v = evaluate(&grad_z, &env_at)?;
    // t_θ = (∂²f/∂z∂θ)ᵀ v  via  ∇_θ ⟨stop(v), ∂f/∂z⟩
    let paired = grad_z.dot(&Expr::constant(v))?;
    let adj_d = gradient(&paired, &d_names, &env_at)?;
    let adj_g = gradient(&paired, &g_names, &env_at)?;

    let coeff = alpha; // λγ matched to the latent step size
    let mut sga_d = Vec::new();
    let mut sga_g = Vec::new();
    for (direct, adj) in direct_d.iter().zip(&adj_d) {
        sga_d.push(direct.zip(adj, |a, b| a + coeff * b)?);
    }
    for (direct, adj) in direct_g.iter().zip(&adj_g) {
        sga_g.push(direct.zip(adj, |a, b| -a - coeff * b)?);
    }

    let block_err = |got: &[Tensor], want: &[Tensor]| -> f64 {
        got.iter()
            .zip(want)
            .map(|(a, b)| max_rel_err(a, b))
            .fold(0.0, f64::max)
    };
    let discriminator_rel = block_err(&logan_d, &sga_d);
    let generator_rel = block_err(&logan_g_raw, &sga_g);
    Ok(SgaDiscrepancyReport {
        max_rel_discrepancy: discriminator_rel.max(generator_rel),
        discriminator_rel,
        generator_rel,
        implied_lambda: alpha / sga.gamma(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnrollSide {
    /// Unroll the discriminator's descent step; gradients with respect to
    /// the generator's parameters.
    UnrollD,
    /// Unroll the generator's ascent step; gradients with respect to the
    /// discriminator's parameters.
    UnrollG,
}

#[derive(Debug, Clone)]
pub struct UnrolledReport {
    /// Gradient through the actual one-step parameter update.
    pub exact: Vec<Tensor>,
    /// First-order form: the gradient of f ∓ α‖∂f/∂(unrolled side)‖².
    pub taylor: Vec<Tensor>,
    pub max_rel_diff: f64,
}

/// Exact one-step-unrolled gradient versus its first-order Taylor form.
/// The two differ by O(α²); at α = 0 both reduce to the plain gradient.
pub fn unrolled_gradient(
    critic: &Expr,
    d_params: &[String],
    g_params: &[String],
    env: &Environment,
    alpha: f64,
    side: UnrollSide,
) -> Result<UnrolledReport> {
    let (unrolled_params, grad_params, descend) = match side {
        UnrollSide::UnrollD => (d_params, g_params, true),
        UnrollSide::UnrollG => (g_params, d_params, false),
    };
    let grad_names: Vec<&str> = grad_params.iter().map(String::as_str).collect();

    // exact: substitute θ′ = θ ∓ α·∂f/∂θ and differentiate through it
    let mut map = HashMap::new();
    let mut penalty: Option<Expr> = None;
    for param in unrolled_params {
        let shape = match find_leaf_shape(std::slice::from_ref(critic), param) {
            Some(s) => s,
            None => return Err(Error::UnknownVariable(param.clone())),
        };
        let leaf = Expr::param(param.clone(), &shape);
        let step = gradient_expr(critic, param)?;
        let updated = if descend {
            leaf.sub(&step.scale(alpha))?
        } else {
            leaf.add(&step.scale(alpha))?
        };
        map.insert(param.clone(), updated);
        let sq = step.sum_squares();
        penalty = Some(match penalty {
            Some(p) => p.add(&sq)?,
            None => sq,
        });
    }
    let unrolled = substitute(critic, &map)?;
    let exact = gradient(&unrolled, &grad_names, env)?;

    // Taylor form: d/dθ of f ∓ α‖∂f/∂(side)‖², whose cross term carries the
    // factor 2α.
    let penalty = penalty.expect("at least one unrolled parameter");
    let surrogate = if descend {
        critic.sub(&penalty.scale(alpha))?
    } else {
        critic.add(&penalty.scale(alpha))?
    };
    let taylor = gradient(&surrogate, &grad_names, env)?;

    let max_rel_diff = exact
        .iter()
        .zip(&taylor)
        .map(|(a, b)| max_rel_err(a, b))
        .fold(0.0, f64::max);
    Ok(UnrolledReport {
        exact,
        taylor,
        max_rel_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::finite_difference;

    #[test]
    fn simultaneous_grad_bilinear_and_potential() {
        let g = simultaneous_grad(&Game::bilinear(1.0, 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, -1.0]);
        let g = simultaneous_grad(&Game::potential(1.0, 1.0)).unwrap();
        assert_eq!(g.data(), &[2.0, 2.0]);
    }

    #[test]
    fn hessian_bilinear_is_rotation() {
        let h = game_hessian(&Game::bilinear(1.0, 1.0)).unwrap();
        assert_eq!(h.get(0, 0), 0.0);
        assert_eq!(h.get(0, 1), 1.0);
        assert_eq!(h.get(1, 0), -1.0);
        assert_eq!(h.get(1, 1), 0.0);
        let a = antisymmetric_part(&h).unwrap();
        assert_eq!(a.data(), h.data());
    }

    #[test]
    fn hessian_potential_is_symmetric() {
        let h = game_hessian(&Game::potential(0.3, -0.6)).unwrap();
        assert_eq!(h.get(0, 0), 2.0);
        assert_eq!(h.get(1, 1), 2.0);
        assert_eq!(h.get(0, 1), 0.0);
        assert_eq!(h.get(1, 0), 0.0);
        let a = antisymmetric_part(&h).unwrap();
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn antisymmetric_part_formula() {
        let h = Matrix::from_rows(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let a = antisymmetric_part(&h).unwrap();
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        // exact anti-symmetry
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j), -a.get(j, i));
            }
        }
        let bad = Matrix::zeros(2, 3);
        assert!(antisymmetric_part(&bad).is_err());
    }

    #[test]
    fn sga_adjust_bilinear_hand_case() {
        let game = Game::bilinear(1.0, 1.0);
        let g = simultaneous_grad(&game).unwrap();
        let h = game_hessian(&game).unwrap();
        let adjusted = sga_adjust(&g, &h, 1.0).unwrap();
        assert_eq!(adjusted.data(), &[2.0, 0.0]);
        // λ = 0 is the identity
        let same = sga_adjust(&g, &h, 0.0).unwrap();
        assert_eq!(same.data(), g.data());
    }

    #[test]
    fn sga_identity_on_potential_games() {
        let game = Game::potential(0.7, -0.2);
        let g = simultaneous_grad(&game).unwrap();
        let h = game_hessian(&game).unwrap();
        for lambda in [0.5, 1.0, 10.0] {
            let adjusted = sga_adjust(&g, &h, lambda).unwrap();
            assert_eq!(adjusted.data(), g.data());
        }
    }

    #[test]
    fn sga_points_inward_on_bilinear() {
        for (x, y) in [(1.0, 1.0), (-0.4, 2.0), (3.0, -0.1)] {
            let game = Game::bilinear(x, y);
            let g = simultaneous_grad(&game).unwrap();
            let h = game_hessian(&game).unwrap();
            let lambda = 0.8;
            let adjusted = sga_adjust(&g, &h, lambda).unwrap();
            let theta = [x, y];
            let dot_g: f64 = g.data().iter().zip(&theta).map(|(a, b)| a * b).sum();
            let dot_adj: f64 = adjusted.data().iter().zip(&theta).map(|(a, b)| a * b).sum();
            let norm_sq = x * x + y * y;
            assert!((dot_adj - dot_g - lambda * norm_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_on_quadratic() {
        let game = Game::quadratic_pair([0.5, 1.2, -0.3, 0.7, -0.9, 0.25], 0.4, -0.8).unwrap();
        let h = game_hessian(&game).unwrap();
        // row i of H is the gradient of g_i; probe with central differences
        // over the flat state
        let flat0 = game.flat_state();
        for i in 0..2 {
            let fd_row = finite_difference(
                &mut |p: &Tensor| {
                    let mut probe = game.clone();
                    probe.write_state(p.data());
                    Ok(simultaneous_grad(&probe)?.data()[i])
                },
                &Tensor::vector(flat0.clone()).unwrap(),
                1e-6,
            )
            .unwrap();
            for j in 0..2 {
                assert!((h.get(i, j) - fd_row.data()[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hessian_matches_fd_on_random_latent_game() {
        // a 30-parameter three-player game over a smooth critic
        use crate::models::{init_model, MlpSpec};
        let m = init_model(
            MlpSpec::with_tanh(vec![2, 3, 2]).unwrap(),
            MlpSpec::with_tanh(vec![2, 3, 1]).unwrap(),
            2,
            2,
            77,
        )
        .unwrap();
        let z = Expr::input("z", &[2]);
        let critic = m.critic_value(&z).unwrap();
        let mut env = m.env();
        env.bind("z", Tensor::vector(vec![0.3, -0.2]).unwrap());
        let game = Game::three_player_latent(
            &critic,
            "z",
            m.discriminator_param_names(),
            m.generator_param_names(),
            0.125,
            env,
            &Tensor::vector(vec![0.04, -0.02]).unwrap(),
        )
        .unwrap();
        let dim = game.total_dim();
        assert!(dim <= 32, "dim {dim}");
        let h = game_hessian(&game).unwrap();
        // anti-symmetric part is exactly anti-symmetric
        let a = antisymmetric_part(&h).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                assert_eq!(a.get(i, j), -a.get(j, i));
            }
        }
        // H columns against central differences of the simultaneous gradient
        let flat0 = game.flat_state();
        let eps = 1e-5;
        for j in (0..dim).step_by(5) {
            let mut plus = game.clone();
            let mut minus = game.clone();
            let mut state_p = flat0.clone();
            let mut state_m = flat0.clone();
            state_p[j] += eps;
            state_m[j] -= eps;
            plus.write_state(&state_p);
            minus.write_state(&state_m);
            let gp = simultaneous_grad(&plus).unwrap();
            let gm = simultaneous_grad(&minus).unwrap();
            for i in 0..dim {
                let fd = (gp.data()[i] - gm.data()[i]) / (2.0 * eps);
                assert!(
                    (h.get(i, j) - fd).abs() < 1e-4 * (1.0 + fd.abs()),
                    "H[{i}][{j}] = {} vs fd {fd}",
                    h.get(i, j)
                );
            }
        }
    }

    #[test]
    fn sga_config_invariants() {
        assert!(SgaConfig::new(0.0, 0.5).is_err());
        assert!(SgaConfig::new(1.0, 0.0).is_err());
        assert!(SgaConfig::new(1.0, 1.5).is_err());
        let cfg = SgaConfig::new(2.0, 1.0 / 64.0).unwrap();
        assert!((cfg.gamma() - (1.0 + 1.0 / 64.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn three_player_gradient_matches_hand_form() {
        // f = θ_D·θ_G·z (scalar toy, z 1-dim)
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[1]);
        let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.5).unwrap());
        env.bind("theta_g", Tensor::scalar(-0.7).unwrap());
        env.bind("z", Tensor::vector(vec![0.4]).unwrap());
        let eta = 1.0 / 8.0;
        let dz0 = Tensor::vector(vec![0.05]).unwrap();
        let game = Game::three_player_latent(
            &f,
            "z",
            vec!["theta_d".into()],
            vec!["theta_g".into()],
            eta,
            env,
            &dz0,
        )
        .unwrap();
        let grad = simultaneous_grad(&game).unwrap();
        // hand form: [-η·θ_Dθ_G, θ_G·(z+dz), -θ_D·(z+dz)]
        let zp = 0.4 + 0.05;
        let want = [-eta * 1.5 * -0.7, -0.7 * zp, -(1.5 * zp)];
        for (a, b) in grad.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn bilinear_simgrad_spirals_out_sga_spirals_in() {
        let game = Game::bilinear(1.0, 1.0);
        let out = simulate_dynamics(&game, DynamicsMethod::SimGrad, 0.1, 100).unwrap();
        assert!(!out.diverged);
        for w in out.param_norms.windows(2) {
            assert!(w[1] > w[0]);
        }
        // oracle: (x, y) ← (x − 0.1·y, y + 0.1·x)
        let (mut x, mut y) = (1.0f64, 1.0f64);
        for state in &out.states[1..] {
            let nx = x - 0.1 * y;
            let ny = y + 0.1 * x;
            assert_eq!(state[0], nx);
            assert_eq!(state[1], ny);
            x = nx;
            y = ny;
        }

        let inward =
            simulate_dynamics(&game, DynamicsMethod::Sga { lambda: 1.0 }, 0.1, 100).unwrap();
        for w in inward.param_norms.windows(2) {
            assert!(w[1] < w[0]);
        }
        // oracle: g* = (y + x, −x + y), so (x, y) ← (0.9x − 0.1y, 0.1x + 0.9y)
        let (mut x, mut y) = (1.0f64, 1.0f64);
        for state in &inward.states[1..] {
            let nx = 0.9 * x - 0.1 * y;
            let ny = 0.1 * x + 0.9 * y;
            assert!((state[0] - nx).abs() < 1e-12);
            assert!((state[1] - ny).abs() < 1e-12);
            x = nx;
            y = ny;
        }
    }

    #[test]
    fn potential_game_converges_under_all_methods() {
        let game = Game::potential(1.0, -1.0);
        for method in [
            DynamicsMethod::SimGrad,
            DynamicsMethod::Sga { lambda: 1.0 },
            DynamicsMethod::Unrolled,
        ] {
            let out = simulate_dynamics(&game, method, 0.1, 200).unwrap();
            assert!(!out.diverged);
            assert!(out.param_norms.last().unwrap() < &1e-3, "{method:?}");
        }
    }

    #[test]
    fn divergence_is_flagged_and_truncated() {
        let game = Game::bilinear(1.0, 1.0);
        let out = simulate_dynamics(&game, DynamicsMethod::SimGrad, 0.9, 100_000).unwrap();
        assert!(out.diverged);
        assert!(out.states.len() < 100_001);
    }

    #[test]
    fn logan_dynamics_needs_adversarial_structure() {
        let game = Game::bilinear(1.0, 1.0);
        assert!(matches!(
            simulate_dynamics(&game, DynamicsMethod::Logan { alpha: 0.1 }, 0.1, 5),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn logan_dynamics_on_toy_critic_runs() {
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[1]);
        let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(0.8).unwrap());
        env.bind("theta_g", Tensor::scalar(0.5).unwrap());
        env.bind("z", Tensor::vector(vec![0.2]).unwrap());
        let game =
            Game::adversarial_pair(f, vec!["theta_d".into()], vec!["theta_g".into()], "z", env)
                .unwrap();
        let out =
            simulate_dynamics(&game, DynamicsMethod::Logan { alpha: 0.05 }, 0.05, 20).unwrap();
        assert!(!out.diverged);
        assert_eq!(out.states.len(), 21);
    }

    #[test]
    fn approx_sga_exact_on_trilinear_toy() {
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[1]);
        let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.3).unwrap());
        env.bind("theta_g", Tensor::scalar(0.6).unwrap());
        env.bind("z", Tensor::vector(vec![0.1]).unwrap());
        for alpha in [0.5, 0.1, 0.01] {
            let report = logan_approx_sga_check(
                &f,
                "z",
                &["theta_d".into()],
                &["theta_g".into()],
                &env,
                alpha,
                1.0 / 64.0,
            )
            .unwrap();
            assert!(
                report.max_rel_discrepancy <= 1e-8,
                "alpha {alpha}: {report:?}"
            );
        }
    }

    #[test]
    fn approx_sga_hand_expansion_on_trilinear() {
        // dL_D/dθ_D through the update: θ_G·z + 2αθ_Dθ_G²
        // dL_G/dθ_G through the update: −(θ_D·z + 2αθ_D²θ_G)
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let z = Expr::input("z", &[1]);
        let f = d.mul(&g).unwrap().mul(&z.index(0).unwrap()).unwrap();
        let (td, tg, zv, alpha) = (1.3, 0.6, 0.1, 0.25);
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(td).unwrap());
        env.bind("theta_g", Tensor::scalar(tg).unwrap());
        env.bind("z", Tensor::vector(vec![zv]).unwrap());
        let cfg = LatentOptConfig {
            method: LatentMethod::Gd,
            alpha,
            beta: 1.0,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let refined = refine_latent_expr(&f, "z", &cfg, 1).unwrap();
        let mut map = HashMap::new();
        map.insert("z".to_string(), refined.z_refined);
        let f_prime = substitute(&f, &map).unwrap();
        let dd = gradient(&f_prime, &["theta_d"], &env).unwrap()[0]
            .item()
            .unwrap();
        let dg = gradient(&f_prime.neg(), &["theta_g"], &env).unwrap()[0]
            .item()
            .unwrap();
        assert!((dd - (tg * zv + 2.0 * alpha * td * tg * tg)).abs() < 1e-12);
        assert!((dg - -(td * zv + 2.0 * alpha * td * td * tg)).abs() < 1e-12);
    }

    #[test]
    fn unrolled_hand_case_and_zero_alpha() {
        // f = θ_D·θ_G at (1, 2), α = 0.1, unrolling D: both forms give 0.6
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let f = d.mul(&g).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.0).unwrap());
        env.bind("theta_g", Tensor::scalar(2.0).unwrap());
        let report = unrolled_gradient(
            &f,
            &["theta_d".into()],
            &["theta_g".into()],
            &env,
            0.1,
            UnrollSide::UnrollD,
        )
        .unwrap();
        assert!((report.taylor[0].item().unwrap() - 0.6).abs() < 1e-12);
        assert!((report.exact[0].item().unwrap() - 0.6).abs() < 1e-12);

        let at_zero = unrolled_gradient(
            &f,
            &["theta_d".into()],
            &["theta_g".into()],
            &env,
            0.0,
            UnrollSide::UnrollD,
        )
        .unwrap();
        assert_eq!(at_zero.exact[0].item().unwrap(), 1.0);
        assert_eq!(at_zero.taylor[0].item().unwrap(), 1.0);
    }

    #[test]
    fn unroll_g_side_carries_opposite_sign() {
        // f = θ_D·θ_G at (1, 2), unrolling G with ascent:
        // surrogate = f + α(∂f/∂θ_G)², d/dθ_D = θ_G + 2αθ_D = 2.2 at α 0.1
        let d = Expr::param("theta_d", &[]);
        let g = Expr::param("theta_g", &[]);
        let f = d.mul(&g).unwrap();
        let mut env = Environment::new();
        env.bind("theta_d", Tensor::scalar(1.0).unwrap());
        env.bind("theta_g", Tensor::scalar(2.0).unwrap());
        let report = unrolled_gradient(
            &f,
            &["theta_d".into()],
            &["theta_g".into()],
            &env,
            0.1,
            UnrollSide::UnrollG,
        )
        .unwrap();
        assert!((report.taylor[0].item().unwrap() - 2.2).abs() < 1e-12);
        assert!((report.exact[0].item().unwrap() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn game_validation_catches_misuse() {
        // duplicate ownership
        let x = Expr::param("x", &[]);
        let loss = x.mul(&x).unwrap();
        let mut env = Environment::new();
        env.bind("x", Tensor::scalar(1.0).unwrap());
        let dup = Game::new(
            vec![
                Player {
                    name: "a".into(),
                    params: vec!["x".into()],
                    loss: loss.clone(),
                },
                Player {
                    name: "b".into(),
                    params: vec!["x".into()],
                    loss,
                },
            ],
            env.clone(),
        );
        assert!(dup.is_err());

        // loss not mentioning the player's parameter
        let y_loss = Expr::scalar(1.0);
        let missing = Game::new(
            vec![Player {
                name: "a".into(),
                params: vec!["x".into()],
                loss: y_loss,
            }],
            env,
        );
        assert!(missing.is_err());
    }
}
