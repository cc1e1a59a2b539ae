//! The end-to-end training loop: sample a batch, refine each latent,
//! compute batch losses with the step regulariser, differentiate through
//! the refinement (subject to the ablation switches) and update both
//! players, recording per-step dynamics diagnostics.

use serde::{Deserialize, Serialize};

use crate::data::DataDistribution;
use crate::error::{Error, Result};
use crate::eval::{Environment, Session};
use crate::expr::Expr;
use crate::grad::{gradient_exprs, substitute};
use crate::latent::{latent_regulariser, refine_latent_expr, LatentOptConfig};
use crate::metrics::{gaussian_frechet, generate_samples, mode_coverage, GaussianSummary};
use crate::models::{losses, GanModel, LossKind, ParamGate};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Stop-gradient switches severing the second-order terms that flow through
/// the latent update: `block_d_term` removes the dependence of Δz on the
/// discriminator's parameters, `block_g_term` on the generator's.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    #[serde(default)]
    pub block_d_term: bool,
    #[serde(default)]
    pub block_g_term: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimiserKind {
    Sgd,
    /// Bias-corrected, β₁ = 0.0, β₂ = 0.999.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Both players' gradients from the same forward pass.
    Simultaneous,
    /// Discriminator first, generator on the re-evaluated batch.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub optimiser: OptimiserKind,
    pub lr_d: f64,
    pub lr_g: f64,
    pub loss: LossKind,
    /// `None` trains a vanilla GAN with no latent refinement.
    pub latent: Option<LatentOptConfig>,
    pub ablation: AblationFlags,
    pub update_mode: UpdateMode,
    pub seed: u64,
    pub data: DataDistribution,
    /// Evaluate proxy-FID and mode coverage every this many steps (0 = never).
    pub coverage_interval: u64,
    pub coverage_samples: usize,
    pub mode_radius: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.lr_d > 0.0) || !(self.lr_g > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must be positive, got D {} / G {}",
                self.lr_d, self.lr_g
            )));
        }
        if let Some(latent) = &self.latent {
            latent.validate()?;
        }
        self.data.validate()?;
        if self.coverage_interval > 0 && self.coverage_samples == 0 {
            return Err(Error::InvalidConfig(
                "coverage sampling enabled with zero samples".into(),
            ));
        }
        Ok(())
    }

    /// η = 1/N, the latent player's weight in the three-player view.
    pub fn eta(&self) -> f64 {
        1.0 / self.batch_size as f64
    }
}

/// Per-step scalars; the optional entries are sampled on the coverage
/// interval only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub reg: f64,
    pub dz_norm: f64,
    pub df_abs: f64,
    pub dtheta_d: f64,
    pub dtheta_g: f64,
    pub dtheta_diff: f64,
    pub curvature_mean: Option<f64>,
    pub proxy_fid: Option<f64>,
    pub modes_covered: Option<usize>,
    pub hq_fraction: Option<f64>,
}

/// Euclidean norms of the applied parameter updates, over the concatenated
/// discriminator and generator vectors, and their difference. Recorded per
/// step, never asserted directionally.
pub fn update_norm_diagnostics(
    before: &[(String, Tensor)],
    after: &[(String, Tensor)],
) -> Result<(f64, f64, f64)> {
    if before.len() != after.len() {
        return Err(Error::ShapeMismatch(
            "parameter lists of different lengths".into(),
        ));
    }
    let mut d_sq = 0.0;
    let mut g_sq = 0.0;
    for ((name_b, t_b), (name_a, t_a)) in before.iter().zip(after) {
        if name_b != name_a || t_b.shape() != t_a.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter mismatch: `{name_b}` vs `{name_a}`"
            )));
        }
        let sq: f64 = t_b
            .data()
            .iter()
            .zip(t_a.data())
            .map(|(b, a)| (a - b) * (a - b))
            .sum();
        if name_b.starts_with("d.") {
            d_sq += sq;
        } else {
            g_sq += sq;
        }
    }
    let (d, g) = (d_sq.sqrt(), g_sq.sqrt());
    Ok((d, g, d - g))
}

/// ‖z′ − z‖ and |f(z′) − f(z)| for one sample.
pub fn delta_z_diagnostics(model: &GanModel, z: &Tensor, z_prime: &Tensor) -> Result<(f64, f64)> {
    if z.shape() != z_prime.shape() {
        return Err(Error::ShapeMismatch(format!(
            "latents of shape {:?} vs {:?}",
            z.shape(),
            z_prime.shape()
        )));
    }
    let dz = z_prime.zip(z, |a, b| a - b)?;
    let z_leaf = Expr::input("z", &[model.latent_dim()]);
    let f = model.critic_value(&z_leaf)?;
    let mut env = model.env();
    env.bind("z", z.clone());
    let f0 = crate::eval::evaluate(&f, &env)?.item()?;
    env.bind("z", z_prime.clone());
    let f1 = crate::eval::evaluate(&f, &env)?.item()?;
    Ok((dz.norm(), (f1 - f0).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimiserState {
    Sgd,
    Adam {
        t: u64,
        /// First/second moment per parameter, in the owner's param order.
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

struct Optimiser {
    kind: OptimiserKind,
    lr: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

const ADAM_BETA1: f64 = 0.0;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimiser {
    fn new(kind: OptimiserKind, lr: f64, shapes: &[Vec<usize>]) -> Optimiser {
        let zeros: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        Optimiser {
            kind,
            lr,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        match self.kind {
            OptimiserKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p = p.zip(g, |pv, gv| pv - self.lr * gv).expect("same shape");
                }
            }
            OptimiserKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = m
                        .zip(g, |mv, gv| ADAM_BETA1 * mv + (1.0 - ADAM_BETA1) * gv)
                        .expect("same shape");
                    *v = v
                        .zip(g, |vv, gv| ADAM_BETA2 * vv + (1.0 - ADAM_BETA2) * gv * gv)
                        .expect("same shape");
                    let lr = self.lr;
                    let mh: Vec<f64> = m.data().iter().map(|x| x / bc1).collect();
                    let vh: Vec<f64> = v.data().iter().map(|x| x / bc2).collect();
                    let stepped: Vec<f64> = p
                        .data()
                        .iter()
                        .zip(mh.iter().zip(&vh))
                        .map(|(pv, (mv, vv))| pv - lr * mv / (vv.sqrt() + ADAM_EPS))
                        .collect();
                    *p = Tensor::new(p.shape().to_vec(), stepped).expect("finite update");
                }
            }
        }
    }

    fn state(&self) -> OptimiserState {
        match self.kind {
            OptimiserKind::Sgd => OptimiserState::Sgd,
            OptimiserKind::Adam => OptimiserState::Adam {
                t: self.t,
                m: self.m.iter().map(|t| t.data().to_vec()).collect(),
                v: self.v.iter().map(|t| t.data().to_vec()).collect(),
            },
        }
    }

    fn restore(&mut self, state: &OptimiserState) -> Result<()> {
        match (self.kind, state) {
            (OptimiserKind::Sgd, OptimiserState::Sgd) => Ok(()),
            (OptimiserKind::Adam, OptimiserState::Adam { t, m, v }) => {
                if m.len() != self.m.len() || v.len() != self.v.len() {
                    return Err(Error::ShapeMismatch(
                        "optimiser state does not match parameter count".into(),
                    ));
                }
                self.t = *t;
                for (slot, data) in self.m.iter_mut().zip(m) {
                    *slot = Tensor::new(slot.shape().to_vec(), data.clone())?;
                }
                for (slot, data) in self.v.iter_mut().zip(v) {
                    *slot = Tensor::new(slot.shape().to_vec(), data.clone())?;
                }
                Ok(())
            }
            _ => Err(Error::InvalidConfig(
                "optimiser state kind does not match the configured optimiser".into(),
            )),
        }
    }
}

/// Everything beyond the model needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub step: u64,
    pub rng: [u64; 4],
    pub opt_d: OptimiserState,
    pub opt_g: OptimiserState,
}

/// A compiled training loop over one model. The per-sample computation
/// graph (losses, regulariser, diagnostics and both players' parameter
/// gradients) is built and compiled once; each step rebinds z and x.
pub struct Trainer {
    model: GanModel,
    cfg: TrainConfig,
    session: Session,
    d_names: Vec<String>,
    g_names: Vec<String>,
    opt_d: Optimiser,
    opt_g: Optimiser,
    rng: Rng,
    step: u64,
    reference: GaussianSummary,
}

/// Root layout in the compiled session.
struct Roots {
    exprs: Vec<Expr>,
}

const ROOT_LD: usize = 0;
const ROOT_LG: usize = 1;
const ROOT_REG: usize = 2;
const ROOT_F0: usize = 3;
const ROOT_F1: usize = 4;
const ROOT_DZ: usize = 5;

impl Trainer {
    pub fn new(model: GanModel, cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        if model.data_dim() != cfg.data.dim() {
            return Err(Error::ShapeMismatch(format!(
                "model emits dimension {}, data distribution has {}",
                model.data_dim(),
                cfg.data.dim()
            )));
        }
        let d_names = model.discriminator_param_names();
        let g_names = model.generator_param_names();
        let roots = build_roots(&model, &cfg, &d_names, &g_names)?;
        let session = Session::compile(&roots.exprs);
        let d_shapes: Vec<Vec<usize>> = d_names
            .iter()
            .map(|n| model.get_param(n).expect("own param").shape().to_vec())
            .collect();
        let g_shapes: Vec<Vec<usize>> = g_names
            .iter()
            .map(|n| model.get_param(n).expect("own param").shape().to_vec())
            .collect();
        let reference = GaussianSummary::of_distribution(&cfg.data)?;
        Ok(Trainer {
            opt_d: Optimiser::new(cfg.optimiser, cfg.lr_d, &d_shapes),
            opt_g: Optimiser::new(cfg.optimiser, cfg.lr_g, &g_shapes),
            rng: Rng::seed_from(cfg.seed),
            step: 0,
            session,
            d_names,
            g_names,
            model,
            cfg,
            reference,
        })
    }

    pub fn restore(model: GanModel, cfg: TrainConfig, state: &TrainerState) -> Result<Trainer> {
        let mut trainer = Trainer::new(model, cfg)?;
        trainer.rng = Rng::restore(state.rng);
        trainer.step = state.step;
        trainer.opt_d.restore(&state.opt_d)?;
        trainer.opt_g.restore(&state.opt_g)?;
        Ok(trainer)
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            step: self.step,
            rng: self.rng.snapshot(),
            opt_d: self.opt_d.state(),
            opt_g: self.opt_g.state(),
        }
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn draw_batch(&mut self) -> Vec<(Tensor, Tensor)> {
        let dim = self.model.latent_dim();
        (0..self.cfg.batch_size)
            .map(|_| {
                let mut z = vec![0.0; dim];
                self.rng.fill_uniform_in(&mut z, -1.0, 1.0);
                let z = Tensor::new(vec![dim], z).expect("finite latent");
                let x = self.cfg.data.sample(&mut self.rng);
                (z, x)
            })
            .collect()
    }

    /// Run the compiled graph over a batch, averaging every root.
    fn batch_pass(&self, batch: &[(Tensor, Tensor)], env: &mut Environment) -> Result<BatchOut> {
        let n = batch.len() as f64;
        let n_grads = self.d_names.len() + self.g_names.len();
        let mut sums: Option<Vec<Tensor>> = None;
        let mut dz_norm_sum = 0.0;
        let mut df_abs_sum = 0.0;
        for (i, (z, x)) in batch.iter().enumerate() {
            env.bind("z", z.clone());
            env.bind("x", x.clone());
            let values = self.session.run(env).map_err(|e| Error::TrainingAborted {
                step: self.step,
                reason: format!("sample {i}: {e} (z = {:?}, x = {:?})", z.data(), x.data()),
            })?;
            dz_norm_sum += values[ROOT_DZ].norm();
            df_abs_sum += (values[ROOT_F1].item()? - values[ROOT_F0].item()?).abs();
            match &mut sums {
                None => sums = Some(values),
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(values) {
                        *a = a.add(&v)?;
                    }
                }
            }
        }
        let sums = sums.expect("batch is non-empty");
        let scale = 1.0 / n;
        let mean = |t: &Tensor| t.scale(scale);
        let fixed = 6 + usize::from(self.curvature_root().is_some());
        let mut grads = Vec::with_capacity(n_grads);
        for t in &sums[fixed..] {
            grads.push(mean(t));
        }
        Ok(BatchOut {
            loss_d: mean(&sums[ROOT_LD]).item()?,
            loss_g: mean(&sums[ROOT_LG]).item()?,
            reg: mean(&sums[ROOT_REG]).item()?,
            dz_norm: dz_norm_sum * scale,
            df_abs: df_abs_sum * scale,
            curvature: self
                .curvature_root()
                .map(|slot| sums[slot].item().map(|v| v * scale))
                .transpose()?,
            grads,
        })
    }

    fn curvature_root(&self) -> Option<usize> {
        match &self.cfg.latent {
            Some(cfg) if cfg.method == crate::latent::LatentMethod::Ngd => Some(6),
            _ => None,
        }
    }

    /// One full training step over a fresh batch. Deterministic per seed.
    pub fn train_step(&mut self) -> Result<MetricsRecord> {
        let batch = self.draw_batch();
        let before = self.model.params().to_vec();
        let mut env = self.model.env();

        let out = self.batch_pass(&batch, &mut env)?;
        let (d_grads, g_grads) = out.grads.split_at(self.d_names.len());
        self.check_finite_grads(d_grads, g_grads)?;

        match self.cfg.update_mode {
            UpdateMode::Simultaneous => {
                self.apply_updates(d_grads.to_vec(), g_grads.to_vec())?;
            }
            UpdateMode::Alternating => {
                self.apply_d(d_grads.to_vec())?;
                let mut env = self.model.env();
                let second = self.batch_pass(&batch, &mut env)?;
                let (_, g2) = second.grads.split_at(self.d_names.len());
                self.apply_g(g2.to_vec())?;
            }
        }

        let (dtheta_d, dtheta_g, dtheta_diff) =
            update_norm_diagnostics(&before, self.model.params())?;
        self.step += 1;

        let mut record = MetricsRecord {
            step: self.step,
            loss_d: out.loss_d,
            loss_g: out.loss_g,
            reg: out.reg,
            dz_norm: out.dz_norm,
            df_abs: out.df_abs,
            dtheta_d,
            dtheta_g,
            dtheta_diff,
            curvature_mean: out.curvature,
            proxy_fid: None,
            modes_covered: None,
            hq_fraction: None,
        };

        if self.cfg.coverage_interval > 0 && self.step.is_multiple_of(self.cfg.coverage_interval) {
            let (fid, modes, hq) = self.coverage_metrics()?;
            record.proxy_fid = Some(fid);
            record.modes_covered = Some(modes);
            record.hq_fraction = Some(hq);
        }
        Ok(record)
    }

    /// Coverage sampling runs on a stream derived from the master seed and
    /// the step counter so it never perturbs the training draw sequence.
    pub fn coverage_metrics(&self) -> Result<(f64, usize, f64)> {
        let seed = Rng::derive(self.cfg.seed ^ 0x5eed_c0de, self.step).next_u64();
        let latent = self.cfg.latent.unwrap_or(LatentOptConfig {
            method: crate::latent::LatentMethod::Gd,
            alpha: 0.0,
            beta: 1.0,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        });
        let samples = generate_samples(
            &self.model,
            self.cfg.coverage_samples,
            1.0,
            latent.eval_steps,
            &latent,
            seed,
        )?;
        let summary = GaussianSummary::from_samples(&samples)?;
        let fid = gaussian_frechet(&summary, &self.reference)?;
        let (modes, hq) = mode_coverage(
            &samples,
            &self.cfg.data.mode_centers(),
            self.cfg.mode_radius,
        )?;
        Ok((fid, modes, hq))
    }

    fn check_finite_grads(&self, d: &[Tensor], g: &[Tensor]) -> Result<()> {
        for (names, grads) in [(&self.d_names, d), (&self.g_names, g)] {
            for (name, grad) in names.iter().zip(grads) {
                if !grad.all_finite() {
                    return Err(Error::TrainingAborted {
                        step: self.step,
                        reason: format!("non-finite gradient for `{name}`"),
                    });
                }
            }
        }
        Ok(())
    }

    fn apply_updates(&mut self, d_grads: Vec<Tensor>, g_grads: Vec<Tensor>) -> Result<()> {
        self.apply_d(d_grads)?;
        self.apply_g(g_grads)
    }

    fn apply_d(&mut self, grads: Vec<Tensor>) -> Result<()> {
        let mut tensors: Vec<Tensor> = self
            .d_names
            .iter()
            .map(|n| self.model.get_param(n).expect("own param").clone())
            .collect();
        self.opt_d.apply(&mut tensors, &grads);
        for (name, t) in self.d_names.clone().into_iter().zip(tensors) {
            self.model.set_param(&name, t)?;
        }
        Ok(())
    }

    fn apply_g(&mut self, grads: Vec<Tensor>) -> Result<()> {
        let mut tensors: Vec<Tensor> = self
            .g_names
            .iter()
            .map(|n| self.model.get_param(n).expect("own param").clone())
            .collect();
        self.opt_g.apply(&mut tensors, &grads);
        for (name, t) in self.g_names.clone().into_iter().zip(tensors) {
            self.model.set_param(&name, t)?;
        }
        Ok(())
    }
}

struct BatchOut {
    loss_d: f64,
    loss_g: f64,
    reg: f64,
    dz_norm: f64,
    df_abs: f64,
    curvature: Option<f64>,
    grads: Vec<Tensor>,
}

/// Assemble the per-sample graph: losses at the refined latent, the
/// regulariser on the pre-clip step, diagnostics, and adjoints for both
/// parameter groups.
fn build_roots(
    model: &GanModel,
    cfg: &TrainConfig,
    d_names: &[String],
    g_names: &[String],
) -> Result<Roots> {
    let z = Expr::input("z", &[model.latent_dim()]);
    let x = Expr::input("x", &[model.data_dim()]);
    let plain_critic = model.critic_value(&z)?;

    let (z_refined, delta_z, curvature) = match &cfg.latent {
        Some(latent) => {
            let gate = ParamGate {
                gate_generator: cfg.ablation.block_g_term,
                gate_discriminator: cfg.ablation.block_d_term,
            };
            let inner_critic = model.critic_gated(&z, gate)?;
            let refined = refine_latent_expr(&inner_critic, "z", latent, latent.steps)?;
            (refined.z_refined, refined.delta_z, refined.curvature)
        }
        None => (
            z.clone(),
            Expr::constant(Tensor::zeros(&[model.latent_dim()])),
            None,
        ),
    };

    let mut map = std::collections::HashMap::new();
    map.insert("z".to_string(), z_refined.clone());
    let d_fake = substitute(&plain_critic, &map)?;
    let d_real = model.discriminate(&x)?;
    let (l_d, l_g) = losses(cfg.loss, &d_real, &d_fake)?;
    let w_r = cfg.latent.map_or(0.0, |l| l.w_r);
    let reg = latent_regulariser(&delta_z, w_r)?;
    let total_d = l_d.add(&reg)?;
    let total_g = l_g.add(&reg)?;

    let dz_disp = z_refined.sub(&z)?;

    let mut exprs = vec![l_d, l_g, reg, plain_critic.clone(), d_fake, dz_disp];
    if let Some(curv) = curvature {
        exprs.push(curv);
    }
    let d_refs: Vec<&str> = d_names.iter().map(String::as_str).collect();
    let g_refs: Vec<&str> = g_names.iter().map(String::as_str).collect();
    exprs.extend(gradient_exprs(&total_d, &d_refs)?);
    exprs.extend(gradient_exprs(&total_g, &g_refs)?);
    Ok(Roots { exprs })
}
