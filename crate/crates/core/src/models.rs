//! Small MLP generator/discriminator pairs and their losses.
//!
//! The composite critic value f(z) = D(G(z)) is the scalar every other
//! module differentiates: the latent step ascends it, the trainer
//! back-propagates through it twice, and the game-dynamics checks take its
//! mixed second derivatives.

use crate::error::{Error, Result};
use crate::eval::Environment;
use crate::expr::Expr;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// max(slope·x, x); the default for adversarial models.
    LeakyRelu { slope: f64 },
    /// Smooth alternative used by curvature-sensitive dynamics checks,
    /// where piecewise-linear nets have almost-everywhere zero second
    /// derivatives and would make order-of-convergence sweeps degenerate.
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Full width chain, input through output.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, slope: f64) -> Result<Self> {
        let spec = MlpSpec {
            widths,
            activation: Activation::LeakyRelu { slope },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_tanh(widths: Vec<usize>) -> Result<Self> {
        let spec = MlpSpec {
            widths,
            activation: Activation::Tanh,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "MLP needs at least one hidden layer, got widths {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidConfig("zero-width MLP layer".into()));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "leaky-relu slope must lie in (0, 1), got {slope}"
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Which parameter groups to wrap in stop-gradient when building an
/// expression. Used by the ablations that sever the second-order paths
/// through the latent update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParamGate {
    pub gate_generator: bool,
    pub gate_discriminator: bool,
}

impl ParamGate {
    pub fn open() -> Self {
        ParamGate::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Wasserstein,
    Hinge,
}

/// Generator and discriminator parameter sets with their architecture.
/// Parameters are held in a canonical order (generator layers then
/// discriminator layers) so norms, checkpoints and updates are stable.
#[derive(Debug, Clone)]
pub struct GanModel {
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
    latent_dim: usize,
    data_dim: usize,
    params: Vec<(String, Tensor)>,
}

/// Fresh parameters: zero-mean uniform weights scaled by 1/√fan-in, zero
/// biases, and no bias on the final generator layer so that zero weights
/// give exactly zero output. Deterministic per seed.
pub fn init_model(
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
    latent_dim: usize,
    data_dim: usize,
    seed: u64,
) -> Result<GanModel> {
    gen_spec.validate()?;
    disc_spec.validate()?;
    if gen_spec.input_width() != latent_dim {
        return Err(Error::InvalidConfig(format!(
            "generator input width {} != latent dimension {latent_dim}",
            gen_spec.input_width()
        )));
    }
    if gen_spec.output_width() != data_dim {
        return Err(Error::InvalidConfig(format!(
            "generator output width {} != data dimension {data_dim}",
            gen_spec.output_width()
        )));
    }
    if disc_spec.input_width() != data_dim {
        return Err(Error::InvalidConfig(format!(
            "discriminator input width {} != generator output width {data_dim}",
            disc_spec.input_width()
        )));
    }
    if disc_spec.output_width() != 1 {
        return Err(Error::InvalidConfig(format!(
            "discriminator output width must be 1, got {}",
            disc_spec.output_width()
        )));
    }

    let mut rng = Rng::seed_from(seed);
    let mut params = Vec::new();
    init_mlp_params(&mut params, "g", &gen_spec, false, &mut rng);
    init_mlp_params(&mut params, "d", &disc_spec, true, &mut rng);
    Ok(GanModel {
        gen_spec,
        disc_spec,
        latent_dim,
        data_dim,
        params,
    })
}

fn init_mlp_params(
    params: &mut Vec<(String, Tensor)>,
    prefix: &str,
    spec: &MlpSpec,
    bias_on_last: bool,
    rng: &mut Rng,
) {
    for layer in 0..spec.layer_count() {
        let fan_in = spec.widths[layer];
        let fan_out = spec.widths[layer + 1];
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut w = vec![0.0; fan_out * fan_in];
        rng.fill_uniform_in(&mut w, -bound, bound);
        params.push((
            format!("{prefix}.w{layer}"),
            Tensor::matrix(fan_out, fan_in, w).expect("finite init"),
        ));
        let is_last = layer + 1 == spec.layer_count();
        if !is_last || bias_on_last {
            params.push((format!("{prefix}.b{layer}"), Tensor::zeros(&[fan_out])));
        }
    }
}

impl GanModel {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn gen_spec(&self) -> &MlpSpec {
        &self.gen_spec
    }

    pub fn disc_spec(&self) -> &MlpSpec {
        &self.disc_spec
    }

    /// All parameters in canonical order.
    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn generator_param_names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n.starts_with("g."))
            .collect()
    }

    pub fn discriminator_param_names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n.starts_with("d."))
            .collect()
    }

    pub fn get_param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Unbound(name.to_string()))?;
        if slot.1.shape() != value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter `{name}`: {:?} vs {:?}",
                slot.1.shape(),
                value.shape()
            )));
        }
        slot.1 = value;
        Ok(())
    }

    /// Bind every parameter into an environment.
    pub fn bind_params(&self, env: &mut Environment) {
        for (name, t) in &self.params {
            env.bind(name.clone(), t.clone());
        }
    }

    pub fn env(&self) -> Environment {
        let mut env = Environment::new();
        self.bind_params(&mut env);
        env
    }

    fn mlp_expr(
        &self,
        prefix: &str,
        spec: &MlpSpec,
        bias_on_last: bool,
        gated: bool,
        mut h: Expr,
    ) -> Result<Expr> {
        let maybe_gate = |e: Expr| if gated { e.stop_grad() } else { e };
        for layer in 0..spec.layer_count() {
            let fan_in = spec.widths[layer];
            let fan_out = spec.widths[layer + 1];
            let w = maybe_gate(Expr::param(
                format!("{prefix}.w{layer}"),
                &[fan_out, fan_in],
            ));
            h = w.matvec(&h)?;
            let is_last = layer + 1 == spec.layer_count();
            if !is_last || bias_on_last {
                let b = maybe_gate(Expr::param(format!("{prefix}.b{layer}"), &[fan_out]));
                h = h.add(&b)?;
            }
            if !is_last {
                h = match spec.activation {
                    Activation::LeakyRelu { slope } => h.leaky_relu(slope)?,
                    Activation::Tanh => h.tanh(),
                };
            }
        }
        Ok(h)
    }

    /// x = G(z) as a differentiable expression.
    pub fn generate(&self, z: &Expr) -> Result<Expr> {
        self.generate_gated(z, ParamGate::open())
    }

    pub fn generate_gated(&self, z: &Expr, gate: ParamGate) -> Result<Expr> {
        if z.shape() != [self.latent_dim] {
            return Err(Error::ShapeMismatch(format!(
                "latent of shape {:?}, expected [{}]",
                z.shape(),
                self.latent_dim
            )));
        }
        self.mlp_expr("g", &self.gen_spec, false, gate.gate_generator, z.clone())
    }

    /// D(x) as a differentiable expression (output shape [1]).
    pub fn discriminate(&self, x: &Expr) -> Result<Expr> {
        self.discriminate_gated(x, ParamGate::open())
    }

    pub fn discriminate_gated(&self, x: &Expr, gate: ParamGate) -> Result<Expr> {
        if x.shape() != [self.data_dim] {
            return Err(Error::ShapeMismatch(format!(
                "data of shape {:?}, expected [{}]",
                x.shape(),
                self.data_dim
            )));
        }
        self.mlp_expr(
            "d",
            &self.disc_spec,
            true,
            gate.gate_discriminator,
            x.clone(),
        )
    }

    /// The composite critic f(z) = D(G(z)), scalar-shaped.
    pub fn critic_value(&self, z: &Expr) -> Result<Expr> {
        self.critic_gated(z, ParamGate::open())
    }

    pub fn critic_gated(&self, z: &Expr, gate: ParamGate) -> Result<Expr> {
        let x = self.generate_gated(z, gate)?;
        self.discriminate_gated(&x, gate)
    }
}

fn min_zero(e: &Expr) -> Expr {
    // min(0, x) = -relu(-x)
    e.neg().relu().neg()
}

/// Per-sample losses from the critic's scores on a real and a generated
/// sample. Wasserstein: L_D = d_fake - d_real, L_G = -d_fake.
/// Hinge: L_D = -min(0, -1 + d_real) - min(0, -1 - d_fake), L_G = -d_fake.
pub fn losses(kind: LossKind, d_real: &Expr, d_fake: &Expr) -> Result<(Expr, Expr)> {
    if !d_real.is_scalar() || !d_fake.is_scalar() {
        return Err(Error::NonScalar(if d_real.is_scalar() {
            d_fake.shape().to_vec()
        } else {
            d_real.shape().to_vec()
        }));
    }
    let l_g = d_fake.neg();
    let l_d = match kind {
        LossKind::Wasserstein => d_fake.sub(d_real)?,
        LossKind::Hinge => {
            let real_margin = min_zero(&Expr::scalar(-1.0).add(d_real)?).neg();
            let fake_margin = min_zero(&Expr::scalar(-1.0).sub(d_fake)?).neg();
            real_margin.add(&fake_margin)?
        }
    };
    Ok((l_d, l_g))
}
