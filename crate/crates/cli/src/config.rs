//! The run configuration schema: human-editable JSON with nesting, strict
//! about unknown keys, resolved into the core config types before any run.

use serde::{Deserialize, Serialize};

use logan_core::data::DataDistribution;
use logan_core::latent::{LatentMethod, LatentOptConfig};
use logan_core::models::{init_model, GanModel, LossKind, MlpSpec};
use logan_core::train::{AblationFlags, OptimiserKind, TrainConfig, UpdateMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_data")]
    pub data: DataDistribution,
    #[serde(default)]
    pub train: TrainSection,
    /// `null` disables latent refinement (vanilla baseline).
    #[serde(default = "default_latent")]
    pub latent: Option<LatentSection>,
    #[serde(default)]
    pub ablation: AblationFlags,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_data() -> DataDistribution {
    DataDistribution::GaussianRing {
        modes: 8,
        radius: 2.0,
        std: 0.02,
    }
}

fn default_latent() -> Option<LatentSection> {
    Some(LatentSection::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent_dim: 16,
            data_dim: 2,
            gen_hidden: vec![24, 24],
            disc_hidden: vec![24, 24],
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub total_steps: u64,
    pub optimiser: OptimiserKind,
    pub lr_d: f64,
    pub lr_g: f64,
    pub loss: LossKind,
    pub update_mode: UpdateMode,
    /// Write one metrics row every this many steps.
    pub metric_interval: u64,
    /// Write a checkpoint every this many steps (0 = only initial/final).
    pub checkpoint_interval: u64,
    /// Evaluate proxy-FID / coverage every this many steps (0 = never).
    pub coverage_interval: u64,
    pub coverage_samples: usize,
    pub mode_radius: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 32,
            total_steps: 5000,
            optimiser: OptimiserKind::Adam,
            lr_d: 1e-3,
            lr_g: 1e-3,
            loss: LossKind::Wasserstein,
            update_mode: UpdateMode::Simultaneous,
            metric_interval: 1,
            checkpoint_interval: 0,
            coverage_interval: 500,
            coverage_samples: 512,
            mode_radius: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    /// α=0.9, β=0.1, w_r=0.1, c=0.8 — the small-model grid optimum.
    Small,
    /// α=0.9, β=5.0, w_r=300.0, c=0.5 — the large-model grid optimum.
    Large,
}

/// Latent settings: start from a named profile and override field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LatentSection {
    #[serde(default)]
    pub profile: Option<ProfileName>,
    #[serde(default)]
    pub method: Option<LatentMethod>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub w_r: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub steps: Option<u32>,
    #[serde(default)]
    pub eval_steps: Option<u32>,
}

impl LatentSection {
    pub fn resolve(&self) -> LatentOptConfig {
        let mut cfg = match self.profile.unwrap_or(ProfileName::Small) {
            ProfileName::Small => LatentOptConfig::small_profile(),
            ProfileName::Large => LatentOptConfig::large_profile(),
        };
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.w_r {
            cfg.w_r = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.eval_steps {
            cfg.eval_steps = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub samples: usize,
    pub truncation: Vec<f64>,
    pub eval_steps: Vec<u32>,
    pub mode_radius: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            samples: 512,
            truncation: vec![1.0, 0.8, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02],
            eval_steps: vec![0, 1, 5, 10, 20, 30],
            mode_radius: 0.4,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| anyhow::anyhow!("config schema error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        RunConfig::from_json(&text)
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            anyhow::bail!("run_id must be a non-empty path-safe name");
        }
        self.data.validate()?;
        if let Some(latent) = &self.latent {
            latent.resolve().validate()?;
        }
        self.to_train_config().validate()?;
        self.build_model(self.seed).map(|_| ())?;
        for &s in &self.eval.truncation {
            if !(s > 0.0 && s <= 1.0) {
                anyhow::bail!("truncation scales must lie in (0, 1], got {s}");
            }
        }
        Ok(())
    }

    pub fn gen_spec(&self) -> anyhow::Result<MlpSpec> {
        let mut widths = vec![self.model.latent_dim];
        widths.extend(&self.model.gen_hidden);
        widths.push(self.model.data_dim);
        Ok(MlpSpec::new(widths, self.model.leaky_slope)?)
    }

    pub fn disc_spec(&self) -> anyhow::Result<MlpSpec> {
        let mut widths = vec![self.model.data_dim];
        widths.extend(&self.model.disc_hidden);
        widths.push(1);
        Ok(MlpSpec::new(widths, self.model.leaky_slope)?)
    }

    /// Model parameters are drawn from a stream derived from the run seed,
    /// so the training draw sequence starts identically regardless of
    /// architecture size.
    pub fn build_model(&self, seed: u64) -> anyhow::Result<GanModel> {
        Ok(init_model(
            self.gen_spec()?,
            self.disc_spec()?,
            self.model.latent_dim,
            self.model.data_dim,
            logan_core::Rng::derive(seed, 0x6d0de1).next_u64(),
        )?)
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            total_steps: self.train.total_steps,
            optimiser: self.train.optimiser,
            lr_d: self.train.lr_d,
            lr_g: self.train.lr_g,
            loss: self.train.loss,
            latent: self.latent.as_ref().map(LatentSection::resolve),
            ablation: self.ablation,
            update_mode: self.train.update_mode,
            seed: self.seed,
            data: self.data.clone(),
            coverage_interval: self.train.coverage_interval,
            coverage_samples: self.train.coverage_samples,
            mode_radius: self.train.mode_radius,
        }
    }
}
