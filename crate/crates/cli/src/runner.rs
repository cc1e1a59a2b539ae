//! Run orchestration: drive the trainer against the filesystem layout
//!
//! ```text
//! <out>/<run_id>/
//!   config.json            canonical resolved configuration
//!   metrics.csv            one row per recorded step
//!   checkpoints/*.ckpt     initial, periodic, final
//!   samples.svg            final scatter against the data distribution
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use logan_core::data::DataDistribution;
use logan_core::metrics::{
    eval_latent_steps_sweep, generate_samples, truncation_sweep, EvalStepsPoint,
    TruncationCurvePoint,
};
use logan_core::models::GanModel;
use logan_core::train::Trainer;
use logan_core::{Error as CoreError, Rng};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::csvlog;
use crate::svg;

/// Exit codes: 2 for configuration/schema problems, 3 for a run aborted on
/// a non-finite loss, 1 for anything else.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;

#[derive(Debug)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub steps_done: u64,
    pub proxy_fid: Option<f64>,
    pub modes_covered: Option<usize>,
    pub hq_fraction: Option<f64>,
}

pub fn run_dir(out_root: &Path, run_id: &str) -> PathBuf {
    out_root.join(run_id)
}

fn scatter_samples(
    model: &GanModel,
    data: &DataDistribution,
    seed: u64,
    n: usize,
) -> Result<String> {
    let latent = logan_core::latent::LatentOptConfig::small_profile();
    let generated = generate_samples(model, n, 1.0, 0, &latent, seed)?;
    let mut rng = Rng::derive(seed, 0xda7a);
    let data_points: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let s = data.sample(&mut rng);
            (s.data()[0], s.data()[1])
        })
        .collect();
    let gen_points: Vec<(f64, f64)> = generated
        .iter()
        .map(|s| (s.data()[0], *s.data().get(1).unwrap_or(&0.0)))
        .collect();
    Ok(svg::scatter(
        "generated samples vs data",
        &[
            svg::Series {
                label: "data",
                color: "#9aa0a6",
                points: data_points,
            },
            svg::Series {
                label: "generated",
                color: "#c0392b",
                points: gen_points,
            },
        ],
    ))
}

/// Train according to `cfg`, writing every artifact under the run
/// directory. `resume` continues from a checkpoint, appending to the
/// existing metrics log.
pub fn run_training(cfg: &RunConfig, out_root: &Path, resume: Option<&Path>) -> Result<RunSummary> {
    let dir = run_dir(out_root, &cfg.run_id);
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::write(dir.join("config.json"), cfg.to_canonical_json())?;

    let train_cfg = cfg.to_train_config();
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            Trainer::restore(ckpt.model, train_cfg, &ckpt.state)?
        }
        None => Trainer::new(cfg.build_model(cfg.seed)?, train_cfg)?,
    };

    let metrics_path = dir.join("metrics.csv");
    let mut metrics_file = if resume.is_some() && metrics_path.exists() {
        fs::OpenOptions::new().append(true).open(&metrics_path)?
    } else {
        let mut f = fs::File::create(&metrics_path)?;
        f.write_all(csvlog::header_line().as_bytes())?;
        f
    };

    if resume.is_none() {
        checkpoint::save(
            &dir.join("checkpoints/initial.ckpt"),
            trainer.model(),
            &trainer.state(),
        )?;
    }

    let total = cfg.train.total_steps;
    let mut last = None;
    while trainer.step_count() < total {
        let record = match trainer.train_step() {
            Ok(r) => r,
            Err(CoreError::TrainingAborted { step, reason }) => {
                let dump = dir.join("abort_dump.txt");
                fs::write(&dump, format!("aborted at step {step}\nreason: {reason}\n"))?;
                return Err(
                    anyhow::Error::new(CoreError::TrainingAborted { step, reason })
                        .context(format!("diagnostics written to {}", dump.display())),
                );
            }
            Err(other) => return Err(other.into()),
        };
        let step = record.step;
        if cfg.train.metric_interval > 0 && step % cfg.train.metric_interval == 0 {
            metrics_file.write_all(csvlog::record_line(&record).as_bytes())?;
        }
        if cfg.train.checkpoint_interval > 0 && step % cfg.train.checkpoint_interval == 0 {
            checkpoint::save(
                &dir.join(format!("checkpoints/step_{step:06}.ckpt")),
                trainer.model(),
                &trainer.state(),
            )?;
        }
        last = Some(record);
    }
    metrics_file.flush()?;
    checkpoint::save(
        &dir.join("checkpoints/final.ckpt"),
        trainer.model(),
        &trainer.state(),
    )?;

    if cfg.data.dim() == 2 {
        let svg_text = scatter_samples(
            trainer.model(),
            &cfg.data,
            Rng::derive(cfg.seed, 0x5ca7).next_u64(),
            cfg.eval.samples.min(2048),
        )?;
        fs::write(dir.join("samples.svg"), svg_text)?;
    }

    let (fid, modes, hq) = trainer.coverage_metrics()?;
    let _ = last;
    Ok(RunSummary {
        run_dir: dir,
        steps_done: trainer.step_count(),
        proxy_fid: Some(fid),
        modes_covered: Some(modes),
        hq_fraction: Some(hq),
    })
}

pub struct EvalArtifacts {
    pub truncation: Vec<TruncationCurvePoint>,
    pub eval_steps: Vec<EvalStepsPoint>,
}

/// Evaluate a checkpointed model: truncation curve plus the latent-step
/// sweep, each as CSV and SVG.
pub fn run_eval(cfg: &RunConfig, ckpt_path: &Path, out_root: &Path) -> Result<EvalArtifacts> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let dir = run_dir(out_root, &cfg.run_id);
    fs::create_dir_all(&dir)?;
    let latent = cfg
        .latent
        .as_ref()
        .map(|l| l.resolve())
        .unwrap_or_else(logan_core::latent::LatentOptConfig::small_profile);

    let truncation = truncation_sweep(
        &ckpt.model,
        &cfg.data,
        &cfg.eval.truncation,
        cfg.eval.samples,
        &latent,
        cfg.eval.mode_radius,
        cfg.seed,
    )?;
    let mut text = String::from("s,proxy_fid,mode_coverage,hq_fraction\n");
    for p in &truncation {
        text.push_str(&format!(
            "{},{},{},{}\n",
            p.s, p.proxy_fid, p.modes_hit, p.hq_fraction
        ));
    }
    fs::write(dir.join("truncation.csv"), text)?;
    let curve: Vec<(f64, f64)> = truncation.iter().map(|p| (p.s, p.proxy_fid)).collect();
    fs::write(
        dir.join("truncation.svg"),
        svg::curves(
            "proxy-FID vs truncation scale",
            &[svg::Series {
                label: "proxy-FID",
                color: "#2980b9",
                points: curve,
            }],
        ),
    )?;

    let eval_steps = eval_latent_steps_sweep(
        &ckpt.model,
        &cfg.data,
        &cfg.eval.eval_steps,
        cfg.eval.samples,
        &latent,
        cfg.eval.mode_radius,
        cfg.seed,
    )?;
    let mut text = String::from("steps,proxy_fid,mode_coverage,hq_fraction,ascent_fraction\n");
    for p in &eval_steps {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            p.steps, p.proxy_fid, p.modes_hit, p.hq_fraction, p.ascent_fraction
        ));
    }
    fs::write(dir.join("eval_steps.csv"), text)?;
    let curve: Vec<(f64, f64)> = eval_steps
        .iter()
        .map(|p| (p.steps as f64, p.proxy_fid))
        .collect();
    fs::write(
        dir.join("eval_steps.svg"),
        svg::curves(
            "proxy-FID vs evaluation refinement steps",
            &[svg::Series {
                label: "proxy-FID",
                color: "#27ae60",
                points: curve,
            }],
        ),
    )?;

    Ok(EvalArtifacts {
        truncation,
        eval_steps,
    })
}

/// One grid cell: base config with latent overrides applied and a derived
/// seed mixed from the cell index.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub w_r: Option<f64>,
    pub c: Option<f64>,
    pub seed_axis: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub w_r: Option<Vec<f64>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    #[serde(default)]
    pub grid: GridSection,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = serde_json::from_str(text)
            .map_err(|e| anyhow::anyhow!("sweep config schema error: {e}"))?;
        cfg.base.validate()?;
        Ok(cfg)
    }

    /// Cells in row-major order over (alpha, beta, w_r, c, seeds). The
    /// cell's run seed is `Rng::derive(seed_axis, cell_index)`, so cells
    /// never share random state.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        let unit_f = |axis: &Option<Vec<f64>>| -> Vec<Option<f64>> {
            match axis {
                Some(values) => values.iter().copied().map(Some).collect(),
                None => vec![None],
            }
        };
        let alphas = unit_f(&self.grid.alpha);
        let betas = unit_f(&self.grid.beta);
        let wrs = unit_f(&self.grid.w_r);
        let cs = unit_f(&self.grid.c);
        let seeds: Vec<u64> = self.grid.seeds.clone().unwrap_or(vec![self.base.seed]);

        let touches_latent = [
            &self.grid.alpha,
            &self.grid.beta,
            &self.grid.w_r,
            &self.grid.c,
        ]
        .iter()
        .any(|axis| axis.is_some());
        if touches_latent && self.base.latent.is_none() {
            anyhow::bail!("grid varies latent settings but the base config disables them");
        }

        let mut cells = Vec::new();
        let mut index = 0usize;
        for &alpha in &alphas {
            for &beta in &betas {
                for &w_r in &wrs {
                    for &c in &cs {
                        for &seed_axis in &seeds {
                            let mut config = self.base.clone();
                            if let Some(latent) = config.latent.as_mut() {
                                if alpha.is_some() {
                                    latent.alpha = alpha;
                                }
                                if beta.is_some() {
                                    latent.beta = beta;
                                }
                                if w_r.is_some() {
                                    latent.w_r = w_r;
                                }
                                if c.is_some() {
                                    latent.c = c;
                                }
                            }
                            config.seed = Rng::derive(seed_axis, index as u64).next_u64();
                            config.run_id = format!("cell_{index:04}");
                            config.validate()?;
                            cells.push(SweepCell {
                                index,
                                alpha,
                                beta,
                                w_r,
                                c,
                                seed_axis,
                                config,
                            });
                            index += 1;
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: SweepCell,
    pub result: std::result::Result<RunSummary, String>,
}

/// Run every cell (optionally across threads), then write one aggregate
/// CSV sorted by proxy-FID with failed cells at the end.
pub fn run_sweep(cfg: &SweepConfig, out_root: &Path, threads: usize) -> Result<PathBuf> {
    let cells = cfg.cells()?;
    let sweep_dir = out_root.join(format!("{}_sweep", cfg.base.run_id));
    fs::create_dir_all(&sweep_dir)?;

    let outcomes = run_cells(cells, &sweep_dir, threads.max(1));

    let mut rows: Vec<&CellOutcome> = outcomes.iter().collect();
    rows.sort_by(|a, b| {
        let fid = |o: &CellOutcome| match &o.result {
            Ok(s) => s.proxy_fid.unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        };
        fid(a)
            .partial_cmp(&fid(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cell.index.cmp(&b.cell.index))
    });
    let mut text =
        String::from("cell,alpha,beta,w_r,c,seed,proxy_fid,mode_coverage,hq_fraction,status\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in rows {
        match &o.result {
            Ok(s) => text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},ok\n",
                o.cell.index,
                opt(o.cell.alpha),
                opt(o.cell.beta),
                opt(o.cell.w_r),
                opt(o.cell.c),
                o.cell.config.seed,
                opt(s.proxy_fid),
                s.modes_covered.map(|m| m.to_string()).unwrap_or_default(),
                opt(s.hq_fraction),
            )),
            Err(e) => text.push_str(&format!(
                "{},{},{},{},{},{},,,,failed: {}\n",
                o.cell.index,
                opt(o.cell.alpha),
                opt(o.cell.beta),
                opt(o.cell.w_r),
                opt(o.cell.c),
                o.cell.config.seed,
                e.replace(['\n', ','], ";"),
            )),
        }
    }
    let path = sweep_dir.join("sweep.csv");
    fs::write(&path, text)?;
    Ok(path)
}

fn run_cells(cells: Vec<SweepCell>, sweep_dir: &Path, threads: usize) -> Vec<CellOutcome> {
    if threads <= 1 {
        return cells
            .into_iter()
            .map(|cell| run_one_cell(cell, sweep_dir))
            .collect();
    }
    let queue = std::sync::Mutex::new(cells.into_iter().collect::<std::collections::VecDeque<_>>());
    let outcomes = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let Some(cell) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                let outcome = run_one_cell(cell, sweep_dir);
                outcomes.lock().expect("outcome lock").push(outcome);
            });
        }
    });
    let mut out = outcomes.into_inner().expect("threads joined");
    out.sort_by_key(|o| o.cell.index);
    out
}

fn run_one_cell(cell: SweepCell, sweep_dir: &Path) -> CellOutcome {
    let result = run_training(&cell.config, sweep_dir, None).map_err(|e| format!("{e:#}"));
    CellOutcome { cell, result }
}

/// Resolve the output root: `--out`, else LOGAN_LAB_OUT, else ./logan-runs.
pub fn resolve_out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os("LOGAN_LAB_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("logan-runs"))
    })
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
