use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use logan_core::dynamics::{simulate_dynamics, DynamicsMethod, Game};
use logan_core::validate::run_all_checks;
use logan_core::{Environment, Expr, Tensor};

use logan_cli::config::RunConfig;
use logan_cli::runner::{self, resolve_out_root, EXIT_ABORTED, EXIT_CONFIG};
use logan_cli::svg;

/// Desk-scale laboratory for latent-optimised adversarial training.
///
/// The default output root is `--out`, then the LOGAN_LAB_OUT environment
/// variable, then ./logan-runs.
#[derive(Parser)]
#[command(name = "logan-lab", version, about)]
struct Cli {
    /// Worker threads for independent units of work (sweep cells). A single
    /// training run is always sequential, so 1 keeps everything on one
    /// deterministic thread.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint instead of initialising fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Truncation curve and evaluation-time latent-step sweep for a
    /// checkpointed model.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a hyper-parameter grid of independent training cells.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle and property battery; non-zero exit on any failure.
    Check,
    /// Simulate two-player (or latent three-player) dynamics and emit a
    /// trajectory CSV plus a phase portrait.
    Game {
        /// bilinear | potential | logan-toy
        #[arg(long, conflicts_with = "quad")]
        game: Option<String>,
        /// Inline quadratic coefficients a1,b1,c1,a2,b2,c2 for losses
        /// L1 = a1·x² + b1·x·y + c1·y², L2 = a2·x² + b2·x·y + c2·y².
        #[arg(long)]
        quad: Option<String>,
        /// simgrad | sga | unrolled | logan
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Adjustment coefficient for the sga method.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Latent step size for the logan method.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        #[arg(long, default_value_t = 1.0)]
        y0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            failure.code
        }
    };
    ExitCode::from(code)
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: anyhow::Error) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            error,
        }
    }

    fn classify(error: anyhow::Error) -> Failure {
        let code = if error.chain().any(|c| {
            matches!(
                c.downcast_ref(),
                Some(logan_core::Error::TrainingAborted { .. })
            )
        }) {
            EXIT_ABORTED
        } else {
            1
        };
        Failure { code, error }
    }
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(Failure::config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = cli.threads.max(1);
    match cli.cmd {
        Cmd::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let cfg = load_config(&config, seed)?;
            let out_root = resolve_out_root(out);
            let summary = runner::run_training(&cfg, &out_root, resume.as_deref())
                .map_err(Failure::classify)?;
            println!(
                "run `{}` finished at step {} -> {}",
                cfg.run_id,
                summary.steps_done,
                summary.run_dir.display()
            );
            if let (Some(fid), Some(modes), Some(hq)) = (
                summary.proxy_fid,
                summary.modes_covered,
                summary.hq_fraction,
            ) {
                println!(
                    "proxy-FID {fid:.4}, modes covered {modes}, high-quality fraction {hq:.3}"
                );
            }
            Ok(())
        }
        Cmd::Eval {
            checkpoint,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let out_root = resolve_out_root(out);
            let artifacts =
                runner::run_eval(&cfg, &checkpoint, &out_root).map_err(Failure::classify)?;
            for p in &artifacts.truncation {
                println!(
                    "truncation s={:.3}: proxy-FID {:.4}, modes {}, hq {:.3}",
                    p.s, p.proxy_fid, p.modes_hit, p.hq_fraction
                );
            }
            for p in &artifacts.eval_steps {
                println!(
                    "eval steps k={}: proxy-FID {:.4}, modes {}, hq {:.3}, ascent {:.3}",
                    p.steps, p.proxy_fid, p.modes_hit, p.hq_fraction, p.ascent_fraction
                );
            }
            Ok(())
        }
        Cmd::Sweep { config, out, seed } => {
            let text = runner::read_to_string(&config).map_err(Failure::config)?;
            let mut sweep = runner::SweepConfig::from_json(&text).map_err(Failure::config)?;
            if let Some(seed) = seed {
                sweep.base.seed = seed;
            }
            let out_root = resolve_out_root(out);
            let path = runner::run_sweep(&sweep, &out_root, threads).map_err(Failure::classify)?;
            println!("sweep table -> {}", path.display());
            Ok(())
        }
        Cmd::Check => {
            let reports = run_all_checks();
            let mut failed = 0;
            for r in &reports {
                println!(
                    "check {:<32} max_err={:<12.3e} tol={:<9.1e} {} — {}",
                    r.name,
                    r.max_err,
                    r.tolerance,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.detail
                );
                if !r.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", reports.len(), failed);
            if failed > 0 {
                return Err(Failure {
                    code: 1,
                    error: anyhow::anyhow!("{failed} validation checks failed"),
                });
            }
            Ok(())
        }
        Cmd::Game {
            game,
            quad,
            method,
            lr,
            steps,
            lambda,
            alpha,
            x0,
            y0,
            out,
        } => run_game(game, quad, method, lr, steps, lambda, alpha, x0, y0, out),
    }
}

fn build_named_game(name: &str, x0: f64, y0: f64) -> Result<Game> {
    match name {
        "bilinear" => Ok(Game::bilinear(x0, y0)),
        "potential" => Ok(Game::potential(x0, y0)),
        "logan-toy" => {
            // f = x·y·z over a one-dimensional latent held at 0.2
            let x = Expr::param("x", &[]);
            let y = Expr::param("y", &[]);
            let z = Expr::input("z", &[1]);
            let f = x.mul(&y)?.mul(&z.index(0)?)?;
            let mut env = Environment::new();
            env.bind("x", Tensor::scalar(x0)?);
            env.bind("y", Tensor::scalar(y0)?);
            env.bind("z", Tensor::vector(vec![0.2])?);
            Ok(Game::adversarial_pair(
                f,
                vec!["x".into()],
                vec!["y".into()],
                "z",
                env,
            )?)
        }
        other => anyhow::bail!("unknown game `{other}` (try bilinear, potential, logan-toy)"),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_game(
    game: Option<String>,
    quad: Option<String>,
    method: String,
    lr: f64,
    steps: usize,
    lambda: f64,
    alpha: f64,
    x0: f64,
    y0: f64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (label, game) = match (&game, &quad) {
        (Some(name), None) => (
            name.clone(),
            build_named_game(name, x0, y0).map_err(Failure::config)?,
        ),
        (None, Some(spec)) => {
            let coeffs: Vec<f64> = spec
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::config(anyhow::anyhow!("bad --quad coefficients: {e}")))?;
            let arr: [f64; 6] = coeffs.try_into().map_err(|v: Vec<f64>| {
                Failure::config(anyhow::anyhow!(
                    "--quad needs 6 coefficients, got {}",
                    v.len()
                ))
            })?;
            (
                "quadratic".to_string(),
                Game::quadratic_pair(arr, x0, y0).map_err(|e| Failure::config(e.into()))?,
            )
        }
        _ => {
            return Err(Failure::config(anyhow::anyhow!(
                "specify exactly one of --game or --quad"
            )))
        }
    };
    let method_enum = match method.as_str() {
        "simgrad" => DynamicsMethod::SimGrad,
        "sga" => DynamicsMethod::Sga { lambda },
        "unrolled" => DynamicsMethod::Unrolled,
        "logan" => DynamicsMethod::Logan { alpha },
        other => {
            return Err(Failure::config(anyhow::anyhow!(
                "unknown method `{other}` (try simgrad, sga, unrolled, logan)"
            )))
        }
    };
    let trajectory = simulate_dynamics(&game, method_enum, lr, steps)
        .map_err(|e| Failure::classify(e.into()))?;

    let out_root = resolve_out_root(out);
    let dir = out_root.join(format!("game_{label}_{method}"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::classify(e.into()))?;

    let dim = trajectory.states.first().map(Vec::len).unwrap_or(0);
    let mut text = String::from("step");
    for i in 0..dim {
        text.push_str(&format!(",p{i}"));
    }
    text.push_str(",param_norm,grad_norm\n");
    for (i, state) in trajectory.states.iter().enumerate() {
        text.push_str(&i.to_string());
        for v in state {
            text.push_str(&format!(",{v}"));
        }
        let grad = if i < trajectory.grad_norms.len() {
            trajectory.grad_norms[i].to_string()
        } else {
            String::new()
        };
        text.push_str(&format!(",{},{grad}\n", trajectory.param_norms[i]));
    }
    std::fs::write(dir.join("trajectory.csv"), text).map_err(|e| Failure::classify(e.into()))?;

    if dim >= 2 {
        let points: Vec<(f64, f64)> = trajectory.states.iter().map(|s| (s[0], s[1])).collect();
        let portrait = svg::curves(
            &format!("{label} under {method}"),
            &[svg::Series {
                label: &method,
                color: "#8e44ad",
                points,
            }],
        );
        std::fs::write(dir.join("phase.svg"), portrait).map_err(|e| Failure::classify(e.into()))?;
    }

    println!(
        "{} steps recorded, final norm {:.6}, diverged: {}",
        trajectory.states.len() - 1,
        trajectory.param_norms.last().unwrap_or(&0.0),
        trajectory.diverged
    );
    println!("trajectory -> {}", dir.join("trajectory.csv").display());
    Ok(())
}
