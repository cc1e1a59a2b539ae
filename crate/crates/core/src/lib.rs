//! Desk-scale laboratory for latent-optimised adversarial training.
//!
//! The crate is organised around a small nested reverse-mode autodiff core:
//!
//! - [`tensor`], [`expr`], [`eval`], [`grad`], [`fd`] — dense tensors, the
//!   expression graph, evaluation, reverse-mode differentiation (nested to
//!   depth 2), and the finite-difference oracle.
//! - [`models`] — MLP generator/discriminator pairs, the composite critic
//!   f(z) = D(G(z)) and the Wasserstein/hinge losses.
//! - [`latent`] — the latent refinement step: plain and natural gradient
//!   descent with damping, masking, clipping, and the step-norm regulariser.
//! - [`dynamics`] — differentiable-game reference math: simultaneous
//!   gradient, dense game Hessians, symplectic adjustment, the three-player
//!   latent game, unrolled-gradient correspondence, and a dynamics simulator.
//! - [`train`] — the end-to-end training loop with ablation switches and
//!   per-step diagnostics.
//! - [`metrics`] — Gaussian Fréchet proxy distance, mode coverage,
//!   truncation and eval-step sweeps, moving-window normalisation.
//! - [`validate`] — the named oracle battery behind `logan-lab check`.

// Validations use `!(x > 0.0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod expr;
pub mod fd;
pub mod grad;
pub mod latent;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod validate;

pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_many, Environment, Session};
pub use expr::Expr;
pub use fd::{finite_difference, max_rel_err};
pub use grad::{gradient, gradient_expr, substitute};
pub use rng::Rng;
pub use tensor::Tensor;
