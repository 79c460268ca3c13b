//! Layer-wise gradient-descent learning of Gaussian multi-index models.
//!
//! A target `f*(x) = g(Ux)` depends on a Gaussian input `x ∈ R^d` only through an
//! `r`-dimensional projection. A two-layer network
//! `f(x) = Σ_j a_j σ(w_jᵀx + b_j)` is trained in two stages: the first-layer
//! features `W` by a few steps of full-batch gradient descent from a tiny symmetric
//! initialization (which behaves like power iteration on the label-weighted
//! second-moment matrix `Σ̂_ℓ = (1/n) Σ ℓ'(0, y_i) x_i x_iᵀ`), then the output
//! weights `a` by ridge-regularized gradient descent on a fresh sample.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure and
//! deterministic given its seeds; IO, configuration and the experiment harness live
//! in the companion `mindex` crate.
//!
//! Module map:
//!
//! - [`targets`]: Hermite polynomials, hidden subspaces, link functions, datasets.
//! - [`losses`]: scalar losses, derivatives and label preprocessing values.
//! - [`network`]: activations, parameters, forward pass and analytic gradients.
//! - [`trainer`]: the two-stage schedule, default hyperparameters, Adam mode.
//! - [`spectral`]: `Σ̂_ℓ`, Monte-Carlo `Σ_ℓ`, eigen reports, the power-iteration
//!   oracle and deviation diagnostics.
//! - [`metrics`]: subspace recovery and test error.
//! - [`approx`]: exact monomial reproduction by the locally quadratic activation.
//! - [`linalg`], [`quadrature`], [`stats`], [`rng`]: numerical support.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod approx;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod targets;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix};
pub use losses::{LossFunction, PreprocValues};
pub use metrics::RecoveryReport;
pub use network::{Activation, Batch, NetworkParams};
pub use spectral::{RankRule, SpectralReport};
pub use targets::{Dataset, HiddenSubspace, LinkFunction, MultiIndexTarget};
pub use trainer::{AdamConfig, TrainPlan, TrainReport};
