//! Stochastic nonconvex optimization with minibatch proximal-point methods.
//!
//! The toolkit optimizes a population objective `phi(w) = E[loss(w, xi)]`
//! that is only accessible through i.i.d. samples, for losses that are
//! beta-smooth and sigma-almost convex. Instead of taking one linearized
//! gradient step per minibatch (minibatch SGD), the minibatch-prox drivers
//! approximately minimize the regularized empirical objective
//!
//! ```text
//! (1/b) sum_i loss(w, xi_i) + (gamma/2) ||w - w_prev||^2
//! ```
//!
//! on each fresh minibatch, which stays sample-efficient at much larger
//! minibatch sizes. Provided here:
//!
//! - [`problems`]: synthetic stochastic problems (logistic, squared,
//!   sigmoid regression, a small softplus network) with seeded sampling
//!   and analytic gradients,
//! - [`prox`]: the regularized subproblems and the gamma/delta and
//!   rho/eta schedules,
//! - [`solvers`]: strongly-convex smooth solvers (heavy-ball GD, Nesterov
//!   AGD, SVRG) with gradient-norm suboptimality certificates,
//! - [`drivers`]: the outer loops (basic MP, memory-efficient two-level
//!   MP, minibatch SGD baseline) with random-iterate output,
//! - [`cost_model`]: simulated distributed runtime/energy accounting and
//!   the asymptotic regime table,
//! - [`diagnostics`]: empirical estimators for the regularity constants
//!   and finite-difference gradient checks,
//! - [`harness`]: JSON-configured, seed-deterministic experiment runner
//!   with CSV traces and gnuplot scripts.
//!
//! Core numerics are generic over the [`scalar::Scalar`] float type;
//! the harness and the `mp` binary run everything at `f64`.

pub mod cost_model;
pub mod diagnostics;
pub mod drivers;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod prox;
pub mod scalar;
pub mod solvers;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default precision used by the harness and the CLI.
pub type F = f64;

pub type Weights64 = problems::Weights<F>;
pub type Sample64 = problems::Sample<F>;
pub type ProblemSpec64 = problems::ProblemSpec<F>;
pub type SolverReport64 = solvers::SolverReport<F>;
