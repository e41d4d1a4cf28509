//! Monte Carlo toolkit for stochastic equations driven by subordinate
//! Brownian motion `W_{S(t)}`.
//!
//! The crate is organised bottom-up:
//!
//! - [`bernstein`]: Bernstein functions, Laplace transforms and the inverse
//!   moments `E[S(t)^{-k}]` of the induced subordinator.
//! - [`pathgen`]: subordinator paths, the regularized clock `S_eps`, and
//!   time-changed Brownian increments.
//! - [`sde`]: drift/diffusion models, the Euler integrator, Yoshida drift
//!   approximation and plain Monte Carlo semigroup estimates.
//! - [`coupling`]: the steered coupling `(X, Y)` on a strictly increasing
//!   clock together with its Girsanov weight.
//! - [`certify`]: statistical certificates for the log-Harnack, power-Harnack
//!   and gradient inequalities, and rate-exponent fits.
//! - [`galerkin`]: spectral truncation of semilinear equations and
//!   dimension-free checks.
//! - [`runner`]: JSON-configured experiments and their reports.
//! - [`selftest`]: the fast oracle subset behind `subharnack selftest`.
//!
//! Randomness always flows through [`rng::RngStream`], so every path is a
//! pure function of `(master_seed, replicate, tag)` and results do not depend
//! on how many worker threads are used.

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernstein;
pub mod certify;
pub mod coupling;
pub mod error;
pub mod galerkin;
pub mod observable;
pub mod parallel;
pub mod pathgen;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod selftest;
pub mod sde;
pub mod special;
pub mod stats;

pub use bernstein::BernsteinFunction;
pub use error::{Error, Result};
pub use observable::Observable;
pub use parallel::{McConfig, Workers};
pub use pathgen::{ClockLaw, TimeGrid};
pub use rng::RngStream;
pub use stats::MCEstimate;
