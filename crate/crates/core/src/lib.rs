//! Discretization of backward doubly stochastic differential equations
//!
//! ```text
//! X_t = x + ∫_0^t b(X_r) dr + ∫_0^t σ(X_r) dW_r
//! Y_t = φ(X_T) + ∫_t^T f(r, X_r, Y_r, Z_r) dr + ∫_t^T g(r, X_r, Y_r, Z_r) d←B_r − ∫_t^T Z_r dW_r
//! ```
//!
//! The forward diffusion is discretized by the Euler scheme. `(Y, Z)` are
//! approximated by a backward recursion over grid functions `(u_i, v_i)` of
//! the current state, computed for one frozen path of the backward noise `B`;
//! the conditional expectations over each forward increment are Gauss–Hermite
//! integrals. Evaluating the layers along an Euler path gives `Y^π_{t_i}` and
//! the grid-time `Z^{π,1}_{t_i}`.
//!
//! Modules, bottom-up: [`model`], [`rng`], [`forward`], [`condexp`],
//! [`backward`], [`oracle`], [`harness`].

pub mod backward;
pub mod condexp;
pub mod config;
pub mod error;
pub mod exec;
pub mod forward;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod rng;
mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
