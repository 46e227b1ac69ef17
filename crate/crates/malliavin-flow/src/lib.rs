//! Numerical toolkit for additive-noise SDEs
//!
//! ```text
//!     dX_t = b(t, X_t) dt + dB_t,     X_{t_0} = x_0 in R^d,
//! ```
//!
//! where `B` is a d-dimensional Brownian motion and the drift `b` has linear
//! growth and bounded spatial derivatives up to a declared order `k`.
//!
//! The crate provides, on a shared uniform time grid:
//!
//! * reproducible Brownian path sampling with per-path substreams and
//!   Brownian-bridge refinement ([`paths`]);
//! * drift families with derivative tensors and hypothesis validation
//!   ([`drift`]);
//! * forward/backward Euler solvers, Girsanov reweighting and weight-moment
//!   diagnostics ([`sde`]);
//! * first and second variation (flow Jacobian/Hessian) and the Picard
//!   expansion of the first variation ([`flow`]);
//! * Malliavin derivatives, covariance matrices and non-degeneracy
//!   diagnostics ([`malliavin`]);
//! * density estimation from Skorokhod-integral weight chains, with a KDE
//!   baseline and Gaussian closed forms for cross-checks ([`density`]);
//! * shuffle-product identities for iterated simplex integrals, an exact
//!   rational oracle for polynomial integrands, and a Monte Carlo check of
//!   the Gamma-decay moment bound ([`shuffles`]);
//! * a characteristics-based solver for the stochastic transport equation
//!   with Ito/Stratonovich/weak-form residual diagnostics ([`transport`]);
//! * the Lamperti change of variables reducing multiplicative noise to the
//!   additive setting ([`lamperti`]);
//! * a check-suite runner used by both the CLI and the acceptance tests
//!   ([`suite`]).
//!
//! All Monte Carlo estimators follow a deterministic summation contract:
//! per-path work is a pure function of `(master_seed, path_index)` and
//! reductions happen in a fixed order, so results are independent of the
//! number of worker threads.

pub mod density;
pub mod drift;
pub mod error;
pub mod flow;
pub mod lamperti;
pub mod malliavin;
pub mod paths;
pub mod sde;
pub mod shuffles;
pub mod suite;
pub mod transport;
pub mod util;

pub use error::{Error, Result};

/// Library version, stamped into CSV headers and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Schema version of all CSV outputs produced by this crate's tools.
pub const CSV_SCHEMA: u32 = 1;
