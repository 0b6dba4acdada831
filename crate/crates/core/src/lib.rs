//! Simulation and inference for one-dimensional diffusions whose drift carries a
//! `T`-periodic signal switched on during `(θ, θ + a)` in every period.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs and a 64-bit seed; replicate fan-out goes through [`Executor`] so
//! that a std host can plug in a thread pool without changing results.
//!
//! Module map:
//!
//! - [`model`]: periodic signal, coefficient registry, occupation times
//! - [`simulate`]: Euler–Maruyama paths, period segments, fluctuation probe
//! - [`ergodic`]: Ornstein–Uhlenbeck oscillating regime, empirical laws, LLN functionals
//! - [`semigroup`]: periodic Fokker–Planck solver for invariant marginals
//! - [`likelihood`]: Girsanov log-likelihood ratios, local curves, Hellinger/bracket/CLT checks
//! - [`estimators`]: `J_θ`, MLE, Bayes estimator, Monte Carlo studies
//! - [`limit`]: two-sided Brownian limit experiment and its estimators
#![no_std]

extern crate alloc;

pub mod ergodic;
pub mod error;
pub mod estimators;
pub mod likelihood;
pub mod limit;
pub mod math;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod semigroup;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{CoefFn, DiffusionModel, PeriodicFn, SignalSpec};
pub use runner::{Executor, Sequential};
pub use simulate::PathGrid;
