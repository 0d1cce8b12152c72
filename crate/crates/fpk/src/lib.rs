//! Mesh-free pointwise solver for time-dependent Fokker-Planck equations.
//!
//! The governing idea: write the solution as `p(t, x) = h(t, x) p_inf(x)`
//! where `p_inf` is any nonzero stationary density (a zero of the
//! Fokker-Planck operator). The ratio `h` solves a PDE whose Feynman-Kac
//! representation has no potential term, so `h(t, x)` is the expectation of
//! `p0 / p_inf` along trajectories of a transformed SDE with drift
//! `sigma^2 grad log p_inf - mu` started at `x`. Simulating that SDE with
//! Euler-Maruyama gives a pointwise, mesh-free, embarrassingly parallel
//! estimator:
//!
//! ```text
//! p_hat(tau_j, x) = p_inf(x) * (1/N) * sum_i p0(X_ij) / p_inf(X_ij)
//! ```
//!
//! Because `p_inf` enters both numerator and denominator, its normalization
//! constant cancels; any unnormalized zero works, analytic (gradient
//! systems, linear drift) or tabulated on a grid.
//!
//! Crate layout:
//!
//! - [`systems`]: drift registry (planar ring chains, Lorenz-63, Thomas,
//!   linear mean reversion), Gaussian-mixture initial densities, growth
//!   bound checks, closed forms for the linear oracle.
//! - [`stationary`]: stationary-density representations (closed-form,
//!   Gaussian, grid-tabulated with clamp/strict extrapolation), scores, the
//!   transformed drift, and a histogram-based grid builder for non-gradient
//!   systems.
//! - [`trajectories`]: deterministic parallel Euler-Maruyama batches with
//!   containment tracking and a binary dump format for trajectory reuse.
//! - [`fk`]: the pointwise estimator with strict/drop/clamp escape policies,
//!   grid solves, and re-scoring of dumped batches.
//! - [`mc`]: the Monte-Carlo histogram reference solver.
//! - [`diagnostics`]: containment curves xi(T, D, omega), the escape-error
//!   proportionality study, and the failure demonstration for the sampled
//!   physics-informed objective.
//! - [`quadrature`]: Gauss-Legendre rules, 2D marginalization, slice
//!   normalization.
//! - [`filtering`]: one-step Bayesian filtering from partial observations.
//! - [`config`], [`runner`], [`export`]: the declarative JSON config layer
//!   behind the `fpk` binary.
//!
//! Every random quantity derives from a single run seed through counter-based
//! streams ([`rng`]), so all results are bit-reproducible across any number
//! of worker threads.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability; `examples/ou_closed_form.rs` is the best place to start.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod filtering;
pub mod fk;
pub mod grid;
pub mod mc;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod stationary;
pub mod systems;
pub mod trajectories;

pub use error::{Error, Result};
