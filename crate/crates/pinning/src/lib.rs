//! Normal forms of a Hopf bifurcation with zero frequency under imperfect
//! SO(2) symmetry.
//!
//! A rotating wave whose precession frequency crosses zero is pinned by
//! symmetry-breaking imperfections: the zero-frequency line in parameter
//! space opens into a band of steady solutions bounded by infinite-period
//! bifurcations. This crate implements the planar normal-form family
//!
//! ```text
//!   dz/dt = z (mu + i nu - c |z|^2) + eps * g(z, zbar),
//!   c = sin(alpha0) + i cos(alpha0),
//! ```
//!
//! for the five low-order symmetry-breaking monomials `g` (constant, zbar,
//! z*zbar, z^2, zbar^(m-1)) and provides:
//!
//! - closed-form and numeric fixed-point solvers with eigenvalue
//!   classification ([`equilibria`]),
//! - analytic local bifurcation curves, codimension-two points and
//!   pinning-region geometry ([`curves`]),
//! - trajectory integration, limit-cycle detection and phase portraits
//!   ([`flow`]),
//! - numeric location of infinite-period boundaries, period-scaling fits
//!   (square-root vs logarithmic) and the degenerate Takens-Bogdanov
//!   verification ([`globalbif`]),
//! - a CLI front end for sweeps, curve emission, portraits and fits
//!   ([`cli`]).
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

pub mod cli;
pub mod curves;
pub mod equilibria;
pub mod flow;
pub mod globalbif;
pub mod normalform;

mod error;

pub use error::{Error, Result};
