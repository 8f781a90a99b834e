//! Numerical thermodynamic formalism for hyperbolic analytic maps.
//!
//! The library turns a concrete analytic map (exponential, tangent, sine, or
//! a polynomial oracle) together with a tame geometric potential into
//! computable quantities: truncated transfer operators over preimage trees,
//! topological pressure, conformal and Gibbs measures, Bowen's root for the
//! hyperbolic dimension, and the multifractal temperature/spectrum pair.
//!
//! Module layout mirrors the data flow:
//!
//! * [`maps`] — the map catalog: evaluators, exact inverse branches, growth
//!   envelopes, hyperbolicity diagnostics, periodic points.
//! * [`potentials`] — tame potentials `-t·log|f'|_τ + h` and Hölder
//!   observables, with the τ-metric derivative and feasibility checks.
//! * [`transfer`] — truncated transfer operators: preimage trees, streaming
//!   weighted walks, Borel sums, operator-decay diagnostics.
//! * [`thermo`] — pressure, conformal/Gibbs measures, expectations,
//!   variances, cohomology tests, entropy and Lyapunov exponents.
//! * [`multifractal`] — Bowen dimension, temperature function, spectrum,
//!   and parameter sweeps.
//!
//! All randomness is seeded and all enumeration orders are fixed, so every
//! result is bit-reproducible for a given configuration.

pub mod error;
pub mod maps;
pub mod multifractal;
pub mod potentials;
pub mod thermo;
pub mod transfer;

pub use error::{Error, Result};
