//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. The variants
//! are grouped by how a caller should react: configuration mistakes
//! (unknown family, bad parameters), mathematical domain violations
//! (singular points, divergent sums, infeasible exponents), and convergence
//! failures where a value exists but did not meet its tolerance.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown map family `{0}`")]
    UnknownFamily(String),

    #[error("family `{family}` has no evaluator; it is a catalog metadata entry only")]
    MetadataOnlyFamily { family: String },

    #[error("invalid parameters for `{family}`: {reason}")]
    InvalidParameters { family: &'static str, reason: String },

    #[error("`{family}` with {detail} is not verified hyperbolic (supported range: {range})")]
    NotVerifiedHyperbolic {
        family: &'static str,
        detail: String,
        range: &'static str,
    },

    #[error("cannot enumerate preimages of {w}: {reason}")]
    SingularTarget { w: Complex64, reason: String },

    #[error("sample point {z} is singular for this diagnostic: {reason}")]
    SingularSample { z: Complex64, reason: String },

    #[error("τ-metric derivative undefined at z = {z}: {reason}")]
    MetricSingularity { z: Complex64, reason: String },

    #[error("potential not tame for this map: t = {t} requires t > {threshold}")]
    NotTame { t: f64, threshold: f64 },

    #[error("τ = {tau} outside the admissible interval ({lo}, {hi})")]
    TauOutOfRange { tau: f64, lo: f64, hi: f64 },

    #[error("orbit hit a singularity at step {step} (z = {z}): {reason}")]
    OrbitFailure {
        step: usize,
        z: Complex64,
        reason: String,
    },

    #[error("preimage tree has an empty level at depth {level}")]
    EmptyLevel { level: usize },

    #[error("divergent sum: exponent u = {u} must exceed the order ρ = {rho}")]
    DivergentSum { u: f64, rho: f64 },

    #[error("observable is unbounded on retained nodes: |g({z})| = {magnitude}")]
    UnboundedObservable { z: Complex64, magnitude: f64 },

    #[error("normalizing mass underflowed (log Σ = {log_sum}); raise s or reduce depth")]
    MassUnderflow { log_sum: f64 },

    #[error("{what} did not converge: {detail}")]
    NotConverged { what: String, detail: String },

    #[error(
        "no sign change on bracket [{lo}, {hi}]; sampled pressure values: {samples:?}"
    )]
    BracketFailure {
        lo: f64,
        hi: f64,
        samples: Vec<(f64, f64)>,
    },

    #[error(
        "infeasible exponent: effective t = {t_eff} must exceed ρ/τ̂ = {threshold} (q = {q})"
    )]
    InfeasibleExponent { t_eff: f64, threshold: f64, q: f64 },

    #[error("temperature function is not convex at q = {q} (T'' = {t2}); refusing to emit a spectrum")]
    NonConvexTemperature { q: f64, t2: f64 },

    #[error("variance estimate unreliable: {detail}")]
    UnreliableVariance { detail: String },

    #[error("no periodic points found for periods 1..={max_period}")]
    NoPeriodicPoints { max_period: usize },

    #[error("loosely tame potential used as an operator weight (t = {t}, τ = {tau}); only tame potentials may weight the transfer operator")]
    LooselyTameWeight { t: f64, tau: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Convergence failures keep a best-effort value alive in the caller;
    /// everything else is a hard mathematical or configuration fault.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(self, Error::NotConverged { .. })
    }
}
