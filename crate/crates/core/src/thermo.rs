//! Pressure, conformal and Gibbs measures, and their derivatives.
//!
//! Everything here reduces to weighted sums over truncated backward-orbit
//! trees. The topological pressure is the growth rate of the level masses
//! `L_φ^n 1(w)`, estimated from consecutive ratios so the `O(1/n)` bias of
//! the raw `(1/n) log` definition drops out; Gibbs integrals use the
//! Birkhoff-averaged leaf estimator, which converges to `∫ψ dμ_φ`; the
//! asymptotic variance is the Green-Kubo sum of centered lag correlations.
//! First derivatives of the pressure equal Gibbs expectations, second
//! derivatives equal asymptotic variances; the finite-difference routes to
//! both are kept in the test suite as cross-checks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::{least_squares_line, sample_julia_points, AnalyticMap, BranchWindow};
use crate::potentials::TamePotential;
use crate::transfer::{expand_tree, walk_tree, LogSum, TreeVisitor, WeightedSum};

/// Pressure estimate with its convergence diagnostics.
#[derive(Debug, Clone)]
pub struct PressureEstimate {
    /// `P(φ)`, the mean over base points of the per-base ratio estimates.
    pub value: f64,
    /// Tree depth used.
    pub depth: usize,
    pub base_points: Vec<Complex64>,
    /// Max pairwise difference of the per-base estimates.
    pub spread: f64,
    /// Worst per-level ratio of discarded-mass bound to retained mass.
    pub tail_fraction: f64,
    /// Whether Aitken acceleration was applied (monotone ratio tails).
    pub extrapolated: bool,
    /// Spread within the configured tolerance.
    pub converged: bool,
}

/// Atomic approximation of the `s`-conformal measure `ν_s`.
#[derive(Debug, Clone)]
pub struct ConformalAtomMeasure {
    pub s: f64,
    atoms: Vec<(Complex64, f64)>,
    /// `R ↦ mass outside the disk of radius R`, on a geometric grid.
    pub tightness: Vec<(f64, f64)>,
    /// Fitted exponent of the tightness decay `mass ~ R^{-exponent}`;
    /// infinite when the support is bounded inside the grid.
    pub decay_exponent: f64,
    /// Log of the partial sum `Σ_s` normalizing the series.
    pub log_normalizer: f64,
}

impl ConformalAtomMeasure {
    pub fn atoms(&self) -> &[(Complex64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    pub fn mass_outside(&self, radius: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(z, _)| z.norm() > radius)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn expectation(&self, f: impl Fn(Complex64) -> f64) -> f64 {
        self.atoms.iter().map(|(z, m)| m * f(*z)).sum()
    }
}

/// Gibbs density values on a grid, from Cesàro averages of normalized
/// iterates.
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub points: Vec<Complex64>,
    pub values: Vec<f64>,
    /// `max over the grid of |L̂ρ̂ - ρ̂|`, computed by the telescoping
    /// identity `(L̂^{n+1}1 - L̂1)/n`.
    pub residual: f64,
    pub depth: usize,
    pub converged: bool,
}

/// Green-Kubo variance with its truncation diagnostics.
#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub value: f64,
    /// Centered lag correlations `C_k(ψ,ζ) + C_k(ζ,ψ)` for `k ≥ 1`, with
    /// `C_0` at index 0.
    pub correlations: Vec<f64>,
    /// Estimated mass of the discarded lags `k > K`, from the fitted
    /// geometric decay.
    pub remainder: f64,
    /// Fitted correlation decay factor; 0 when below noise.
    pub xi: f64,
    pub below_noise: bool,
}

/// Outcome of the periodic-point cohomology test.
#[derive(Debug, Clone)]
pub struct CohomologyCheck {
    /// `max over periodic z of |(S_nφ(z) - S_nψ(z))/n - R̂|`.
    pub defect: f64,
    /// `R̂ = P(φ) - P(ψ)`.
    pub r_hat: f64,
    pub points_used: usize,
}

/// Entropy and Lyapunov exponent of the Gibbs state.
#[derive(Debug, Clone, Copy)]
pub struct EntropyLyapunov {
    pub h_mu: f64,
    pub chi_mu: f64,
    pub pressure: f64,
}

/// Correlation sequence with its fitted decay.
#[derive(Debug, Clone)]
pub struct CorrelationDecay {
    pub values: Vec<f64>,
    pub xi: f64,
    pub below_noise: bool,
}

// ---------------------------------------------------------------------------
// The combined pressure / expectation walk
// ---------------------------------------------------------------------------

/// Evaluate a loosely tame integrand at a tree node from quantities the
/// walk already knows: the weight potential's value `φ(z)` encodes
/// `log|f'(z)|_τ`, and switching the integrand's τ only needs the modulus
/// drop to the parent. No forward evaluation, no singularity checks.
struct IntegrandEval {
    t: f64,
    tau_diff_times_t: f64,
    inv_t_phi: f64,
}

impl IntegrandEval {
    fn new(phi: &TamePotential, psi: &TamePotential) -> Self {
        IntegrandEval {
            t: psi.t(),
            tau_diff_times_t: psi.t() * (psi.tau() - phi.tau()),
            inv_t_phi: 1.0 / phi.t(),
        }
    }

    /// `ψ(z)` given `φ(z)`, `h_φ(z)`, `h_ψ(z)`, and
    /// `dlog = log|z| - log|f(z)|`.
    #[inline]
    fn value(&self, phi_z: f64, h_phi_z: f64, h_psi_z: f64, dlog: f64) -> f64 {
        if self.t == 0.0 {
            return h_psi_z;
        }
        let log_td_tau_phi = (h_phi_z - phi_z) * self.inv_t_phi;
        -self.t * log_td_tau_phi - self.tau_diff_times_t * dlog + h_psi_z
    }
}

struct PressureWalk<'a> {
    phi: &'a TamePotential,
    integrands: Vec<(&'a TamePotential, IntegrandEval)>,
    masses: Vec<LogSum>,
    tails: Vec<LogSum>,
    /// `log|z|` along the current path; index 0 is the root.
    la_stack: Vec<f64>,
    /// Cumulative Birkhoff sums `S_kψ_j` along the current path, one slot
    /// per integrand per level.
    birkhoff: Vec<f64>,
    /// Weighted sums of `S_kψ_j` over each level `k`, flattened as
    /// `[level][integrand]`. Their per-level increments converge to the
    /// Gibbs expectations with the boundary layers at the root and at the
    /// leaves telescoped away, mirroring the ratio pressure.
    level_sums: Vec<WeightedSum>,
}

impl<'a> PressureWalk<'a> {
    fn new(phi: &'a TamePotential, integrands: &[&'a TamePotential], depth: usize, root: Complex64) -> Self {
        let mut la_stack = Vec::with_capacity(depth + 1);
        la_stack.push(root.norm().ln());
        PressureWalk {
            phi,
            integrands: integrands
                .iter()
                .map(|psi| (*psi, IntegrandEval::new(phi, psi)))
                .collect(),
            masses: vec![LogSum::new(); depth + 1],
            tails: vec![LogSum::new(); depth + 1],
            la_stack,
            birkhoff: Vec::new(),
            level_sums: vec![WeightedSum::new(); (depth + 1) * integrands.len()],
        }
    }
}

impl TreeVisitor for PressureWalk<'_> {
    fn enter(&mut self, level: usize, z: Complex64, log_weight: f64, phi_z: f64) {
        self.masses[level].add(log_weight);
        let j = self.integrands.len();
        if j == 0 {
            return;
        }
        let la_z = z.norm().ln();
        self.la_stack.truncate(level);
        let dlog = la_z - self.la_stack[level - 1];
        self.la_stack.push(la_z);
        let h_phi_z = self.phi.h().value(z);
        self.birkhoff.truncate((level - 1) * j);
        for (idx, (psi, eval)) in self.integrands.iter().enumerate() {
            let value = eval.value(phi_z, h_phi_z, psi.h().value(z), dlog);
            let prev = if level == 1 {
                0.0
            } else {
                self.birkhoff[(level - 2) * j + idx]
            };
            let sum = prev + value;
            self.birkhoff.push(sum);
            self.level_sums[level * j + idx].add(log_weight, Complex64::new(sum, 0.0));
        }
    }

    fn truncated(&mut self, level: usize, log_missing: f64) {
        if level < self.tails.len() {
            self.tails[level].add(log_missing);
        }
    }
}

struct BaseOutcome {
    log_masses: Vec<f64>,
    tail_fraction: f64,
    expectations: Vec<f64>,
}

fn walk_base(
    map: &AnalyticMap,
    phi: &TamePotential,
    integrands: &[&TamePotential],
    w: Complex64,
    depth: usize,
    window: &BranchWindow,
) -> Result<BaseOutcome> {
    let mut visitor = PressureWalk::new(phi, integrands, depth, w);
    walk_tree(map, phi, w, depth, window, &mut visitor)?;
    let log_masses: Vec<f64> = visitor.masses.iter().map(LogSum::log_total).collect();
    let tail_fraction = (1..=depth)
        .map(|k| (visitor.tails[k].log_total() - log_masses[k]).exp())
        .fold(0.0, f64::max);
    let j = integrands.len();
    let expectations = (0..j)
        .map(|idx| {
            let increments: Vec<f64> = (1..=depth)
                .map(|level| {
                    let cur = visitor.level_sums[level * j + idx].mean().re;
                    let prev = if level == 1 {
                        0.0
                    } else {
                        visitor.level_sums[(level - 1) * j + idx].mean().re
                    };
                    cur - prev
                })
                .collect();
            series_limit(&increments).0
        })
        .collect();
    Ok(BaseOutcome {
        log_masses,
        tail_fraction,
        expectations,
    })
}

/// One pressure-and-integrals evaluation shared with the root solvers:
/// per-base ratio pressures averaged together with their Gibbs integrals.
pub(crate) struct SolveEval {
    pub value: f64,
    pub expectations: Vec<f64>,
}

pub(crate) fn pressure_with_expectations(
    map: &AnalyticMap,
    phi: &TamePotential,
    integrands: &[&TamePotential],
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<SolveEval> {
    if bases.is_empty() {
        return Err(Error::InvalidArgument(
            "pressure needs at least one base point".into(),
        ));
    }
    let mut per_base = Vec::with_capacity(bases.len());
    let mut expectations = vec![0.0f64; integrands.len()];
    for &w in bases {
        let outcome = walk_base(map, phi, integrands, w, n, window)?;
        per_base.push(ratios_to_pressure(&outcome.log_masses).0);
        for (acc, e) in expectations.iter_mut().zip(outcome.expectations) {
            *acc += e;
        }
    }
    let inv = 1.0 / bases.len() as f64;
    expectations.iter_mut().for_each(|e| *e *= inv);
    let value = per_base.iter().sum::<f64>() * inv;
    Ok(SolveEval {
        value,
        expectations,
    })
}

/// Consecutive-ratio pressure from one base's level masses: the mean of
/// the last ⌈n/3⌉ ratios, Aitken-accelerated when they are monotone.
fn ratios_to_pressure(log_masses: &[f64]) -> (f64, bool) {
    let n = log_masses.len() - 1;
    let ratios: Vec<f64> = (1..=n)
        .map(|k| {
            let prev = if k == 1 { 0.0 } else { log_masses[k - 1] };
            log_masses[k] - prev
        })
        .collect();
    series_limit(&ratios)
}

/// Limit of a geometrically converging term sequence: the mean of the last
/// ⌈n/3⌉ terms, Aitken-accelerated when they are monotone. Shared by the
/// pressure ratios and the per-level Gibbs increments so that analytic
/// gradients stay the exact derivatives of the pressure estimate.
fn series_limit(terms: &[f64]) -> (f64, bool) {
    let n = terms.len();
    let m = n.div_ceil(3);
    let window = &terms[n - m..];
    let monotone = window.len() >= 3
        && (window.windows(2).all(|p| p[1] > p[0])
            || window.windows(2).all(|p| p[1] < p[0]));
    if monotone {
        let [a, b, c] = [terms[n - 3], terms[n - 2], terms[n - 1]];
        let denom = c - 2.0 * b + a;
        if denom.abs() > 1e-13 * (1.0 + c.abs()) {
            return (c - (c - b) * (c - b) / denom, true);
        }
    }
    (window.iter().sum::<f64>() / window.len() as f64, false)
}

/// Topological pressure `P(φ)` as the growth rate of `L_φ^n 1` across at
/// least three base points. Non-convergence (spread above `spread_tol`)
/// is flagged on the estimate, not an error.
pub fn pressure(
    map: &AnalyticMap,
    phi: &TamePotential,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
    spread_tol: f64,
) -> Result<PressureEstimate> {
    if bases.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "pressure needs at least 3 base points, got {}",
            bases.len()
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(
            "pressure needs depth ≥ 3".into(),
        ));
    }
    let mut per_base = Vec::with_capacity(bases.len());
    let mut tail_fraction = 0.0f64;
    let mut extrapolated = true;
    for &w in bases {
        let outcome = walk_base(map, phi, &[], w, n, window)?;
        let (value, aitken) = ratios_to_pressure(&outcome.log_masses);
        per_base.push(value);
        tail_fraction = tail_fraction.max(outcome.tail_fraction);
        extrapolated &= aitken;
    }
    let value = per_base.iter().sum::<f64>() / per_base.len() as f64;
    let spread = per_base
        .iter()
        .flat_map(|a| per_base.iter().map(move |b| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(PressureEstimate {
        value,
        depth: n,
        base_points: bases.to_vec(),
        spread,
        tail_fraction,
        extrapolated,
        converged: spread <= spread_tol,
    })
}

/// Julia-set base points for pressure and expectation estimates, sampled
/// along a reproducible backward orbit from the map's verified seed.
pub fn default_bases(map: &AnalyticMap, count: usize, seed: u64) -> Result<Vec<Complex64>> {
    sample_julia_points(map, count, 12, &BranchWindow::new(5, 1e4), seed)
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// Atomic `ν_s` from the truncated series
/// `Σ_{n=1}^N e^{-ns} (L_φ^n)^* δ_w`, with its tightness profile.
pub fn conformal_measure(
    map: &AnalyticMap,
    phi: &TamePotential,
    s: f64,
    n: usize,
    w: Complex64,
    window: &BranchWindow,
) -> Result<ConformalAtomMeasure> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "conformal measure needs depth ≥ 1".into(),
        ));
    }
    let tree = expand_tree(map, phi, w, n, window)?;
    let mut normalizer = LogSum::new();
    for (level, data) in tree.levels().iter().enumerate().skip(1) {
        normalizer.add(data.log_mass - level as f64 * s);
    }
    let log_normalizer = normalizer.log_total();
    if !log_normalizer.is_finite() || log_normalizer < -700.0 {
        return Err(Error::MassUnderflow {
            log_sum: log_normalizer,
        });
    }
    let mut atoms = Vec::new();
    for (level, data) in tree.levels().iter().enumerate().skip(1) {
        let shift = -(level as f64) * s - log_normalizer;
        for node in &data.nodes {
            atoms.push((node.z, (node.log_weight + shift).exp()));
        }
    }

    let mut by_modulus: Vec<(f64, f64)> =
        atoms.iter().map(|(z, m)| (z.norm(), *m)).collect();
    by_modulus.sort_by(|a, b| a.0.total_cmp(&b.0));
    let r_max = by_modulus.last().map(|p| p.0).unwrap_or(1.0);
    let r_lo = by_modulus[by_modulus.len() / 2].0.max(1e-6);
    let r_hi = (r_max / 1.25).max(r_lo * 1.0001);
    let grid_len = 12;
    let mut tightness = Vec::with_capacity(grid_len);
    for j in 0..grid_len {
        let frac = j as f64 / (grid_len - 1) as f64;
        let radius = r_lo * (r_hi / r_lo).powf(frac);
        let first_out = by_modulus.partition_point(|p| p.0 <= radius);
        let outside: f64 = by_modulus[first_out..].iter().map(|p| p.1).sum();
        tightness.push((radius, outside));
    }
    let fit: Vec<(f64, f64)> = tightness
        .iter()
        .filter(|(_, mass)| *mass > 1e-300)
        .map(|(r, mass)| (r.ln(), mass.ln()))
        .collect();
    let decay_exponent = if fit.len() < 2 {
        f64::INFINITY
    } else {
        -least_squares_line(&fit).0
    };
    Ok(ConformalAtomMeasure {
        s,
        atoms,
        tightness,
        decay_exponent,
        log_normalizer,
    })
}

/// Cesàro-averaged Gibbs density `ρ̂_φ` on a grid, with the fixed-point
/// residual `‖L̂ρ̂ - ρ̂‖` obtained from the telescoping identity.
pub fn gibbs_density(
    map: &AnalyticMap,
    phi: &TamePotential,
    pressure: &PressureEstimate,
    grid: &[Complex64],
    n: usize,
    window: &BranchWindow,
    residual_tol: f64,
) -> Result<DensityProfile> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(
            "density grid must be nonempty".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "density needs at least one iterate".into(),
        ));
    }
    let p = pressure.value;
    let mut values = Vec::with_capacity(grid.len());
    let mut residual = 0.0f64;
    for &w in grid {
        let outcome = walk_base(map, phi, &[], w, n + 1, window)?;
        let iterate = |k: usize| (outcome.log_masses[k] - k as f64 * p).exp();
        let mean = (1..=n).map(iterate).sum::<f64>() / n as f64;
        values.push(mean);
        residual = residual.max((iterate(n + 1) - iterate(1)).abs() / n as f64);
    }
    Ok(DensityProfile {
        points: grid.to_vec(),
        values,
        residual,
        depth: n,
        converged: residual <= residual_tol,
    })
}

// ---------------------------------------------------------------------------
// Gibbs integrals and pressure derivatives
// ---------------------------------------------------------------------------

/// Birkhoff-averaged Gibbs integrals `∫ψ_j dμ_φ`, averaged over base
/// points.
pub fn gibbs_expectations(
    map: &AnalyticMap,
    phi: &TamePotential,
    psis: &[&TamePotential],
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<Vec<f64>> {
    if bases.is_empty() {
        return Err(Error::InvalidArgument(
            "expectations need at least one base point".into(),
        ));
    }
    if phi.t() == 0.0 {
        return Err(Error::LooselyTameWeight {
            t: phi.t(),
            tau: phi.tau(),
        });
    }
    let mut totals = vec![0.0f64; psis.len()];
    for &w in bases {
        let outcome = walk_base(map, phi, psis, w, n, window)?;
        for (t, e) in totals.iter_mut().zip(outcome.expectations) {
            *t += e;
        }
    }
    for t in totals.iter_mut() {
        *t /= bases.len() as f64;
    }
    Ok(totals)
}

/// `∫ψ dμ_φ` from a single base point.
pub fn gibbs_expectation(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi: &TamePotential,
    n: usize,
    window: &BranchWindow,
    w: Complex64,
) -> Result<f64> {
    Ok(gibbs_expectations(map, phi, &[psi], &[w], window, n)?[0])
}

/// Derivative of the pressure in the direction ψ:
/// `d/dε P(φ+εψ)|_0 = ∫ψ dμ_φ`.
pub fn pressure_gradient(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi: &TamePotential,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<f64> {
    Ok(gibbs_expectations(map, phi, &[psi], bases, window, n)?[0])
}

/// Entropy and Lyapunov exponent of `μ_φ` via the variational identity
/// `h = P(φ) - ∫φ dμ_φ` and `χ = ∫log|f'| dμ_φ`.
pub fn entropy_and_lyapunov(
    map: &AnalyticMap,
    phi: &TamePotential,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<EntropyLyapunov> {
    let est = pressure(map, phi, bases, window, n, f64::INFINITY)?;
    let log_deriv = TamePotential::log_deriv_integrand(0.0);
    let values = gibbs_expectations(map, phi, &[phi, &log_deriv], bases, window, n)?;
    Ok(EntropyLyapunov {
        h_mu: est.value - values[0],
        chi_mu: values[1],
        pressure: est.value,
    })
}

// ---------------------------------------------------------------------------
// Correlations and variance
// ---------------------------------------------------------------------------

struct LagWalk<'a> {
    phi: &'a TamePotential,
    psi: (&'a TamePotential, IntegrandEval),
    zeta: (&'a TamePotential, IntegrandEval),
    psi_mean: f64,
    zeta_mean: f64,
    k_max: usize,
    la_stack: Vec<f64>,
    psi_stack: Vec<f64>,
    zeta_stack: Vec<f64>,
    /// Running pair sums `Σ_a ψ(z_a)·ζ(f^k z_a)` along the current path,
    /// flattened as `[level-1][k]`.
    fsum_stack: Vec<f64>,
    /// Same with the roles swapped, `Σ_a ζ(z_a)·ψ(f^k z_a)`, for k ≥ 1,
    /// flattened as `[level-1][k-1]`.
    bsum_stack: Vec<f64>,
    /// Weighted pair sums over each level, flattened as `[level][k]`; their
    /// per-level increments converge to the lag-k correlations.
    forward_levels: Vec<WeightedSum>,
    /// As above for the swapped sums, flattened as `[level][k-1]`.
    backward_levels: Vec<WeightedSum>,
}

impl TreeVisitor for LagWalk<'_> {
    fn enter(&mut self, level: usize, z: Complex64, log_weight: f64, phi_z: f64) {
        let la_z = z.norm().ln();
        self.la_stack.truncate(level);
        let dlog = la_z - self.la_stack[level - 1];
        self.la_stack.push(la_z);
        let h_phi_z = self.phi.h().value(z);
        self.psi_stack.truncate(level - 1);
        self.zeta_stack.truncate(level - 1);
        self.psi_stack.push(
            self.psi
                .1
                .value(phi_z, h_phi_z, self.psi.0.h().value(z), dlog)
                - self.psi_mean,
        );
        self.zeta_stack.push(
            self.zeta
                .1
                .value(phi_z, h_phi_z, self.zeta.0.h().value(z), dlog)
                - self.zeta_mean,
        );
        // The new node z sits at the deep end of the path, so it extends
        // each pair sum by (ψ at z, ζ at f^k z) with f^k z the node k
        // levels up, present once level > k.
        let kf = self.k_max + 1;
        self.fsum_stack.truncate((level - 1) * kf);
        self.bsum_stack.truncate((level - 1) * self.k_max);
        for k in 0..kf {
            let (fsum, bsum) = if level <= k {
                (0.0, 0.0)
            } else {
                let psi_deep = self.psi_stack[level - 1];
                let zeta_deep = self.zeta_stack[level - 1];
                let psi_up = self.psi_stack[level - k - 1];
                let zeta_up = self.zeta_stack[level - k - 1];
                let (fprev, bprev) = if level == k + 1 {
                    (0.0, 0.0)
                } else {
                    (
                        self.fsum_stack[(level - 2) * kf + k],
                        if k >= 1 {
                            self.bsum_stack[(level - 2) * self.k_max + k - 1]
                        } else {
                            0.0
                        },
                    )
                };
                (fprev + psi_deep * zeta_up, bprev + zeta_deep * psi_up)
            };
            self.fsum_stack.push(fsum);
            self.forward_levels[level * kf + k].add(log_weight, Complex64::new(fsum, 0.0));
            if k >= 1 {
                self.bsum_stack.push(bsum);
                self.backward_levels[level * self.k_max + k - 1]
                    .add(log_weight, Complex64::new(bsum, 0.0));
            }
        }
    }
}

/// Limit of the per-level increments of weighted pair sums, taken over the
/// levels where lag-k pairs exist.
fn level_increment_limit(levels: &[WeightedSum], first: usize, n: usize) -> f64 {
    let increments: Vec<f64> = (first..=n)
        .map(|level| {
            let cur = levels[level].mean().re;
            let prev = if level == first {
                0.0
            } else {
                levels[level - 1].mean().re
            };
            cur - prev
        })
        .collect();
    series_limit(&increments).0
}

fn lag_correlations(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi: &TamePotential,
    zeta: &TamePotential,
    k_max: usize,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n <= k_max {
        return Err(Error::InvalidArgument(format!(
            "lag cutoff {k_max} needs tree depth > {k_max}, got {n}"
        )));
    }
    if bases.is_empty() {
        return Err(Error::InvalidArgument(
            "correlations need at least one base point".into(),
        ));
    }
    let means = gibbs_expectations(map, phi, &[psi, zeta], bases, window, n)?;
    let kf = k_max + 1;
    let mut forward_acc = vec![0.0f64; kf];
    let mut backward_acc = vec![0.0f64; k_max];
    for &w in bases {
        let mut visitor = LagWalk {
            phi,
            psi: (psi, IntegrandEval::new(phi, psi)),
            zeta: (zeta, IntegrandEval::new(phi, zeta)),
            psi_mean: means[0],
            zeta_mean: means[1],
            k_max,
            la_stack: vec![w.norm().ln()],
            psi_stack: Vec::new(),
            zeta_stack: Vec::new(),
            fsum_stack: Vec::new(),
            bsum_stack: Vec::new(),
            forward_levels: vec![WeightedSum::new(); (n + 1) * kf],
            backward_levels: vec![WeightedSum::new(); (n + 1) * k_max],
        };
        walk_tree(map, phi, w, n, window, &mut visitor)?;
        for k in 0..kf {
            let levels: Vec<WeightedSum> = (0..=n)
                .map(|level| visitor.forward_levels[level * kf + k])
                .collect();
            forward_acc[k] += level_increment_limit(&levels, k + 1, n);
            if k >= 1 {
                let levels: Vec<WeightedSum> = (0..=n)
                    .map(|level| visitor.backward_levels[level * k_max + k - 1])
                    .collect();
                backward_acc[k - 1] += level_increment_limit(&levels, k + 1, n);
            }
        }
    }
    let scale = 1.0 / bases.len() as f64;
    forward_acc.iter_mut().for_each(|v| *v *= scale);
    backward_acc.iter_mut().for_each(|v| *v *= scale);
    Ok((forward_acc, backward_acc))
}

/// Centered lag-`lag` correlation `C_lag(ψ₁, ψ₂)` under `μ_φ`.
pub fn correlation(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi1: &TamePotential,
    psi2: &TamePotential,
    lag: usize,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<f64> {
    let (forward, _) = lag_correlations(map, phi, psi1, psi2, lag, bases, window, n)?;
    Ok(forward[lag])
}

/// The correlation sequence `C_k` for `k = 0..=k_max` with a fitted
/// geometric decay factor.
pub fn correlation_decay(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi1: &TamePotential,
    psi2: &TamePotential,
    k_max: usize,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<CorrelationDecay> {
    let (forward, _) = lag_correlations(map, phi, psi1, psi2, k_max, bases, window, n)?;
    let (xi, below_noise, _) = fit_decay(&forward)?;
    Ok(CorrelationDecay {
        values: forward,
        xi,
        below_noise,
    })
}

/// Fit `|C_k| ~ C·ξ^k` over the last half of the lags. Returns
/// `(ξ, below_noise, remainder_after_last_lag)`.
fn fit_decay(correlations: &[f64]) -> Result<(f64, bool, f64)> {
    let k_max = correlations.len() - 1;
    let scale = correlations
        .iter()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    let noise = 1e-12 * (1.0 + scale);
    let from = (k_max / 2).max(1);
    let fit: Vec<(f64, f64)> = (from..=k_max)
        .filter(|&k| correlations[k].abs() > noise)
        .map(|k| (k as f64, correlations[k].abs().ln()))
        .collect();
    if fit.len() < 2 {
        return Ok((0.0, true, 0.0));
    }
    let (slope, intercept) = least_squares_line(&fit);
    let xi = slope.exp();
    if xi >= 1.0 {
        return Err(Error::UnreliableVariance {
            detail: format!(
                "lag correlations do not decay over the last {} lags (fitted ξ = {xi:.3})",
                fit.len()
            ),
        });
    }
    let remainder = (intercept + slope * (k_max + 1) as f64).exp() / (1.0 - xi);
    Ok((xi, false, remainder))
}

/// Green-Kubo asymptotic variance
/// `σ²(ψ,ζ) = C_0 + Σ_{k≥1} [C_k(ψ,ζ) + C_k(ζ,ψ)]`, truncated at lag
/// `k_max` with a fitted-decay remainder. Equals the second derivative
/// `d²/dε² P(φ+εψ)|_0` when ζ = ψ.
pub fn asymptotic_variance(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi: &TamePotential,
    zeta: &TamePotential,
    k_max: usize,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<VarianceEstimate> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("lag cutoff must be ≥ 1".into()));
    }
    let (forward, backward) =
        lag_correlations(map, phi, psi, zeta, k_max, bases, window, n)?;
    let mut correlations = vec![forward[0]];
    for k in 1..=k_max {
        correlations.push(forward[k] + backward[k - 1]);
    }
    let (xi, below_noise, remainder) = fit_decay(&correlations)?;
    let value = correlations.iter().sum::<f64>();
    Ok(VarianceEstimate {
        value,
        correlations,
        remainder,
        xi,
        below_noise,
    })
}

// ---------------------------------------------------------------------------
// Cohomology
// ---------------------------------------------------------------------------

/// Test whether φ and ψ are cohomologous up to a constant by comparing
/// Birkhoff averages over periodic orbits against `R̂ = P(φ) - P(ψ)`.
/// A defect near zero certifies (numerically) equal Gibbs states.
pub fn cohomology_defect(
    map: &AnalyticMap,
    phi: &TamePotential,
    psi: &TamePotential,
    max_period: usize,
    bases: &[Complex64],
    window: &BranchWindow,
    n: usize,
) -> Result<CohomologyCheck> {
    if max_period == 0 {
        return Err(Error::InvalidArgument("max_period must be ≥ 1".into()));
    }
    let p_phi = pressure(map, phi, bases, window, n, f64::INFINITY)?;
    let p_psi = pressure(map, psi, bases, window, n, f64::INFINITY)?;
    let r_hat = p_phi.value - p_psi.value;

    let seed_window = BranchWindow::new(window.max_count.max(4), window.max_modulus);
    let mut defect = 0.0f64;
    let mut points_used = 0usize;
    for period in 1..=max_period {
        let found =
            crate::maps::find_periodic_points(map, period, map.julia_seed(), &seed_window)?;
        for &z in &found.points {
            let s_phi = crate::potentials::birkhoff_sum(map, phi, z, period);
            let s_psi = crate::potentials::birkhoff_sum(map, psi, z, period);
            if let (Ok(a), Ok(b)) = (s_phi, s_psi) {
                defect = defect.max(((a - b) / period as f64 - r_hat).abs());
                points_used += 1;
            }
        }
    }
    if points_used == 0 {
        return Err(Error::NoPeriodicPoints { max_period });
    }
    Ok(CohomologyCheck {
        defect,
        r_hat,
        points_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AnalyticMap;
    use crate::potentials::HolderObservable;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square() -> AnalyticMap {
        AnalyticMap::power_map(2).unwrap()
    }

    fn circle_bases() -> Vec<Complex64> {
        vec![
            Complex64::from_polar(1.0, 0.4),
            Complex64::from_polar(1.0, 1.9),
            Complex64::from_polar(1.0, 4.0),
        ]
    }

    #[test]
    fn squaring_pressure_is_affine_in_t() {
        let map = square();
        let window = BranchWindow::new(2, 1e6);
        for (t, expected) in [(0.5, 0.5 * LN_2), (1.0, 0.0), (2.0, -LN_2)] {
            let phi = TamePotential::geometric(&map, t, Some(0.0)).unwrap();
            let est = pressure(&map, &phi, &circle_bases(), &window, 12, 5e-4).unwrap();
            assert_relative_eq!(est.value, expected, epsilon = 1e-10);
            assert!(est.converged);
            assert!(est.spread < 1e-10);
            assert_eq!(est.tail_fraction, 0.0);
        }
    }

    #[test]
    fn pressure_shifts_exactly_under_constants() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let shifted = phi.add_const(0.37);
        let bases = default_bases(&map, 3, 11).unwrap();
        let window = BranchWindow::new(6, 1e4);
        let a = pressure(&map, &phi, &bases, &window, 7, 1.0).unwrap();
        let b = pressure(&map, &shifted, &bases, &window, 7, 1.0).unwrap();
        assert_relative_eq!(b.value - a.value, 0.37, epsilon = 1e-12);
    }

    #[test]
    fn pressure_requires_three_bases() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let err = pressure(
            &map,
            &phi,
            &[c(1.0, 0.0)],
            &BranchWindow::new(2, 1e6),
            8,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn conformal_measure_on_the_circle() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let nu = conformal_measure(
            &map,
            &phi,
            0.1,
            4,
            c(1.0, 0.0),
            &BranchWindow::new(2, 1e6),
        )
        .unwrap();
        assert_relative_eq!(nu.total_mass(), 1.0, epsilon = 1e-10);
        assert!(nu.atoms().iter().all(|(_, m)| *m > 0.0));
        assert_eq!(nu.mass_outside(1.5), 0.0);
        // Within a level all weights are equal, so level masses follow
        // e^{-ns}·(level weight sum) alone.
        let level1: f64 = nu
            .atoms()
            .iter()
            .filter(|(z, _)| (z.norm() - 1.0).abs() < 1e-9)
            .map(|(_, m)| m)
            .sum();
        assert_relative_eq!(level1, 1.0, epsilon = 1e-10);
        let first = nu.atoms()[0].1;
        for (_, m) in nu.atoms().iter().take(2) {
            assert_relative_eq!(*m, first, max_relative = 1e-10);
        }
    }

    #[test]
    fn conformal_measure_of_exp_is_tight() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let bases = default_bases(&map, 3, 11).unwrap();
        let p = pressure(&map, &phi, &bases, &BranchWindow::new(6, 1e4), 7, 1.0)
            .unwrap()
            .value;
        let nu = conformal_measure(
            &map,
            &phi,
            p + 0.05,
            3,
            bases[0],
            &BranchWindow::new(30, 2.5e3),
        )
        .unwrap();
        assert_relative_eq!(nu.total_mass(), 1.0, epsilon = 1e-10);
        assert!(nu.decay_exponent > 0.0);
        // Masses outside growing disks decrease.
        for pair in nu.tightness.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-15);
        }
    }

    #[test]
    fn gibbs_density_of_squaring_is_one() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let window = BranchWindow::new(2, 1e6);
        let est = pressure(&map, &phi, &circle_bases(), &window, 10, 1e-6).unwrap();
        let profile = gibbs_density(
            &map,
            &phi,
            &est,
            &circle_bases(),
            6,
            &window,
            1e-10,
        )
        .unwrap();
        for v in &profile.values {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-10);
        }
        assert!(profile.residual < 1e-12);
        assert!(profile.converged);
    }

    #[test]
    fn gibbs_expectation_recovers_constants_and_log_two() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let window = BranchWindow::new(2, 1e6);
        let w = c(1.0, 0.0);
        let log_deriv = TamePotential::log_deriv_integrand(0.0);
        let got = gibbs_expectation(&map, &phi, &log_deriv, 10, &window, w).unwrap();
        assert_relative_eq!(got, LN_2, epsilon = 1e-10);

        let constant = TamePotential::loosely_tame(
            0.0,
            0.0,
            HolderObservable::constant(0.7),
        );
        let got = gibbs_expectation(&map, &phi, &constant, 10, &window, w).unwrap();
        assert_relative_eq!(got, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_closed_forms_and_finite_differences() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let window = BranchWindow::new(2, 1e6);
        let bases = circle_bases();
        let minus_log = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let grad =
            pressure_gradient(&map, &phi, &minus_log, &bases, &window, 10).unwrap();
        assert_relative_eq!(grad, -LN_2, epsilon = 1e-10);

        let one = TamePotential::loosely_tame(0.0, 0.0, HolderObservable::constant(1.0));
        let unit_grad = pressure_gradient(&map, &phi, &one, &bases, &window, 10).unwrap();
        assert_relative_eq!(unit_grad, 1.0, epsilon = 1e-12);

        // Central finite difference along ψ = -log|f'|: P is affine in t.
        let eps = 1e-3;
        let plus = TamePotential::geometric(&map, 1.0 + eps, Some(0.0)).unwrap();
        let minus = TamePotential::geometric(&map, 1.0 - eps, Some(0.0)).unwrap();
        let p_plus = pressure(&map, &plus, &bases, &window, 10, 1.0).unwrap().value;
        let p_minus = pressure(&map, &minus, &bases, &window, 10, 1.0)
            .unwrap()
            .value;
        let fd = (p_plus - p_minus) / (2.0 * eps);
        assert_relative_eq!(fd, grad, epsilon = 1e-9);
    }

    #[test]
    fn entropy_and_lyapunov_of_power_maps() {
        for d in [2u32, 3] {
            let map = AnalyticMap::power_map(d).unwrap();
            let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
            let out = entropy_and_lyapunov(
                &map,
                &phi,
                &circle_bases(),
                &BranchWindow::new(d as usize, 1e6),
                10,
            )
            .unwrap();
            let log_d = f64::from(d).ln();
            assert_relative_eq!(out.h_mu, log_d, epsilon = 1e-9);
            assert_relative_eq!(out.chi_mu, log_d, epsilon = 1e-9);
        }
    }

    #[test]
    fn variance_vanishes_for_constants_and_coboundaries() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let window = BranchWindow::new(2, 1e6);
        let bases = circle_bases();
        let constant =
            TamePotential::loosely_tame(0.0, 0.0, HolderObservable::constant(3.0));
        let out = asymptotic_variance(
            &map, &phi, &constant, &constant, 4, &bases, &window, 10,
        )
        .unwrap();
        assert!(out.value.abs() < 1e-12);
        assert!(out.below_noise);

        // log|f'| = log 2 on the circle: constant, so σ² = 0.
        let log_deriv = TamePotential::log_deriv_integrand(0.0);
        let out = asymptotic_variance(
            &map, &phi, &log_deriv, &log_deriv, 4, &bases, &window, 10,
        )
        .unwrap();
        assert!(out.value.abs() < 1e-10);
    }

    #[test]
    fn lag_one_correlation_of_the_re_mode_vanishes() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let re = TamePotential::loosely_tame(
            0.0,
            0.0,
            HolderObservable::re_z_clamped(2.0).unwrap(),
        );
        let got = correlation(
            &map,
            &phi,
            &re,
            &re,
            1,
            &circle_bases(),
            &BranchWindow::new(2, 1e6),
            10,
        )
        .unwrap();
        assert!(got.abs() < 1e-10, "C_1 = {got}");

        let constant =
            TamePotential::loosely_tame(0.0, 0.0, HolderObservable::constant(0.4));
        let got = correlation(
            &map,
            &phi,
            &re,
            &constant,
            3,
            &circle_bases(),
            &BranchWindow::new(2, 1e6),
            10,
        )
        .unwrap();
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn variance_of_re_mode_is_positive_with_zero_lags() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let re = TamePotential::loosely_tame(
            0.0,
            0.0,
            HolderObservable::re_z_clamped(2.0).unwrap(),
        );
        let out = asymptotic_variance(
            &map,
            &phi,
            &re,
            &re,
            4,
            &circle_bases(),
            &BranchWindow::new(2, 1e6),
            12,
        )
        .unwrap();
        // ∫(Re z)² over the circle = 1/2 up to the O(1/n) boundary term
        // from the two-point first level; every lag term vanishes.
        assert_relative_eq!(out.value, 0.5, max_relative = 5e-3);
        assert!(out.value >= -1e-9);
        for c in &out.correlations[1..] {
            assert!(c.abs() < 1e-10, "lag term {c}");
        }
    }

    #[test]
    fn cohomology_defect_detects_constant_shifts() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let shifted = phi.add_const(0.3);
        let out = cohomology_defect(
            &map,
            &phi,
            &shifted,
            3,
            &circle_bases(),
            &BranchWindow::new(2, 1e6),
            10,
        )
        .unwrap();
        assert!(out.points_used >= 3);
        assert_relative_eq!(out.r_hat, -0.3, epsilon = 1e-9);
        assert!(out.defect <= 1e-8, "defect = {}", out.defect);

        // -log|f'| vs -2log|f'|: both Birkhoff sums are constant on the
        // circle, so the defect stays at zero while R̂ = log 2.
        let twice = TamePotential::geometric(&map, 2.0, Some(0.0)).unwrap();
        let out = cohomology_defect(
            &map,
            &phi,
            &twice,
            3,
            &circle_bases(),
            &BranchWindow::new(2, 1e6),
            10,
        )
        .unwrap();
        assert_relative_eq!(out.r_hat, LN_2, epsilon = 1e-9);
        assert!(out.defect <= 1e-8);
    }

    #[test]
    fn exp_pressure_is_tau_independent_in_smoke_sizes() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let bases = default_bases(&map, 3, 11).unwrap();
        let window = BranchWindow::new(6, 1e4);
        let p1 = {
            let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
            pressure(&map, &phi, &bases, &window, 7, 1.0).unwrap().value
        };
        let p2 = {
            let phi = TamePotential::geometric(&map, 1.25, Some(0.9)).unwrap();
            pressure(&map, &phi, &bases, &window, 7, 1.0).unwrap().value
        };
        assert!(
            (p1 - p2).abs() < 5e-3,
            "τ dependence too strong in smoke test: {p1} vs {p2}"
        );
    }
}
