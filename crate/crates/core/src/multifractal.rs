//! Bowen's formula, the temperature function, and multifractal spectra.
//!
//! All three reduce to root-finding on the pressure: the hyperbolic
//! dimension is the zero of `t ↦ P(-t·log|f'|_τ)`, and the temperature
//! `T(q)` solves `P(qφ - T·log|f'|_τ) = 0` for a normalized potential φ.
//! Pressure is strictly decreasing in both parameters, so every solve is
//! a safeguarded bracket search; the temperature solver additionally uses
//! the analytic slope `dP/dT = -∫log|f'|_τ dμ` obtained in the same tree
//! walk as the pressure itself.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{AnalyticMap, BranchWindow};
use crate::potentials::{select_tau, TamePotential};
use crate::thermo::{default_bases, pressure_with_expectations};

/// Serial with warm-starts across grids, or parallel with cold starts.
/// Both are deterministic for a fixed config; `Fast` trades the
/// warm-start advantage for parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Deterministic,
    Fast,
}

/// Shared configuration for the pressure-zero solvers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub window: BranchWindow,
    pub depth: usize,
    pub bases: Vec<Complex64>,
    /// Residual bound `|P| ≤ root_tol` at every accepted root.
    pub root_tol: f64,
    /// Overrides the default Bowen bracket.
    pub bracket: Option<(f64, f64)>,
    /// Position of τ inside its feasible interval, near the upper end.
    pub tau_position: f64,
}

impl SolverOptions {
    /// Family-tuned defaults: complete windows for finite-degree maps, a
    /// 32-branch window for transcendental ones. The wide window costs
    /// depth, but narrow windows bias root-finding hard: dropping to 8
    /// branches shifts the zero of the truncated exp pressure below the
    /// default bracket.
    pub fn standard(map: &AnalyticMap, seed: u64) -> Result<Self> {
        let (window, depth) = match map.finite_degree() {
            Some(d) => (BranchWindow::new(d as usize, 1e6), 14),
            None => (BranchWindow::new(32, 1e7), 4),
        };
        Ok(SolverOptions {
            window,
            depth,
            bases: default_bases(map, 3, seed)?,
            root_tol: 1e-11,
            bracket: None,
            tau_position: 0.9,
        })
    }
}

/// Bowen root with solver provenance.
#[derive(Debug, Clone)]
pub struct BowenRoot {
    /// The hyperbolic dimension estimate: the zero of `t ↦ P(-t·log|f'|_τ)`.
    pub value: f64,
    /// `|P|` at the returned root.
    pub residual: f64,
    /// τ position that produced a valid bracket (retries move it toward
    /// the upper end of the feasible interval).
    pub tau_position: f64,
    pub evaluations: usize,
}

fn geometric_at(map: &AnalyticMap, t: f64, tau_position: f64) -> Result<TamePotential> {
    let tau = if map.finite_degree().is_some() {
        0.0
    } else {
        select_tau(map, t, tau_position)?
    };
    TamePotential::geometric(map, t, Some(tau))
}

/// Bracketed root of a strictly decreasing function, refined by inverse
/// quadratic interpolation with bisection safeguards.
fn bracketed_root(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    residual_tol: f64,
) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    let mut samples = Vec::new();
    let mut eval = |x: f64, samples: &mut Vec<(f64, f64)>| -> Result<f64> {
        let fx = f(x)?;
        samples.push((x, fx));
        Ok(fx)
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = eval(a, &mut samples)?;
    if fa.abs() <= residual_tol {
        return Ok((a, fa, samples));
    }
    let mut fb = eval(b, &mut samples)?;
    if fb.abs() <= residual_tol {
        return Ok((b, fb, samples));
    }
    if fa * fb > 0.0 {
        return Err(Error::BracketFailure { lo, hi, samples });
    }
    let (mut c, mut fc) = (a, fa);
    for _ in 0..60 {
        let width = b - a;
        let mut x = if fa != fc && fb != fc && fa != fb {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let margin = 0.01 * width;
        if !x.is_finite() || x <= a + margin || x >= b - margin {
            x = a + 0.5 * width;
        }
        let fx = eval(x, &mut samples)?;
        if fx.abs() <= residual_tol || width.abs() < 1e-13 * (1.0 + x.abs()) {
            return Ok((x, fx, samples));
        }
        if fa * fx < 0.0 {
            (c, fc) = (b, fb);
            (b, fb) = (x, fx);
        } else {
            (c, fc) = (a, fa);
            (a, fa) = (x, fx);
        }
    }
    let (x, fx) = *samples
        .iter()
        .min_by(|p, q| p.1.abs().total_cmp(&q.1.abs()))
        .unwrap();
    Err(Error::NotConverged {
        what: "pressure root".into(),
        detail: format!("best |P({x})| = {:.3e} after 60 refinements", fx.abs()),
    })
}

fn default_bracket(map: &AnalyticMap) -> (f64, f64) {
    let g = map.growth();
    if map.finite_degree().is_some() {
        (0.5, 2.5)
    } else {
        (g.order / g.alpha_sum() + 0.05, 2.5)
    }
}

fn bowen_at_position(
    map: &AnalyticMap,
    opts: &SolverOptions,
    position: f64,
    bracket: (f64, f64),
) -> Result<BowenRoot> {
    let mut evals = 0usize;
    let mut f = |t: f64| -> Result<f64> {
        evals += 1;
        let phi = geometric_at(map, t, position)?;
        Ok(pressure_with_expectations(map, &phi, &[], &opts.bases, &opts.window, opts.depth)?
            .value)
    };
    let (root, residual, _) = bracketed_root(&mut f, bracket.0, bracket.1, opts.root_tol)?;
    Ok(BowenRoot {
        value: root,
        residual: residual.abs(),
        tau_position: position,
        evaluations: evals,
    })
}

/// Hyperbolic dimension by Bowen's formula. The geometric potential's τ
/// is re-selected at every trial `t`; if the default position fails to
/// bracket a sign change, τ is pushed toward the upper end of its
/// feasible interval and the solve retried.
pub fn bowen_dimension(map: &AnalyticMap, opts: &SolverOptions) -> Result<BowenRoot> {
    let bracket = opts.bracket.unwrap_or_else(|| default_bracket(map));
    let mut last = None;
    for position in [opts.tau_position, 0.95, 0.99] {
        match bowen_at_position(map, opts, position, bracket) {
            Ok(root) => return Ok(root),
            Err(e @ Error::BracketFailure { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        if map.finite_degree().is_some() {
            break;
        }
    }
    Err(last.unwrap())
}

/// Subtract `P(φ)` from the potential (absorbed into its Hölder part)
/// and re-estimate as a post-check; returns the normalized potential,
/// the constant subtracted, and the residual pressure.
pub fn normalize_potential(
    map: &AnalyticMap,
    phi: &TamePotential,
    opts: &SolverOptions,
) -> Result<(TamePotential, f64, f64)> {
    let before = pressure_with_expectations(map, phi, &[], &opts.bases, &opts.window, opts.depth)?;
    let normalized = phi.add_const(-before.value);
    let after =
        pressure_with_expectations(map, &normalized, &[], &opts.bases, &opts.window, opts.depth)?;
    Ok((normalized, before.value, after.value))
}

/// Tameness floor for the effective exponent: `ρ/τ̂` for transcendental
/// maps, zero for finite-degree ones (whose preimage sums are finite).
fn exponent_threshold(map: &AnalyticMap, tau: f64) -> f64 {
    if map.finite_degree().is_some() {
        0.0
    } else {
        let g = map.growth();
        g.order / (g.alpha1 + tau)
    }
}

/// The weight `qφ - T·log|f'|_τ` with feasibility guard; τ is φ's own.
fn temperature_weight(
    map: &AnalyticMap,
    phi: &TamePotential,
    q: f64,
    t_temp: f64,
) -> Result<TamePotential> {
    let t_eff = t_temp + q * phi.t();
    let threshold = exponent_threshold(map, phi.tau());
    if t_eff <= threshold + 1e-9 {
        return Err(Error::InfeasibleExponent {
            t_eff,
            threshold,
            q,
        });
    }
    let log_deriv = TamePotential::log_deriv_integrand(phi.tau());
    TamePotential::linear_combination(&[(q, phi), (-t_temp, &log_deriv)])?.into_tame(map)
}

/// Solve `P(qφ - T·log|f'|_τ) = 0` for `T` by safeguarded Newton, using
/// the analytic slope from the same walk. `warm` seeds the iteration.
pub fn temperature(
    map: &AnalyticMap,
    phi: &TamePotential,
    q: f64,
    opts: &SolverOptions,
    warm: Option<f64>,
) -> Result<f64> {
    let floor = exponent_threshold(map, phi.tau()) - q * phi.t();
    let log_deriv = TamePotential::log_deriv_integrand(phi.tau());
    let eval = |t_temp: f64| -> Result<(f64, f64)> {
        let weight = temperature_weight(map, phi, q, t_temp)?;
        let out = pressure_with_expectations(
            map,
            &weight,
            &[&log_deriv],
            &opts.bases,
            &opts.window,
            opts.depth,
        )?;
        Ok((out.value, -out.expectations[0]))
    };

    let mut x = warm.unwrap_or(1.0).max(floor + 0.05);
    let mut bracket_lo: Option<f64> = None;
    let mut bracket_hi: Option<f64> = None;
    let mut grow = 0.5;
    for _ in 0..60 {
        let (p, dp) = eval(x)?;
        if p.abs() <= opts.root_tol {
            return Ok(x);
        }
        if p > 0.0 {
            bracket_lo = Some(bracket_lo.map_or(x, |v| v.max(x)));
        } else {
            bracket_hi = Some(bracket_hi.map_or(x, |v| v.min(x)));
        }
        let newton = if dp < 0.0 && dp.is_finite() {
            Some(x - p / dp)
        } else {
            None
        };
        let inside = |y: f64| {
            y > floor + 1e-7
                && bracket_lo.is_none_or(|lo| y > lo)
                && bracket_hi.is_none_or(|hi| y < hi)
        };
        x = match newton {
            Some(y) if inside(y) => y,
            _ => match (bracket_lo, bracket_hi) {
                (Some(lo), Some(hi)) => 0.5 * (lo + hi),
                // Root lies above every sample so far: march right.
                (Some(lo), None) => {
                    grow *= 2.0;
                    lo + grow
                }
                // Root lies below: bisect toward the feasibility floor.
                (None, Some(hi)) => {
                    if hi - floor < 1e-6 {
                        return Err(Error::InfeasibleExponent {
                            t_eff: floor + q * phi.t(),
                            threshold: floor + q * phi.t(),
                            q,
                        });
                    }
                    0.5 * (hi + floor)
                }
                (None, None) => unreachable!("every sample updates a bracket side"),
            },
        };
    }
    Err(Error::NotConverged {
        what: format!("temperature at q = {q}"),
        detail: "safeguarded Newton exceeded 60 iterations".into(),
    })
}

/// Temperature function on a grid with both derivative routes.
#[derive(Debug, Clone)]
pub struct TemperatureCurve {
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    /// `T'(q) = ∫φ dμ_q / ∫log|f'|_τ dμ_q` at the solved weight.
    pub t1_analytic: Vec<f64>,
    /// Central differences of T on the grid (one-sided at the ends).
    pub t1_fd: Vec<f64>,
    /// Second divided differences (endpoints copy their neighbors).
    pub t2: Vec<f64>,
    /// `∫log|f'|_τ dμ_q`, the denominator of the analytic slope.
    pub chi_tau: Vec<f64>,
    pub potential_id: String,
    /// Constant subtracted from the input potential to normalize it.
    pub normalization: f64,
    pub tau: f64,
    /// Set when a grid point failed and the curve was truncated.
    pub warning: Option<String>,
}

impl TemperatureCurve {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

fn curve_at_tau(
    map: &AnalyticMap,
    phi: &TamePotential,
    q_grid: &[f64],
    opts: &SolverOptions,
) -> Result<TemperatureCurve> {
    let (phi0, shift, _residual) = normalize_potential(map, phi, opts)?;
    let log_deriv = TamePotential::log_deriv_integrand(phi0.tau());
    let mut q = Vec::new();
    let mut t = Vec::new();
    let mut t1_analytic = Vec::new();
    let mut chi_tau = Vec::new();
    let mut warning = None;
    let mut warm = None;
    for &qi in q_grid {
        let ti = match temperature(map, &phi0, qi, opts, warm) {
            Ok(v) => v,
            Err(e) => {
                warning = Some(format!("curve truncated at q = {qi}: {e}"));
                break;
            }
        };
        warm = Some(ti);
        let weight = temperature_weight(map, &phi0, qi, ti)?;
        let out = pressure_with_expectations(
            map,
            &weight,
            &[&phi0, &log_deriv],
            &opts.bases,
            &opts.window,
            opts.depth,
        )?;
        q.push(qi);
        t.push(ti);
        t1_analytic.push(out.expectations[0] / out.expectations[1]);
        chi_tau.push(out.expectations[1]);
    }
    if q.len() < 3 {
        return Err(Error::NotConverged {
            what: "temperature curve".into(),
            detail: warning.unwrap_or_else(|| "fewer than 3 grid points solved".into()),
        });
    }

    let n = q.len();
    let mut t1_fd = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        t1_fd[i] = (t[b] - t[a]) / (q[b] - q[a]);
    }
    let mut t2 = vec![0.0; n];
    for i in 1..n - 1 {
        let left = (t[i] - t[i - 1]) / (q[i] - q[i - 1]);
        let right = (t[i + 1] - t[i]) / (q[i + 1] - q[i]);
        t2[i] = 2.0 * (right - left) / (q[i + 1] - q[i - 1]);
    }
    t2[0] = t2[1];
    t2[n - 1] = t2[n - 2];

    for (i, &slope) in t1_analytic.iter().enumerate() {
        if slope >= 0.0 {
            return Err(Error::NotConverged {
                what: "temperature curve".into(),
                detail: format!("T'({}) = {slope} is not negative", q[i]),
            });
        }
    }

    Ok(TemperatureCurve {
        q,
        t,
        t1_analytic,
        t1_fd,
        t2,
        chi_tau,
        potential_id: format!(
            "t={} tau={} h_sup={}",
            phi0.t(),
            phi0.tau(),
            phi0.h().sup_bound()
        ),
        normalization: shift,
        tau: phi0.tau(),
        warning,
    })
}

/// `T(q)` across the grid with analytic and finite-difference slopes.
/// On bracket failure the whole curve is retried with τ re-selected
/// closer to the upper end of its feasible interval.
pub fn temperature_curve(
    map: &AnalyticMap,
    phi: &TamePotential,
    q_grid: &[f64],
    opts: &SolverOptions,
) -> Result<TemperatureCurve> {
    if q_grid.len() < 5 {
        return Err(Error::InvalidArgument(
            "temperature curve needs a grid of at least 5 points".into(),
        ));
    }
    if q_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument(
            "q grid must be strictly ascending".into(),
        ));
    }
    let mut last_err = None;
    for position in [None, Some(0.95), Some(0.99)] {
        let candidate = match position {
            None => phi.clone(),
            Some(pos) => {
                if map.finite_degree().is_some() {
                    break;
                }
                let tau = select_tau(map, phi.t(), pos)?;
                TamePotential::tame(map, phi.t(), Some(tau), phi.h().clone())?
            }
        };
        match curve_at_tau(map, &candidate, q_grid, opts) {
            Ok(mut curve) => {
                if let Some(pos) = position {
                    let note = format!("τ re-selected at position {pos}");
                    curve.warning = Some(match curve.warning {
                        Some(w) => format!("{note}; {w}"),
                        None => note,
                    });
                }
                return Ok(curve);
            }
            Err(e @ (Error::BracketFailure { .. } | Error::InfeasibleExponent { .. })) => {
                last_err = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

/// Multifractal spectrum as the parametric Legendre pair of the
/// temperature function.
#[derive(Debug, Clone)]
pub struct SpectrumCurve {
    /// `α(q) = -T'(q)` (analytic route).
    pub alpha: Vec<f64>,
    /// `F(α) = T(q) + q·α(q)`.
    pub f: Vec<f64>,
    pub q: Vec<f64>,
    /// Observed α-range on the grid; the true range is its open limit.
    pub alpha_range: (f64, f64),
    /// α-range narrower than 1e-4: the spectrum collapses to a point.
    pub degenerate: bool,
    /// Worst violation of concavity along the parametrization.
    pub concavity_defect: f64,
}

/// Legendre-pair diagnostic: for each interior q, the minimum over the
/// grid of `α(q)·q' + T(q')` should be attained at `q' = q` and equal F.
#[derive(Debug, Clone, Copy)]
pub struct LegendreCheck {
    pub max_value_defect: f64,
    pub aligned: bool,
}

pub fn legendre_check(curve: &TemperatureCurve) -> LegendreCheck {
    let n = curve.len();
    let mut max_defect = 0.0f64;
    let mut aligned = true;
    for i in 1..n - 1 {
        let alpha = -curve.t1_analytic[i];
        let f_i = curve.t[i] + curve.q[i] * alpha;
        // Near-ties (exact on a degenerate, affine T) break toward the
        // closest grid index, since any of the tied points attains the
        // transform.
        let mut min_val = f64::INFINITY;
        let mut argmin = 0usize;
        for j in 0..n {
            let val = alpha * curve.q[j] + curve.t[j];
            let tol = 1e-12 * (1.0 + val.abs());
            if val < min_val - tol
                || (val <= min_val + tol && j.abs_diff(i) < argmin.abs_diff(i))
            {
                min_val = min_val.min(val);
                argmin = j;
            }
        }
        if argmin.abs_diff(i) > 1 {
            aligned = false;
        }
        max_defect = max_defect.max((min_val - f_i).abs());
    }
    LegendreCheck {
        max_value_defect: max_defect,
        aligned,
    }
}

/// Spectrum from an already-computed temperature curve. Refuses
/// non-convex input; collapses to a single point when the α-range is
/// degenerate.
pub fn spectrum_from_curve(curve: &TemperatureCurve) -> Result<SpectrumCurve> {
    for (i, &t2) in curve.t2.iter().enumerate() {
        if t2 < -1e-6 {
            return Err(Error::NonConvexTemperature {
                q: curve.q[i],
                t2,
            });
        }
    }
    let alpha: Vec<f64> = curve.t1_analytic.iter().map(|s| -s).collect();
    let f: Vec<f64> = curve
        .t
        .iter()
        .zip(&alpha)
        .zip(&curve.q)
        .map(|((t, a), q)| t + q * a)
        .collect();
    let lo = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = hi - lo < 1e-4;
    if degenerate {
        let i0 = curve
            .q
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        return Ok(SpectrumCurve {
            alpha: vec![alpha[i0]],
            f: vec![f[i0]],
            q: vec![curve.q[i0]],
            alpha_range: (lo, hi),
            degenerate: true,
            concavity_defect: 0.0,
        });
    }

    let mut concavity_defect = 0.0f64;
    for i in 1..alpha.len() - 1 {
        let (a0, a1, a2) = (alpha[i - 1], alpha[i], alpha[i + 1]);
        if (a1 - a0).abs() < 1e-12 || (a2 - a1).abs() < 1e-12 {
            continue;
        }
        let left = (f[i] - f[i - 1]) / (a1 - a0);
        let right = (f[i + 1] - f[i]) / (a2 - a1);
        let second = 2.0 * (right - left) / (a2 - a0);
        concavity_defect = concavity_defect.max(second);
    }
    for value in &f {
        if *value < -1e-6 {
            return Err(Error::NotConverged {
                what: "spectrum".into(),
                detail: format!("negative dimension F = {value}"),
            });
        }
    }
    Ok(SpectrumCurve {
        alpha,
        f,
        q: curve.q.clone(),
        alpha_range: (lo, hi),
        degenerate: false,
        concavity_defect,
    })
}

pub fn spectrum(
    map: &AnalyticMap,
    phi: &TamePotential,
    q_grid: &[f64],
    opts: &SolverOptions,
) -> Result<SpectrumCurve> {
    spectrum_from_curve(&temperature_curve(map, phi, q_grid, opts)?)
}

/// Volume-Lemma dimension `HD(μ_φ) = h_μ/χ_μ`.
pub fn dimension_of_measure(
    map: &AnalyticMap,
    phi: &TamePotential,
    opts: &SolverOptions,
) -> Result<f64> {
    let out = crate::thermo::entropy_and_lyapunov(
        map,
        phi,
        &opts.bases,
        &opts.window,
        opts.depth,
    )?;
    if out.chi_mu <= 0.0 {
        return Err(Error::NotConverged {
            what: "dimension of measure".into(),
            detail: format!("non-positive Lyapunov exponent {}", out.chi_mu),
        });
    }
    Ok(out.h_mu / out.chi_mu)
}

/// The convexity identity pair at one grid index: `χ_τ(μ_q)·T''(q)` and
/// the Green-Kubo variance of `u_q = φ - T'(q)·log|f'|_τ` under μ_q.
/// The two agree for the exact operator.
pub fn convexity_variance_pair(
    map: &AnalyticMap,
    phi_normalized: &TamePotential,
    curve: &TemperatureCurve,
    idx: usize,
    k_lag: usize,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let q = curve.q[idx];
    let weight = temperature_weight(map, phi_normalized, q, curve.t[idx])?;
    let log_deriv = TamePotential::log_deriv_integrand(phi_normalized.tau());
    let u_q = TamePotential::linear_combination(&[
        (1.0, phi_normalized),
        (-curve.t1_analytic[idx], &log_deriv),
    ])?;
    let variance = crate::thermo::asymptotic_variance(
        map,
        &weight,
        &u_q,
        &u_q,
        k_lag,
        &opts.bases,
        &opts.window,
        opts.depth,
    )?;
    Ok((curve.chi_tau[idx] * curve.t2[idx], variance.value))
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum SweepTask {
    Bowen,
    /// Bowen root plus the spectrum of its geometric potential on the
    /// given q-grid.
    SpectrumAt(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub window: BranchWindow,
    pub depth: usize,
    pub base_count: usize,
    pub seed: u64,
    pub root_tol: f64,
    pub tau_position: f64,
    pub mode: RunMode,
}

impl SweepConfig {
    pub fn standard(transcendental: bool, seed: u64) -> Self {
        let (window, depth) = if transcendental {
            (BranchWindow::new(32, 1e7), 4)
        } else {
            (BranchWindow::new(2, 1e6), 14)
        };
        SweepConfig {
            window,
            depth,
            base_count: 3,
            seed,
            root_tol: 1e-11,
            tau_position: 0.9,
            mode: RunMode::Deterministic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: f64,
    /// One entry per column; empty when skipped.
    pub values: Vec<f64>,
    /// Reason the grid point was skipped (failed hyperbolicity check).
    pub skipped: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub family: String,
    pub param_name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
    /// Max residual of a degree-4 fit over any 7 consecutive points of
    /// the first column, relative to that column's range.
    pub smoothness_residual: f64,
}

fn build_family_map(family_id: &str, param: f64) -> Result<AnalyticMap> {
    match family_id {
        "exp" => AnalyticMap::exp_map(param),
        "tangent" => AnalyticMap::tangent_map(param),
        "sine" => AnalyticMap::sine_map(param, 0.0),
        "power" => AnalyticMap::power_map(param as u32),
        "quadratic" => AnalyticMap::quadratic_map(param),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

fn param_name(family_id: &str) -> &'static str {
    match family_id {
        "exp" | "tangent" => "lambda",
        "sine" => "a",
        "power" => "d",
        "quadratic" => "c",
        _ => "param",
    }
}

fn sweep_row(
    family_id: &str,
    param: f64,
    task: &SweepTask,
    cfg: &SweepConfig,
    warm: Option<f64>,
) -> Result<SweepRow> {
    let map = match build_family_map(family_id, param) {
        Ok(m) => m,
        Err(e @ (Error::NotVerifiedHyperbolic { .. } | Error::InvalidParameters { .. })) => {
            return Ok(SweepRow {
                param,
                values: Vec::new(),
                skipped: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let mut opts = SolverOptions {
        window: cfg.window,
        depth: cfg.depth,
        bases: default_bases(&map, cfg.base_count, cfg.seed)?,
        root_tol: cfg.root_tol,
        bracket: None,
        tau_position: cfg.tau_position,
    };
    if let Some(h_prev) = warm {
        let bracket = (h_prev - 0.08, h_prev + 0.08);
        opts.bracket = Some(bracket);
        if bowen_at_position(&map, &opts, cfg.tau_position, bracket).is_err() {
            opts.bracket = None;
        }
    }
    let root = bowen_dimension(&map, &opts)?;
    let values = match task {
        SweepTask::Bowen => vec![root.value],
        SweepTask::SpectrumAt(q_grid) => {
            let phi = geometric_at(&map, root.value, root.tau_position)?;
            let spec = spectrum(&map, &phi, q_grid, &opts)?;
            let f_max = spec.f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![root.value, spec.alpha_range.0, spec.alpha_range.1, f_max]
        }
    };
    Ok(SweepRow {
        param,
        values,
        skipped: None,
    })
}

/// Max absolute residual of degree-4 least-squares fits over every 7
/// consecutive points, relative to the value range. Small residuals are
/// the operational smoothness diagnostic for parameter dependence.
fn smoothness_residual(params: &[f64], values: &[f64]) -> f64 {
    if params.len() < 7 {
        return 0.0;
    }
    let range = values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = range.max(1e-12);
    let mut worst = 0.0f64;
    for start in 0..=params.len() - 7 {
        let xs = &params[start..start + 7];
        let ys = &values[start..start + 7];
        let mid = xs[3];
        let span = (xs[6] - xs[0]).max(1e-12);
        let design = nalgebra::DMatrix::from_fn(7, 5, |i, j| {
            ((xs[i] - mid) / span).powi(j as i32)
        });
        let rhs = nalgebra::DVector::from_row_slice(ys);
        let coeffs = design
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .expect("svd of a 7x5 Vandermonde");
        let fitted = design * coeffs;
        for i in 0..7 {
            worst = worst.max((fitted[i] - ys[i]).abs());
        }
    }
    worst / scale
}

/// Sweep a one-parameter family. Deterministic mode runs serially and
/// warm-starts each solve from the previous root; fast mode solves grid
/// points independently in parallel (ordered output either way).
pub fn parameter_sweep(
    family_id: &str,
    params: &[f64],
    task: &SweepTask,
    cfg: &SweepConfig,
) -> Result<SweepTable> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    let rows: Vec<SweepRow> = match cfg.mode {
        RunMode::Deterministic => {
            let mut rows = Vec::with_capacity(params.len());
            let mut warm = None;
            for &p in params {
                let row = sweep_row(family_id, p, task, cfg, warm)?;
                if row.skipped.is_none() {
                    warm = Some(row.values[0]);
                }
                rows.push(row);
            }
            rows
        }
        RunMode::Fast => params
            .par_iter()
            .map(|&p| sweep_row(family_id, p, task, cfg, None))
            .collect::<Result<Vec<_>>>()?,
    };
    let fitted: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.skipped.is_none())
        .map(|r| (r.param, r.values[0]))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = fitted.into_iter().unzip();
    let columns = match task {
        SweepTask::Bowen => vec!["bowen"],
        SweepTask::SpectrumAt(_) => vec!["bowen", "alpha_min", "alpha_max", "f_max"],
    };
    Ok(SweepTable {
        family: family_id.to_string(),
        param_name: param_name(family_id),
        columns,
        rows,
        smoothness_residual: smoothness_residual(&xs, &ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::HolderObservable;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn square_opts() -> SolverOptions {
        SolverOptions {
            window: BranchWindow::new(2, 1e6),
            depth: 12,
            bases: vec![
                Complex64::from_polar(1.0, 0.4),
                Complex64::from_polar(1.0, 1.9),
                Complex64::from_polar(1.0, 4.0),
            ],
            root_tol: 1e-11,
            bracket: None,
            tau_position: 0.9,
        }
    }

    #[test]
    fn bowen_roots_of_power_maps_are_one() {
        for d in [2u32, 3] {
            let map = AnalyticMap::power_map(d).unwrap();
            let mut opts = square_opts();
            opts.window = BranchWindow::new(d as usize, 1e6);
            let root = bowen_dimension(&map, &opts).unwrap();
            assert_relative_eq!(root.value, 1.0, epsilon = 1e-6);
            assert!(root.residual <= 1e-11);
        }
    }

    #[test]
    fn bowen_root_of_quadratic_matches_the_small_c_response() {
        let map = AnalyticMap::quadratic_map(0.1).unwrap();
        let mut opts = square_opts();
        opts.bases = default_bases(&map, 3, 5).unwrap();
        opts.depth = 14;
        let root = bowen_dimension(&map, &opts).unwrap();
        let predicted = 1.0 + 0.1f64.powi(2) / (4.0 * LN_2);
        assert_relative_eq!(root.value, predicted, epsilon = 1e-3);
    }

    #[test]
    fn bracket_failure_reports_samples() {
        let map = AnalyticMap::power_map(2).unwrap();
        let mut opts = square_opts();
        opts.bracket = Some((1.5, 2.5));
        let err = bowen_dimension(&map, &opts).unwrap_err();
        match err {
            Error::BracketFailure { samples, .. } => assert_eq!(samples.len(), 2),
            other => panic!("expected bracket failure, got {other}"),
        }
    }

    #[test]
    fn normalization_zeroes_the_pressure() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::geometric(&map, 2.0, Some(0.0)).unwrap();
        let (phi0, shift, residual) = normalize_potential(&map, &phi, &opts).unwrap();
        assert_relative_eq!(shift, -LN_2, epsilon = 1e-10);
        assert!(residual.abs() < 1e-12);
        // The constant lands in the Hölder part.
        assert_relative_eq!(phi0.h().value(Complex64::new(1.0, 0.0)), LN_2, epsilon = 1e-10);
    }

    #[test]
    fn squaring_temperature_is_one_minus_q() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let mut warm = None;
        for q in [-0.5, 0.7, 1.0, 2.0] {
            let t = temperature(&map, &phi, q, &opts, warm).unwrap();
            assert_relative_eq!(t, 1.0 - q, epsilon = 1e-9);
            warm = Some(t);
        }
    }

    #[test]
    fn squaring_curve_is_degenerate() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let grid: Vec<f64> = (0..7).map(|i| -0.5 + i as f64 / 3.0).collect();
        let curve = temperature_curve(&map, &phi, &grid, &opts).unwrap();
        for (s_a, s_f) in curve.t1_analytic.iter().zip(&curve.t1_fd) {
            assert_relative_eq!(*s_a, -1.0, epsilon = 1e-8);
            assert_relative_eq!(*s_f, -1.0, epsilon = 1e-8);
        }
        for t2 in &curve.t2 {
            assert!(t2.abs() < 1e-7, "T'' = {t2}");
        }
        let spec = spectrum_from_curve(&curve).unwrap();
        assert!(spec.degenerate);
        assert_eq!(spec.alpha.len(), 1);
        assert_relative_eq!(spec.alpha[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(spec.f[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn squaring_with_wavy_h_gives_an_essential_spectrum() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::tame(
            &map,
            1.0,
            Some(0.0),
            HolderObservable::re_z_clamped(2.0).unwrap(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..9).map(|i| -0.5 + i as f64 * 0.25).collect();
        let curve = temperature_curve(&map, &phi, &grid, &opts).unwrap();
        for pair in curve.t.windows(2) {
            assert!(pair[1] < pair[0], "T must strictly decrease");
        }
        for t2 in &curve.t2 {
            assert!(*t2 >= -1e-6, "T'' = {t2}");
        }
        let spec = spectrum_from_curve(&curve).unwrap();
        assert!(!spec.degenerate);
        assert!(spec.alpha_range.1 - spec.alpha_range.0 > 1e-3);
        let check = legendre_check(&curve);
        assert!(check.aligned);
        // The defect is bounded by the analytic-vs-grid slope mismatch
        // times the grid spacing, not by solver precision.
        assert!(check.max_value_defect < 5e-3, "{}", check.max_value_defect);
    }

    #[test]
    fn curvature_matches_the_variance_of_the_tilted_weight() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::tame(
            &map,
            1.0,
            Some(0.0),
            HolderObservable::re_z_clamped(2.0).unwrap(),
        )
        .unwrap();
        let (phi0, _, _) = normalize_potential(&map, &phi, &opts).unwrap();
        let grid: Vec<f64> = (0..9).map(|i| -0.5 + i as f64 * 0.25).collect();
        let curve = temperature_curve(&map, &phi, &grid, &opts).unwrap();
        let idx = 4;
        let (curvature, variance) =
            convexity_variance_pair(&map, &phi0, &curve, idx, 8, &opts).unwrap();
        assert!(curvature > 0.0 && variance > 0.0);
        assert!(
            ((curvature - variance) / variance).abs() < 0.15,
            "chi*T'' = {curvature}, sigma^2 = {variance}"
        );
    }

    #[test]
    fn measure_dimension_of_the_circle_is_one() {
        let map = AnalyticMap::power_map(2).unwrap();
        let opts = square_opts();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let hd = dimension_of_measure(&map, &phi, &opts).unwrap();
        assert_relative_eq!(hd, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_point_sweep_matches_the_direct_call() {
        let cfg = SweepConfig::standard(false, 5);
        let table = parameter_sweep("quadratic", &[0.1], &SweepTask::Bowen, &cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].skipped.is_none());
        let map = AnalyticMap::quadratic_map(0.1).unwrap();
        let opts = SolverOptions {
            window: cfg.window,
            depth: cfg.depth,
            bases: default_bases(&map, 3, 5).unwrap(),
            root_tol: cfg.root_tol,
            bracket: None,
            tau_position: cfg.tau_position,
        };
        let direct = bowen_dimension(&map, &opts).unwrap();
        assert_relative_eq!(table.rows[0].values[0], direct.value, epsilon = 1e-12);
        assert_eq!(table.smoothness_residual, 0.0);
    }

    #[test]
    fn out_of_range_parameters_are_skipped_and_flagged() {
        let cfg = SweepConfig::standard(false, 5);
        let table =
            parameter_sweep("quadratic", &[0.1, 0.9], &SweepTask::Bowen, &cfg).unwrap();
        assert!(table.rows[0].skipped.is_none());
        assert!(table.rows[1].skipped.is_some());
    }

    #[test]
    fn exp_bowen_root_lies_between_one_and_two() {
        // Narrow branch windows push the truncated root below the default
        // bracket; 32 branches per level is the smallest window whose root
        // clears the bracket's lower edge for this map.
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let opts = SolverOptions {
            window: BranchWindow::new(32, 1e7),
            depth: 4,
            bases: default_bases(&map, 3, 11).unwrap(),
            root_tol: 1e-9,
            bracket: None,
            tau_position: 0.9,
        };
        let root = bowen_dimension(&map, &opts).unwrap();
        assert!(
            root.value > 1.0 && root.value < 2.0,
            "h = {}",
            root.value
        );
        assert!(root.residual <= 1e-9);
    }

    #[test]
    fn infeasible_temperature_region_is_reported() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let err = temperature_weight(&map, &phi, -2.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleExponent { .. }));
    }
}
