//! Tame potentials `-t·log|f'|_τ + h` and the Hölder observables entering
//! them.
//!
//! The τ-metric derivative `|f'(z)|_τ = |f'(z)|·|z|^τ / |f(z)|^τ`
//! renormalizes expansion so that geometric potentials stay summable over
//! the infinitely many inverse branches of a transcendental map. A
//! potential is tame when `t(α₁+τ)` exceeds the order of the map; only
//! tame potentials may weight transfer operators, while loosely tame ones
//! (any `t`, including 0 and negative) serve as integrands.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::AnalyticMap;

/// Margin by which the tameness inequality must clear its threshold for a
/// selected τ to be accepted.
pub const TAMENESS_MARGIN: f64 = 0.01;

/// Shape of a bounded Hölder observable.
#[derive(Debug, Clone)]
pub enum HolderForm {
    Zero,
    Const(f64),
    /// `Re z` clamped to `[-bound, bound]`.
    ReZClamped { bound: f64 },
    /// Nearest-neighbor interpolation of user-supplied point values; the
    /// declared sup/variation bounds are trusted, not derived.
    Table { points: Vec<(Complex64, f64)> },
    /// Linear combination of other observables; the workhorse of potential
    /// algebra (normalization shifts, finite-difference directions, q·h).
    Combo(Vec<(f64, HolderObservable)>),
}

/// A bounded observable with declared Hölder data.
#[derive(Debug, Clone)]
pub struct HolderObservable {
    form: HolderForm,
    sup_bound: f64,
    variation_bound: f64,
}

impl HolderObservable {
    pub fn zero() -> Self {
        HolderObservable {
            form: HolderForm::Zero,
            sup_bound: 0.0,
            variation_bound: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        HolderObservable {
            form: HolderForm::Const(c),
            sup_bound: c.abs(),
            variation_bound: 0.0,
        }
    }

    pub fn re_z_clamped(bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "clamp bound {bound} must be positive and finite"
            )));
        }
        Ok(HolderObservable {
            form: HolderForm::ReZClamped { bound },
            sup_bound: bound,
            variation_bound: 2.0 * bound,
        })
    }

    /// Tabulated observable; `sup_bound` and `variation_bound` are the
    /// caller's declarations about the underlying function.
    pub fn table(
        points: Vec<(Complex64, f64)>,
        sup_bound: f64,
        variation_bound: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "table observable needs at least one point".into(),
            ));
        }
        if points.iter().any(|(z, v)| !z.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "table observable has non-finite entries".into(),
            ));
        }
        Ok(HolderObservable {
            form: HolderForm::Table { points },
            sup_bound,
            variation_bound,
        })
    }

    pub fn combo(parts: Vec<(f64, HolderObservable)>) -> Self {
        let sup = parts.iter().map(|(c, h)| c.abs() * h.sup_bound).sum();
        let var = parts.iter().map(|(c, h)| c.abs() * h.variation_bound).sum();
        HolderObservable {
            form: HolderForm::Combo(parts),
            sup_bound: sup,
            variation_bound: var,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::combo(vec![(factor, self)])
    }

    pub fn value(&self, z: Complex64) -> f64 {
        match &self.form {
            HolderForm::Zero => 0.0,
            HolderForm::Const(c) => *c,
            HolderForm::ReZClamped { bound } => z.re.clamp(-bound, *bound),
            HolderForm::Table { points } => {
                let mut best = (f64::MAX, 0.0);
                for (p, v) in points {
                    let d = (z - p).norm_sqr();
                    if d < best.0 {
                        best = (d, *v);
                    }
                }
                best.1
            }
            HolderForm::Combo(parts) => {
                parts.iter().map(|(c, h)| c * h.value(z)).sum()
            }
        }
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn variation_bound(&self) -> f64 {
        self.variation_bound
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            HolderForm::Zero => true,
            HolderForm::Const(c) => *c == 0.0,
            HolderForm::Combo(parts) => {
                parts.iter().all(|(c, h)| *c == 0.0 || h.is_zero())
            }
            _ => false,
        }
    }

    pub fn form(&self) -> &HolderForm {
        &self.form
    }
}

/// Whether a potential may weight the transfer operator or only appear
/// under an integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Tame,
    LooselyTame,
}

/// The potential `φ(z) = -t·log|f'(z)|_τ + h(z)`.
#[derive(Debug, Clone)]
pub struct TamePotential {
    t: f64,
    tau: f64,
    h: HolderObservable,
    beta: f64,
    kind: PotentialKind,
}

impl TamePotential {
    /// Geometric potential `-t·log|f'|_τ` with tameness verified against
    /// the map. `tau = None` selects the default position 3/4 of the
    /// feasible interval.
    pub fn geometric(map: &AnalyticMap, t: f64, tau: Option<f64>) -> Result<Self> {
        Self::tame(map, t, tau, HolderObservable::zero())
    }

    /// Tame potential with a Hölder part, verified against the map.
    pub fn tame(
        map: &AnalyticMap,
        t: f64,
        tau: Option<f64>,
        h: HolderObservable,
    ) -> Result<Self> {
        let tau = match tau {
            Some(tau) => {
                validate_tau(map, t, tau)?;
                tau
            }
            None => select_tau(map, t, 0.75)?,
        };
        Ok(TamePotential {
            t,
            tau,
            h,
            beta: 1.0,
            kind: PotentialKind::Tame,
        })
    }

    /// An integrand-only potential: no tameness constraints beyond
    /// finiteness. `t` may be zero (pure Hölder) or negative.
    pub fn loosely_tame(t: f64, tau: f64, h: HolderObservable) -> Self {
        TamePotential {
            t,
            tau,
            h,
            beta: 1.0,
            kind: PotentialKind::LooselyTame,
        }
    }

    /// The integrand `log|f'|_τ` (so `t = -1`, no Hölder part). With
    /// `tau = 0` this is the plain `log|f'|` of Lyapunov exponents.
    pub fn log_deriv_integrand(tau: f64) -> Self {
        Self::loosely_tame(-1.0, tau, HolderObservable::zero())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h(&self) -> &HolderObservable {
        &self.h
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn is_tame(&self) -> bool {
        self.kind == PotentialKind::Tame
    }

    /// Combined exponent `τ̂ = α₁ + τ` of the weight decay `|z|^{-τ̂ t}`.
    pub fn tau_hat(&self, map: &AnalyticMap) -> f64 {
        map.growth().alpha1 + self.tau
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent β = {beta} must lie in (0, 1]"
            )));
        }
        self.beta = beta;
        Ok(self)
    }

    /// Replace the Hölder part, keeping `t`, τ, and the kind (a bounded
    /// change never affects tameness).
    pub fn with_h(&self, h: HolderObservable) -> Self {
        TamePotential {
            t: self.t,
            tau: self.tau,
            h,
            beta: self.beta,
            kind: self.kind,
        }
    }

    /// `φ + c`: the Hölder part absorbs the constant.
    pub fn add_const(&self, c: f64) -> Self {
        let h = HolderObservable::combo(vec![
            (1.0, self.h.clone()),
            (1.0, HolderObservable::constant(c)),
        ]);
        self.with_h(h)
    }

    /// Linear combination `Σ cᵢ φᵢ`. All parts with a geometric component
    /// (`t ≠ 0`) must share the same τ; the result is loosely tame until
    /// revalidated with [`into_tame`].
    ///
    /// [`into_tame`]: TamePotential::into_tame
    pub fn linear_combination(parts: &[(f64, &TamePotential)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument(
                "empty linear combination of potentials".into(),
            ));
        }
        let mut tau: Option<f64> = None;
        let mut t = 0.0;
        let mut beta = 1.0f64;
        let mut h_parts = Vec::with_capacity(parts.len());
        for (c, phi) in parts {
            if phi.t != 0.0 && *c != 0.0 {
                match tau {
                    None => tau = Some(phi.tau),
                    Some(existing) if existing == phi.tau => {}
                    Some(existing) => {
                        return Err(Error::InvalidArgument(format!(
                            "cannot combine geometric potentials with different τ \
                             ({existing} vs {})",
                            phi.tau
                        )));
                    }
                }
            }
            t += c * phi.t;
            beta = beta.min(phi.beta);
            h_parts.push((*c, phi.h.clone()));
        }
        Ok(TamePotential {
            t,
            tau: tau.unwrap_or(parts[0].1.tau),
            h: HolderObservable::combo(h_parts),
            beta,
            kind: PotentialKind::LooselyTame,
        })
    }

    /// Revalidate a (possibly combined) potential as tame against a map.
    pub fn into_tame(mut self, map: &AnalyticMap) -> Result<Self> {
        validate_tau(map, self.t, self.tau)?;
        self.kind = PotentialKind::Tame;
        Ok(self)
    }

    /// `φ(z)`, with full singularity checks.
    pub fn value(&self, map: &AnalyticMap, z: Complex64) -> Result<f64> {
        potential_value(map, self, z)
    }

    /// `φ(z)` for a tree node whose image `w = f(z)` and both log-moduli
    /// are already known; the hot path of every tree walk.
    #[inline]
    pub(crate) fn value_from_pair(
        &self,
        map: &AnalyticMap,
        z: Complex64,
        w: Complex64,
        log_abs_z: f64,
        log_abs_w: f64,
    ) -> f64 {
        let h = self.h.value(z);
        if self.t == 0.0 {
            return h;
        }
        let mut log_td = map.log_abs_deriv_from(z, w);
        if self.tau != 0.0 {
            log_td += self.tau * (log_abs_z - log_abs_w);
        }
        -self.t * log_td + h
    }
}

/// `|f'(z)|_τ = |f'(z)|·|z|^τ / |f(z)|^τ`, the derivative in the τ-metric.
pub fn tau_derivative(map: &AnalyticMap, z: Complex64, tau: f64) -> Result<f64> {
    log_tau_derivative(map, z, tau).map(f64::exp)
}

/// `log |f'(z)|_τ`; errors at `z = 0`, zeros of `f`, poles, and critical
/// points, where the τ-metric degenerates.
pub fn log_tau_derivative(map: &AnalyticMap, z: Complex64, tau: f64) -> Result<f64> {
    if z.norm() == 0.0 && tau != 0.0 {
        return Err(Error::MetricSingularity {
            z,
            reason: "the τ-metric is undefined at the origin".into(),
        });
    }
    let w = map.eval(z);
    if map.near_pole(w) {
        return Err(Error::MetricSingularity {
            z,
            reason: "z is a pole (or within float noise of one)".into(),
        });
    }
    if tau != 0.0 && map.near_zero_of_f(w) {
        return Err(Error::MetricSingularity {
            z,
            reason: "f(z) = 0, where the target τ-metric degenerates".into(),
        });
    }
    let d_c = map.deriv(z);
    if map.near_critical(z, d_c) {
        return Err(Error::MetricSingularity {
            z,
            reason: "z is a critical point (or within float noise of one)".into(),
        });
    }
    let d = d_c.norm();
    if !d.is_finite() {
        return Err(Error::MetricSingularity {
            z,
            reason: "derivative blows up at z".into(),
        });
    }
    let mut log_td = d.ln();
    if tau != 0.0 {
        log_td += tau * (z.norm().ln() - w.norm().ln());
    }
    Ok(log_td)
}

/// `φ(z) = -t·log|f'(z)|_τ + h(z)`.
pub fn potential_value(map: &AnalyticMap, phi: &TamePotential, z: Complex64) -> Result<f64> {
    if phi.t() == 0.0 {
        return Ok(phi.h().value(z));
    }
    Ok(-phi.t() * log_tau_derivative(map, z, phi.tau())? + phi.h().value(z))
}

/// Birkhoff sum `S_n φ(z) = Σ_{j<n} φ(f^j z)`; the error names the orbit
/// step at which a singularity was hit.
pub fn birkhoff_sum(
    map: &AnalyticMap,
    phi: &TamePotential,
    z: Complex64,
    n: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut current = z;
    for step in 0..n {
        sum += potential_value(map, phi, current).map_err(|e| Error::OrbitFailure {
            step,
            z: current,
            reason: e.to_string(),
        })?;
        if step + 1 < n {
            current = map.eval(current);
            if !current.is_finite() {
                return Err(Error::OrbitFailure {
                    step: step + 1,
                    z: current,
                    reason: "orbit escaped through a pole".into(),
                });
            }
        }
    }
    Ok(sum)
}

/// The open interval of τ for which `-t log|f'|_τ` is tame:
/// `(max(0, ρ/t - α₁), α₂ lower)`. Empty exactly when `t ≤ ρ/α`, which is
/// the "potential not tame for this map" error.
pub fn feasible_tau_interval(map: &AnalyticMap, t: f64) -> Result<(f64, f64)> {
    let g = map.growth();
    let threshold = g.order / g.alpha_sum();
    if !(t > threshold) {
        return Err(Error::NotTame { t, threshold });
    }
    let lo = (g.order / t - g.alpha1).max(0.0);
    let hi = g.alpha2_lower;
    Ok((lo, hi))
}

/// Pick τ at the given fraction of the feasible interval (the convention
/// is 3/4 for generic work, 0.9 for dimension solvers). Refuses a τ whose
/// tameness margin `t(α₁+τ) - ρ` falls below [`TAMENESS_MARGIN`].
pub fn select_tau(map: &AnalyticMap, t: f64, position: f64) -> Result<f64> {
    if !(position > 0.0 && position < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "τ position {position} must lie strictly inside (0, 1)"
        )));
    }
    let (lo, hi) = feasible_tau_interval(map, t)?;
    let tau = lo + position * (hi - lo);
    let g = map.growth();
    let margin = t * (g.alpha1 + tau) - g.order;
    if margin < TAMENESS_MARGIN && map.finite_degree().is_none() {
        return Err(Error::NotTame {
            t,
            threshold: g.order / g.alpha_sum(),
        });
    }
    Ok(tau)
}

fn validate_tau(map: &AnalyticMap, t: f64, tau: f64) -> Result<()> {
    let g = map.growth();
    if tau == 0.0 {
        // τ = 0 is reserved for the finite-degree oracle maps, whose
        // branch sets are finite and need no decay from the metric.
        return if map.finite_degree().is_some() {
            Ok(())
        } else {
            Err(Error::TauOutOfRange {
                tau,
                lo: 0.0,
                hi: g.alpha2_lower,
            })
        };
    }
    if !(tau > 0.0 && tau < g.alpha2_lower) {
        return Err(Error::TauOutOfRange {
            tau,
            lo: 0.0,
            hi: g.alpha2_lower,
        });
    }
    // Finite-degree maps (order 0) satisfy the tameness inequality for
    // every positive t; the threshold check below is the transcendental
    // constraint.
    if map.finite_degree().is_some() {
        if !(t > 0.0) {
            return Err(Error::NotTame { t, threshold: 0.0 });
        }
        return Ok(());
    }
    if !(t * (g.alpha1 + tau) > g.order) {
        return Err(Error::NotTame {
            t,
            threshold: g.order / (g.alpha1 + tau),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_map_unchecked, AnalyticMap};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tau_derivative_of_unit_exp_at_one() {
        let map = build_map_unchecked(
            "exp",
            &BTreeMap::from([("lambda".to_string(), 1.0)]),
        )
        .unwrap();
        let got = tau_derivative(&map, c(1.0, 0.0), 0.5).unwrap();
        assert_relative_eq!(got, (0.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn metric_singularities_are_reported() {
        let map = AnalyticMap::tangent_map(0.5).unwrap();
        assert!(matches!(
            tau_derivative(&map, c(0.0, 0.0), 0.5),
            Err(Error::MetricSingularity { .. })
        ));
        assert!(matches!(
            tau_derivative(&map, c(PI / 2.0, 0.0), 0.5),
            Err(Error::MetricSingularity { .. })
        ));
        let quad = AnalyticMap::quadratic_map(0.1).unwrap();
        assert!(matches!(
            tau_derivative(&quad, c(0.0, 0.0), 0.2),
            Err(Error::MetricSingularity { .. })
        ));
        let sine = AnalyticMap::sine_map(0.8, 0.0).unwrap();
        // sin(0.8 · π/0.8) = 0: the target metric degenerates.
        assert!(matches!(
            tau_derivative(&sine, c(PI / 0.8, 0.0), 0.5),
            Err(Error::MetricSingularity { .. })
        ));
    }

    #[test]
    fn tau_selection_matches_the_feasible_interval() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let (lo, hi) = feasible_tau_interval(&map, 1.25).unwrap();
        assert_relative_eq!(lo, 0.8, max_relative = 1e-12);
        assert_relative_eq!(hi, 1.0, max_relative = 1e-12);
        let tau = select_tau(&map, 1.25, 0.75).unwrap();
        assert_relative_eq!(tau, 0.95, max_relative = 1e-12);

        assert!(matches!(
            select_tau(&map, 0.9, 0.75),
            Err(Error::NotTame { .. })
        ));

        // Tangent: α₁ = 0, α₂ = 2, ρ = 1, so t = 1 gives (1, 2).
        let tan = AnalyticMap::tangent_map(0.5).unwrap();
        let (lo, hi) = feasible_tau_interval(&tan, 1.0).unwrap();
        assert_relative_eq!(lo, 1.0, max_relative = 1e-12);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            select_tau(&tan, 1.0, 0.75).unwrap(),
            1.75,
            max_relative = 1e-12
        );
    }

    #[test]
    fn selected_tau_keeps_a_tameness_margin() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        for t in [1.05, 1.25, 1.8, 2.5] {
            let tau = select_tau(&map, t, 0.75).unwrap();
            let g = map.growth();
            assert!(t * (g.alpha1 + tau) - g.order >= TAMENESS_MARGIN);
        }
        // Barely feasible t: the margin rule refuses.
        assert!(select_tau(&map, 1.004, 0.75).is_err());
    }

    #[test]
    fn birkhoff_sum_on_the_circle_is_minus_n_log_two() {
        let map = AnalyticMap::power_map(2).unwrap();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let got = birkhoff_sum(&map, &phi, c(1.0, 0.0), 5).unwrap();
        assert_relative_eq!(got, -5.0 * (2.0f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn birkhoff_sum_at_a_fixed_point_is_n_times_the_value() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let p = map.julia_seed();
        let one = potential_value(&map, &phi, p).unwrap();
        let three = birkhoff_sum(&map, &phi, p, 3).unwrap();
        assert_relative_eq!(three, 3.0 * one, max_relative = 1e-12);
    }

    #[test]
    fn birkhoff_sum_reports_the_failing_step() {
        let map = AnalyticMap::tangent_map(0.5).unwrap();
        let phi = TamePotential::geometric(&map, 1.0, Some(1.5)).unwrap();
        let err = birkhoff_sum(&map, &phi, c(PI / 2.0, 0.0), 3).unwrap_err();
        match err {
            Error::OrbitFailure { step, .. } => assert_eq!(step, 0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn telescoping_identity_along_orbits() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let tau = 0.95;
        let samples = crate::maps::sample_julia_points(
            &map,
            20,
            10,
            &crate::maps::BranchWindow::new(6, 1e3),
            42,
        )
        .unwrap();
        for z0 in samples {
            let n = 6;
            let mut sum = 0.0;
            let mut z = z0;
            for _ in 0..n {
                sum += log_tau_derivative(&map, z, tau).unwrap();
                z = map.eval(z);
            }
            // Σ log|f'|_τ(f^k z) = Σ log|f'(f^k z)| + τ(log|z| - log|fⁿ z|).
            let mut plain = 0.0;
            let mut y = z0;
            for _ in 0..n {
                plain += map.deriv(y).norm().ln();
                y = map.eval(y);
            }
            let expected = plain + tau * (z0.norm().ln() - y.norm().ln());
            assert!((sum - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn potential_algebra_combines_and_shifts() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let shifted = phi.add_const(0.3);
        let z = map.julia_seed();
        let a = potential_value(&map, &phi, z).unwrap();
        let b = potential_value(&map, &shifted, z).unwrap();
        assert_relative_eq!(b - a, 0.3, max_relative = 1e-12);

        let psi = TamePotential::geometric(&map, 1.1, Some(0.95)).unwrap();
        let combo = TamePotential::linear_combination(&[(1.0, &phi), (2.0, &psi)]).unwrap();
        assert_relative_eq!(combo.t(), 3.45, max_relative = 1e-12);
        let cv = potential_value(&map, &combo, z).unwrap();
        let pv = potential_value(&map, &psi, z).unwrap();
        assert_relative_eq!(cv, a + 2.0 * pv, max_relative = 1e-12);

        let other_tau = TamePotential::geometric(&map, 1.25, Some(0.9)).unwrap();
        assert!(TamePotential::linear_combination(&[(1.0, &phi), (1.0, &other_tau)]).is_err());
    }

    #[test]
    fn loosely_tame_integrands_skip_metric_checks_when_pure_holder() {
        let map = AnalyticMap::quadratic_map(0.1).unwrap();
        let h = HolderObservable::re_z_clamped(2.0).unwrap();
        let psi = TamePotential::loosely_tame(0.0, 0.0, h);
        // Works even at the critical point: no metric involved.
        let v = potential_value(&map, &psi, c(0.0, 0.0)).unwrap();
        assert_eq!(v, 0.0);
        let v2 = potential_value(&map, &psi, c(3.0, 0.0)).unwrap();
        assert_eq!(v2, 2.0);
    }

    #[test]
    fn tau_zero_is_reserved_for_oracle_maps() {
        let quad = AnalyticMap::quadratic_map(0.1).unwrap();
        assert!(TamePotential::geometric(&quad, 1.0, Some(0.0)).is_ok());
        let exp = AnalyticMap::exp_map(0.3).unwrap();
        assert!(matches!(
            TamePotential::geometric(&exp, 1.25, Some(0.0)),
            Err(Error::TauOutOfRange { .. })
        ));
    }

    #[test]
    fn table_observable_uses_nearest_neighbor() {
        let table = HolderObservable::table(
            vec![(c(0.0, 0.0), 1.0), (c(2.0, 0.0), 5.0)],
            5.0,
            4.0,
        )
        .unwrap();
        assert_eq!(table.value(c(0.4, 0.1)), 1.0);
        assert_eq!(table.value(c(1.8, -0.2)), 5.0);
        assert_eq!(table.sup_bound(), 5.0);
    }
}
