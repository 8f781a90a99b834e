//! Map catalog: concrete analytic families with exact inverse branches,
//! growth envelopes, and hyperbolicity diagnostics.
//!
//! Every map here is one of a small set of closed-form families. The
//! transcendental entries (exponential, tangent, sine) have infinitely many
//! inverse branches arranged in arithmetic progressions, which this module
//! enumerates deterministically in order of increasing modulus. The
//! finite-degree entries (power, quadratic) serve as exactly solvable
//! oracles: their pressure, dimension, and measures have closed forms
//! against which the transcendental machinery is cross-checked.
//!
//! Two constructions exist: [`build_catalog_map`] refuses parameters outside
//! the ranges this crate has verified as hyperbolic, while
//! [`build_map_unchecked`] admits any domain-valid parameters for uses that
//! need only the map itself (branch enumeration, growth sampling, Borel
//! sums) and not the Gibbs theory built on top of it.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::Serialize;

use crate::error::{Error, Result};

/// Preimages must map back onto their target this tightly, relative to
/// `1 + |w|`.
pub const ROUND_TRIP_TOL: f64 = 1e-10;

/// Residual bound for fixed points accepted as Julia seeds.
const SEED_RESIDUAL_TOL: f64 = 1e-9;

/// Backward samples whose modulus falls below this trip the "Julia set
/// approaches the origin" construction error; the τ-metric needs the Julia
/// set bounded away from 0.
const ORIGIN_CLEARANCE: f64 = 1e-3;

/// Orbit points beyond this modulus are treated as escaped to infinity.
const ESCAPE_RADIUS: f64 = 1e50;

const INF: Complex64 = Complex64::new(f64::INFINITY, 0.0);

/// Power-law envelope `κ^{∓1} |z|^{α₁} |f(z)|^{α₂}` sandwiching `|f'|`,
/// together with the order of growth and catalog flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthProfile {
    /// Distortion constant `κ ≥ 1` of the sandwich.
    pub kappa: f64,
    /// Exponent of `|z|` in the envelope.
    pub alpha1: f64,
    /// Lower exponent of `|f(z)|`.
    pub alpha2_lower: f64,
    /// Upper exponent of `|f(z)|`.
    pub alpha2_upper: f64,
    /// Order of growth ρ; finite-degree oracle maps store 0.
    pub order: f64,
    /// Whether the preimage series Σ |z|^{-ρ} diverges at the critical
    /// exponent. False for finite-degree maps, whose sums are finite for
    /// every exponent.
    pub divergence_type: bool,
    /// Entire maps have no poles; meromorphic entries set this false.
    pub entire: bool,
}

impl GrowthProfile {
    fn validate(&self) -> Result<()> {
        if !(self.kappa >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "growth constant κ = {} must be ≥ 1",
                self.kappa
            )));
        }
        if self.alpha2_lower > self.alpha2_upper {
            return Err(Error::InvalidArgument(format!(
                "growth exponents out of order: α₂ lower {} > upper {}",
                self.alpha2_lower, self.alpha2_upper
            )));
        }
        if self.alpha1 <= -self.alpha2_lower {
            return Err(Error::InvalidArgument(format!(
                "need α₁ > −α₂ lower, got α₁ = {}, α₂ lower = {}",
                self.alpha1, self.alpha2_lower
            )));
        }
        if self.entire && self.alpha2_lower != self.alpha2_upper {
            return Err(Error::InvalidArgument(
                "entire maps must have a single α₂ exponent".into(),
            ));
        }
        Ok(())
    }

    /// Sum α₁ + α₂ lower, the combined exponent governing tameness.
    pub fn alpha_sum(&self) -> f64 {
        self.alpha1 + self.alpha2_lower
    }
}

/// Truncation window for inverse-branch enumeration and tree expansion.
///
/// `max_count` and `max_modulus` gate single-step enumeration symmetrically
/// around the nearest branches; `min_weight` prunes tree nodes whose
/// cumulative weight has fallen below it and is ignored by bare branch
/// calls (no potential in scope there). Selection never looks at weights,
/// so the retained branch set is identical for every potential on the same
/// window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchWindow {
    /// Maximum number of branches retained per node; at least 1.
    pub max_count: usize,
    /// Branches beyond this modulus are discarded. Must exceed the modulus
    /// of the base region the tree grows from.
    pub max_modulus: f64,
    /// Cumulative-weight floor for tree pruning; 0 disables it.
    pub min_weight: f64,
}

impl BranchWindow {
    pub fn new(max_count: usize, max_modulus: f64) -> Self {
        BranchWindow {
            max_count,
            max_modulus,
            min_weight: 0.0,
        }
    }

    pub fn with_min_weight(mut self, min_weight: f64) -> Self {
        self.min_weight = min_weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_count == 0 {
            return Err(Error::InvalidArgument(
                "branch window max_count must be ≥ 1".into(),
            ));
        }
        if !(self.max_modulus > 0.0) || !self.max_modulus.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "branch window max_modulus = {} must be positive and finite",
                self.max_modulus
            )));
        }
        if !(self.min_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "branch window min_weight = {} must be ≥ 0",
                self.min_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum MapFamily {
    Exp { lambda: f64 },
    Tangent { lambda: f64 },
    Sine { a: f64, b: f64 },
    Power { d: u32 },
    Quadratic { c: f64 },
}

/// A concrete analytic map with evaluators, exact inverse branches, and
/// catalog metadata. Construct through [`build_catalog_map`],
/// [`build_map_unchecked`], or the named convenience constructors.
#[derive(Debug, Clone)]
pub struct AnalyticMap {
    family: MapFamily,
    growth: GrowthProfile,
    julia_seed: Complex64,
    singular_values: Vec<Complex64>,
}

impl AnalyticMap {
    /// `z ↦ λ e^z`, verified hyperbolic for `0 < λ < 1/e`.
    pub fn exp_map(lambda: f64) -> Result<Self> {
        build_family(MapFamily::Exp { lambda }, true)
    }

    /// `z ↦ λ tan z`, verified hyperbolic for `0 < λ < 1`.
    pub fn tangent_map(lambda: f64) -> Result<Self> {
        build_family(MapFamily::Tangent { lambda }, true)
    }

    /// `z ↦ sin(az + b)`, verified hyperbolic for `0 < a ≤ 0.95`,
    /// `|b| ≤ 0.5`.
    pub fn sine_map(a: f64, b: f64) -> Result<Self> {
        build_family(MapFamily::Sine { a, b }, true)
    }

    /// `z ↦ z^d` for integer `d ≥ 2`; exactly solvable oracle.
    pub fn power_map(d: u32) -> Result<Self> {
        build_family(MapFamily::Power { d }, true)
    }

    /// `z ↦ z² + c`, verified hyperbolic for `0 ≤ c ≤ 0.24`; oracle map.
    pub fn quadratic_map(c: f64) -> Result<Self> {
        build_family(MapFamily::Quadratic { c }, true)
    }

    /// Evaluate the map. Poles and overflow normalize to the point at
    /// infinity `(+∞, 0)`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let w = match self.family {
            MapFamily::Exp { lambda } => lambda * z.exp(),
            MapFamily::Tangent { lambda } => lambda * z.tan(),
            MapFamily::Sine { a, b } => (a * z + b).sin(),
            MapFamily::Power { d } => z.powu(d),
            MapFamily::Quadratic { c } => z * z + c,
        };
        if w.is_finite() {
            w
        } else {
            INF
        }
    }

    /// Derivative `f'(z)`; non-finite values normalize like [`eval`].
    ///
    /// [`eval`]: AnalyticMap::eval
    pub fn deriv(&self, z: Complex64) -> Complex64 {
        let d = match self.family {
            MapFamily::Exp { lambda } => lambda * z.exp(),
            MapFamily::Tangent { lambda } => {
                let t = z.tan();
                lambda * (Complex64::new(1.0, 0.0) + t * t)
            }
            MapFamily::Sine { a, b } => a * (a * z + b).cos(),
            MapFamily::Power { d } => f64::from(d) * z.powu(d - 1),
            MapFamily::Quadratic { .. } => 2.0 * z,
        };
        if d.is_finite() {
            d
        } else {
            INF
        }
    }

    /// `log |f'(z)|` computed from a preimage pair `f(z) = w`, avoiding a
    /// forward evaluation in tree walks. All catalog families satisfy an
    /// algebraic relation between `f'` and `(z, f(z))`:
    /// exponential `|f'| = |w|`, tangent `|f'| = |λ + w²/λ|`,
    /// sine `|f'| = a·|1 − w²|^{1/2}`, power `|f'| = d|z|^{d−1}`,
    /// quadratic `|f'| = 2|z|`.
    pub fn log_abs_deriv_from(&self, z: Complex64, w: Complex64) -> f64 {
        match self.family {
            MapFamily::Exp { .. } => w.norm().ln(),
            MapFamily::Tangent { lambda } => (lambda + w * w / lambda).norm().ln(),
            MapFamily::Sine { a, .. } => {
                a.ln() + 0.5 * (Complex64::new(1.0, 0.0) - w * w).norm().ln()
            }
            MapFamily::Power { d } => f64::from(d).ln() + f64::from(d - 1) * z.norm().ln(),
            MapFamily::Quadratic { .. } => std::f64::consts::LN_2 + z.norm().ln(),
        }
    }

    /// Whether `z` sits within roughly 1e-13 of a pole, judged from the
    /// computed value `w = f(z)` (exact float hits on poles do not occur).
    pub(crate) fn near_pole(&self, w: Complex64) -> bool {
        if !w.is_finite() {
            return true;
        }
        match self.family {
            MapFamily::Tangent { lambda } => w.norm() > lambda * 1e13,
            _ => false,
        }
    }

    /// Whether `z` sits within roughly 1e-13 of a zero of `f`, where the
    /// τ-metric of the image degenerates.
    pub(crate) fn near_zero_of_f(&self, w: Complex64) -> bool {
        let scale = match self.family {
            MapFamily::Exp { .. } => 0.0,
            MapFamily::Tangent { lambda } => lambda,
            MapFamily::Sine { a, .. } => a,
            MapFamily::Power { .. } => 0.0,
            MapFamily::Quadratic { c } => 2.0 * c.abs().sqrt(),
        };
        w.norm() == 0.0 || w.norm() < scale * 1e-13
    }

    /// Whether `z` sits within roughly 1e-13 of a critical point, judged
    /// from the computed derivative.
    pub(crate) fn near_critical(&self, z: Complex64, d: Complex64) -> bool {
        if d.norm() == 0.0 {
            return true;
        }
        match self.family {
            MapFamily::Exp { .. } | MapFamily::Tangent { .. } => false,
            MapFamily::Sine { a, .. } => d.norm() < a * 1e-13,
            MapFamily::Power { .. } | MapFamily::Quadratic { .. } => z.norm() < 1e-13,
        }
    }

    /// Growth envelope and catalog metadata for this map.
    pub fn growth(&self) -> &GrowthProfile {
        &self.growth
    }

    /// A verified repelling periodic (fixed) point on the Julia set, used
    /// as the root for backward-orbit sampling.
    pub fn julia_seed(&self) -> Complex64 {
        self.julia_seed
    }

    /// Finite singular values: critical values and finite asymptotic
    /// values, the obstruction set for inverse branches.
    pub fn singular_values(&self) -> &[Complex64] {
        &self.singular_values
    }

    pub fn family_id(&self) -> &'static str {
        match self.family {
            MapFamily::Exp { .. } => "exp",
            MapFamily::Tangent { .. } => "tangent",
            MapFamily::Sine { .. } => "sine",
            MapFamily::Power { .. } => "power",
            MapFamily::Quadratic { .. } => "quadratic",
        }
    }

    /// Family parameters as name/value pairs, in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self.family {
            MapFamily::Exp { lambda } | MapFamily::Tangent { lambda } => {
                vec![("lambda", lambda)]
            }
            MapFamily::Sine { a, b } => vec![("a", a), ("b", b)],
            MapFamily::Power { d } => vec![("d", f64::from(d))],
            MapFamily::Quadratic { c } => vec![("c", c)],
        }
    }

    /// `Some(d)` for the finite-degree oracle maps, `None` for the
    /// transcendental families.
    pub fn finite_degree(&self) -> Option<usize> {
        match self.family {
            MapFamily::Power { d } => Some(d as usize),
            MapFamily::Quadratic { .. } => Some(2),
            _ => None,
        }
    }

    /// Asymptotic number of inverse branches per unit of modulus, the
    /// density entering integral tail bounds. Zero for finite-degree maps,
    /// whose branches are exhausted at bounded modulus.
    pub fn branch_density(&self) -> f64 {
        match self.family {
            MapFamily::Exp { .. } => 1.0 / PI,
            MapFamily::Tangent { .. } => 2.0 / PI,
            MapFamily::Sine { a, .. } => 2.0 * a / PI,
            MapFamily::Power { .. } | MapFamily::Quadratic { .. } => 0.0,
        }
    }

    /// All preimages of `w` inside the window, sorted by increasing
    /// modulus with ties broken by increasing argument in `[0, 2π)`.
    pub fn inverse_branches(&self, w: Complex64, window: &BranchWindow) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(window.max_count.min(64));
        self.branches_into(w, window, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`inverse_branches`]: clears and fills
    /// `out`.
    ///
    /// [`inverse_branches`]: AnalyticMap::inverse_branches
    pub fn branches_into(
        &self,
        w: Complex64,
        window: &BranchWindow,
        out: &mut Vec<Complex64>,
    ) -> Result<()> {
        window.validate()?;
        out.clear();
        if !w.is_finite() {
            return Err(Error::SingularTarget {
                w,
                reason: "target is the point at infinity".into(),
            });
        }
        let cap = window.max_count;
        let r_max = window.max_modulus;
        match self.family {
            MapFamily::Exp { lambda } => {
                if w.norm() == 0.0 {
                    return Err(Error::SingularTarget {
                        w,
                        reason: "0 is the omitted value of the exponential".into(),
                    });
                }
                let base = (w / lambda).ln();
                let mut prog = Progression::new(base, Complex64::new(0.0, TAU));
                while out.len() < cap {
                    match prog.pop_within(r_max) {
                        Some(z) => out.push(z),
                        None => break,
                    }
                }
            }
            MapFamily::Tangent { lambda } => {
                let ratio = w / lambda;
                if (ratio - Complex64::i()).norm() < 1e-12 * (1.0 + ratio.norm())
                    || (ratio + Complex64::i()).norm() < 1e-12 * (1.0 + ratio.norm())
                {
                    return Err(Error::SingularTarget {
                        w,
                        reason: "±iλ are the asymptotic values of the tangent family".into(),
                    });
                }
                let base = ratio.atan();
                let mut prog = Progression::new(base, Complex64::new(PI, 0.0));
                while out.len() < cap {
                    match prog.pop_within(r_max) {
                        Some(z) => out.push(z),
                        None => break,
                    }
                }
            }
            MapFamily::Sine { a, b } => {
                if (w - 1.0).norm() < 1e-12 * (1.0 + w.norm())
                    || (w + 1.0).norm() < 1e-12 * (1.0 + w.norm())
                {
                    return Err(Error::SingularTarget {
                        w,
                        reason: "±1 are the critical values of the sine family".into(),
                    });
                }
                let asin = w.asin();
                let shift = Complex64::new(b, 0.0);
                let step = Complex64::new(TAU / a, 0.0);
                let mut pa = Progression::new((asin - shift) / a, step);
                let mut pb =
                    Progression::new((Complex64::new(PI, 0.0) - asin - shift) / a, step);
                // Each progression is complete in modulus order, so the
                // union of cap-length prefixes contains the cap smallest.
                for prog in [&mut pa, &mut pb] {
                    let mut taken = 0;
                    while taken < cap {
                        match prog.pop_within(r_max) {
                            Some(z) => {
                                out.push(z);
                                taken += 1;
                            }
                            None => break,
                        }
                    }
                }
            }
            MapFamily::Power { d } => {
                if w.norm() < 1e-300 {
                    return Err(Error::SingularTarget {
                        w,
                        reason: "0 is the critical value of the power map".into(),
                    });
                }
                let r = w.norm().powf(1.0 / f64::from(d));
                let theta = w.arg() / f64::from(d);
                for j in 0..d {
                    let phi = theta + TAU * f64::from(j) / f64::from(d);
                    let z = Complex64::from_polar(r, phi);
                    if z.norm() <= r_max {
                        out.push(z);
                    }
                }
            }
            MapFamily::Quadratic { c } => {
                let shifted = w - c;
                if shifted.norm() < 1e-14 * (1.0 + w.norm()) {
                    return Err(Error::SingularTarget {
                        w,
                        reason: "the critical value c has a double preimage at 0".into(),
                    });
                }
                let s = shifted.sqrt();
                for z in [s, -s] {
                    if z.norm() <= r_max {
                        out.push(z);
                    }
                }
            }
        }
        out.sort_by(preimage_cmp);
        out.truncate(cap);
        Ok(())
    }

    /// Stream the moduli of the preimages of `w` in increasing order,
    /// without materializing the points. Returns `(count, last_modulus)`;
    /// `last_modulus` is 0 when nothing was enumerated. Used by Borel sums,
    /// where counts can be far larger than any tree window.
    pub(crate) fn for_each_preimage_modulus(
        &self,
        w: Complex64,
        max_count: usize,
        max_modulus: f64,
        mut f: impl FnMut(f64),
    ) -> Result<(usize, f64)> {
        let mut count = 0usize;
        let mut last = 0.0f64;
        match self.family {
            MapFamily::Power { .. } | MapFamily::Quadratic { .. } => {
                let window = BranchWindow::new(16, max_modulus);
                let mut buf = Vec::new();
                self.branches_into(w, &window, &mut buf)?;
                for z in buf.iter().take(max_count) {
                    last = z.norm();
                    f(last);
                    count += 1;
                }
            }
            MapFamily::Exp { .. } | MapFamily::Tangent { .. } => {
                // Reuse branch construction for the progression geometry.
                let probe = BranchWindow::new(1, f64::MAX);
                let mut buf = Vec::new();
                self.branches_into(w, &probe, &mut buf)?;
                let mut prog = self.progression_for(w)?;
                while count < max_count {
                    match prog.pop_within(max_modulus) {
                        Some(z) => {
                            last = z.norm();
                            f(last);
                            count += 1;
                        }
                        None => break,
                    }
                }
            }
            MapFamily::Sine { .. } => {
                self.branches_into(w, &BranchWindow::new(1, f64::MAX), &mut Vec::new())?;
                let (mut pa, mut pb) = self.sine_progressions(w);
                while count < max_count {
                    let ra = pa.peek_within(max_modulus);
                    let rb = pb.peek_within(max_modulus);
                    let z = match (ra, rb) {
                        (Some(x), Some(y)) => {
                            if x <= y {
                                pa.pop_within(max_modulus)
                            } else {
                                pb.pop_within(max_modulus)
                            }
                        }
                        (Some(_), None) => pa.pop_within(max_modulus),
                        (None, Some(_)) => pb.pop_within(max_modulus),
                        (None, None) => None,
                    };
                    match z {
                        Some(z) => {
                            last = z.norm();
                            f(last);
                            count += 1;
                        }
                        None => break,
                    }
                }
            }
        }
        Ok((count, last))
    }

    fn progression_for(&self, w: Complex64) -> Result<Progression> {
        match self.family {
            MapFamily::Exp { lambda } => Ok(Progression::new(
                (w / lambda).ln(),
                Complex64::new(0.0, TAU),
            )),
            MapFamily::Tangent { lambda } => Ok(Progression::new(
                (w / lambda).atan(),
                Complex64::new(PI, 0.0),
            )),
            _ => Err(Error::InvalidArgument(
                "progression geometry only exists for exp/tangent".into(),
            )),
        }
    }

    fn sine_progressions(&self, w: Complex64) -> (Progression, Progression) {
        match self.family {
            MapFamily::Sine { a, b } => {
                let asin = w.asin();
                let shift = Complex64::new(b, 0.0);
                let step = Complex64::new(TAU / a, 0.0);
                (
                    Progression::new((asin - shift) / a, step),
                    Progression::new((Complex64::new(PI, 0.0) - asin - shift) / a, step),
                )
            }
            _ => unreachable!("sine_progressions called on a non-sine family"),
        }
    }
}

/// One arithmetic progression of preimage candidates `z_k = base + k·step`
/// with `step` along a single axis. Pops candidates in exactly increasing
/// modulus within the progression.
struct Progression {
    base: Complex64,
    step: Complex64,
    stride: f64,
    along: f64,
    ortho: f64,
    lo: i64,
    hi: i64,
}

impl Progression {
    fn new(base: Complex64, step: Complex64) -> Self {
        let stride = step.norm();
        let u = step / stride;
        let along = base.re * u.re + base.im * u.im;
        let ortho = (base.im * u.re - base.re * u.im).abs();
        let k_star = (-along / stride).round() as i64;
        Progression {
            base,
            step,
            stride,
            along,
            ortho,
            lo: k_star,
            hi: k_star + 1,
        }
    }

    fn modulus_at(&self, k: i64) -> f64 {
        (self.along + self.stride * k as f64).hypot(self.ortho)
    }

    fn peek_within(&self, r_max: f64) -> Option<f64> {
        let r_lo = self.modulus_at(self.lo);
        let r_hi = self.modulus_at(self.hi);
        let r = r_lo.min(r_hi);
        if r <= r_max && r.is_finite() {
            Some(r)
        } else {
            None
        }
    }

    fn pop_within(&mut self, r_max: f64) -> Option<Complex64> {
        let r_lo = self.modulus_at(self.lo);
        let r_hi = self.modulus_at(self.hi);
        let (r, k) = if r_hi < r_lo {
            (r_hi, self.hi)
        } else {
            (r_lo, self.lo)
        };
        if !(r <= r_max) || !r.is_finite() {
            return None;
        }
        if k == self.hi {
            self.hi += 1;
        } else {
            self.lo -= 1;
        }
        Some(self.base + self.step * Complex64::new(k as f64, 0.0))
    }
}

/// Argument normalized to `[0, 2π)`; the tie-break coordinate of the
/// deterministic branch order.
pub(crate) fn arg_in_zero_two_pi(z: Complex64) -> f64 {
    let t = z.arg();
    let t = if t < 0.0 { t + TAU } else { t };
    if t == 0.0 {
        0.0
    } else {
        t
    }
}

/// Total order on preimages: increasing modulus, then increasing argument
/// in `[0, 2π)`.
pub(crate) fn preimage_cmp(a: &Complex64, b: &Complex64) -> Ordering {
    a.norm()
        .total_cmp(&b.norm())
        .then_with(|| arg_in_zero_two_pi(*a).total_cmp(&arg_in_zero_two_pi(*b)))
}

fn growth_for(family: MapFamily) -> GrowthProfile {
    match family {
        MapFamily::Exp { .. } => GrowthProfile {
            kappa: 1.0,
            alpha1: 0.0,
            alpha2_lower: 1.0,
            alpha2_upper: 1.0,
            order: 1.0,
            divergence_type: true,
            entire: true,
        },
        MapFamily::Tangent { lambda } => GrowthProfile {
            kappa: (2.0 / lambda).max(6.0),
            alpha1: 0.0,
            alpha2_lower: 2.0,
            alpha2_upper: 2.0,
            order: 1.0,
            divergence_type: true,
            entire: false,
        },
        MapFamily::Sine { .. } => GrowthProfile {
            kappa: 8.0,
            alpha1: 0.0,
            alpha2_lower: 1.0,
            alpha2_upper: 1.0,
            order: 1.0,
            divergence_type: true,
            entire: true,
        },
        MapFamily::Power { d } => GrowthProfile {
            kappa: f64::from(d),
            alpha1: 0.0,
            alpha2_lower: (f64::from(d) - 1.0) / f64::from(d),
            alpha2_upper: (f64::from(d) - 1.0) / f64::from(d),
            order: 0.0,
            divergence_type: false,
            entire: true,
        },
        MapFamily::Quadratic { .. } => GrowthProfile {
            kappa: 3.0,
            alpha1: 0.0,
            alpha2_lower: 0.5,
            alpha2_upper: 0.5,
            order: 0.0,
            divergence_type: false,
            entire: true,
        },
    }
}

fn singular_values_for(family: MapFamily) -> Vec<Complex64> {
    match family {
        MapFamily::Exp { .. } => vec![Complex64::new(0.0, 0.0)],
        MapFamily::Tangent { lambda } => {
            vec![Complex64::new(0.0, lambda), Complex64::new(0.0, -lambda)]
        }
        MapFamily::Sine { .. } => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        MapFamily::Power { .. } => vec![Complex64::new(0.0, 0.0)],
        MapFamily::Quadratic { c } => vec![Complex64::new(c, 0.0)],
    }
}

fn domain_check(family: MapFamily) -> Result<()> {
    match family {
        MapFamily::Exp { lambda } | MapFamily::Tangent { lambda } => {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidParameters {
                    family: if matches!(family, MapFamily::Exp { .. }) {
                        "exp"
                    } else {
                        "tangent"
                    },
                    reason: format!("lambda = {lambda} must be positive and finite"),
                });
            }
        }
        MapFamily::Sine { a, b } => {
            if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameters {
                    family: "sine",
                    reason: format!("need a > 0 and finite b, got a = {a}, b = {b}"),
                });
            }
        }
        MapFamily::Power { d } => {
            if !(2..=12).contains(&d) {
                return Err(Error::InvalidParameters {
                    family: "power",
                    reason: format!("degree d = {d} must lie in 2..=12"),
                });
            }
        }
        MapFamily::Quadratic { c } => {
            if !c.is_finite() {
                return Err(Error::InvalidParameters {
                    family: "quadratic",
                    reason: format!("c = {c} must be finite"),
                });
            }
        }
    }
    Ok(())
}

fn hyperbolic_range_check(family: MapFamily) -> Result<()> {
    let (ok, family_name, detail, range): (bool, &'static str, String, &'static str) =
        match family {
            MapFamily::Exp { lambda } => (
                lambda < 1.0 / std::f64::consts::E - 1e-12,
                "exp",
                format!("lambda = {lambda}"),
                "0 < lambda < 1/e",
            ),
            MapFamily::Tangent { lambda } => (
                lambda < 1.0 - 1e-12,
                "tangent",
                format!("lambda = {lambda}"),
                "0 < lambda < 1",
            ),
            MapFamily::Sine { a, b } => (
                a <= 0.95 && b.abs() <= 0.5,
                "sine",
                format!("a = {a}, b = {b}"),
                "0 < a <= 0.95, |b| <= 0.5",
            ),
            MapFamily::Power { .. } => (true, "power", String::new(), "d in 2..=12"),
            MapFamily::Quadratic { c } => (
                (0.0..=0.24).contains(&c),
                "quadratic",
                format!("c = {c}"),
                "0 <= c <= 0.24",
            ),
        };
    if ok {
        Ok(())
    } else {
        Err(Error::NotVerifiedHyperbolic {
            family: family_name,
            detail,
            range,
        })
    }
}

fn build_family(family: MapFamily, checked: bool) -> Result<AnalyticMap> {
    domain_check(family)?;
    if checked {
        hyperbolic_range_check(family)?;
    }
    let growth = growth_for(family);
    growth.validate()?;
    let julia_seed = find_julia_seed(family)?;
    let map = AnalyticMap {
        family,
        growth,
        julia_seed,
        singular_values: singular_values_for(family),
    };
    let residual = (map.eval(julia_seed) - julia_seed).norm();
    let mult = map.deriv(julia_seed).norm();
    if residual > SEED_RESIDUAL_TOL * (1.0 + julia_seed.norm()) || !(mult > 1.0) {
        return Err(Error::InvalidParameters {
            family: "catalog",
            reason: format!(
                "Julia seed {julia_seed} failed verification (residual {residual:.3e}, |f'| = {mult:.6})"
            ),
        });
    }
    if checked {
        origin_clearance_check(&map)?;
    }
    Ok(map)
}

/// The τ-metric requires the Julia set to stay away from the origin;
/// sample the backward orbit and reject maps whose samples approach 0.
fn origin_clearance_check(map: &AnalyticMap) -> Result<()> {
    let samples = sample_julia_points(map, 48, 8, &BranchWindow::new(6, 1e3), 0x4A11_A5E7)?;
    let min_mod = samples.iter().map(|z| z.norm()).fold(f64::MAX, f64::min);
    if min_mod < ORIGIN_CLEARANCE {
        return Err(Error::InvalidParameters {
            family: "catalog",
            reason: format!(
                "Julia set approaches the origin (sampled min |z| = {min_mod:.3e}); \
                 the τ-metric is undefined there"
            ),
        });
    }
    Ok(())
}

fn find_julia_seed(family: MapFamily) -> Result<Complex64> {
    let seed = match family {
        MapFamily::Exp { lambda } => {
            if lambda < 1.0 / std::f64::consts::E - 1e-9 {
                // Repelling real fixed point of λe^x = x: x ↦ ln(x/λ) is a
                // contraction near it.
                let mut x = 3.0f64;
                for _ in 0..200 {
                    x = (x / lambda).ln();
                }
                for _ in 0..4 {
                    let g = lambda * x.exp() - x;
                    let gp = lambda * x.exp() - 1.0;
                    x -= g / gp;
                }
                Complex64::new(x, 0.0)
            } else {
                let map = MapFamily::Exp { lambda };
                newton_fixed_point(map, Complex64::new(0.3, 1.3))?
            }
        }
        MapFamily::Tangent { lambda } => {
            // Fixed point on the branch beyond the first pole; the inverse
            // iteration x ↦ atan(x/λ) + π contracts onto it.
            let mut x = 4.0f64;
            for _ in 0..120 {
                x = (x / lambda).atan() + PI;
            }
            for _ in 0..4 {
                let g = lambda * x.tan() - x;
                let gp = lambda * (1.0 + x.tan() * x.tan()) - 1.0;
                x -= g / gp;
            }
            Complex64::new(x, 0.0)
        }
        MapFamily::Sine { a, b } => {
            if a < 1.0 {
                // sinh(a y) = y has a positive root for a < 1; i·y is a
                // repelling fixed point of sin(az), and for b ≠ 0 it is the
                // Newton start for the perturbed fixed point.
                let mut y = 2.0f64;
                for _ in 0..300 {
                    y = y.asinh() / a;
                }
                if b == 0.0 {
                    Complex64::new(0.0, y)
                } else {
                    newton_fixed_point(family, Complex64::new(0.0, y))
                        .or_else(|_| newton_fixed_point(family, Complex64::new(0.0, -y)))?
                }
            } else {
                newton_fixed_point(family, Complex64::new(0.0, 2.0))?
            }
        }
        MapFamily::Power { .. } => Complex64::new(1.0, 0.0),
        MapFamily::Quadratic { c } => {
            Complex64::new(0.5 * (1.0 + (1.0 - 4.0 * c).sqrt()), 0.0)
        }
    };
    if seed.is_finite() {
        Ok(seed)
    } else {
        Err(Error::InvalidParameters {
            family: "catalog",
            reason: "Julia seed construction diverged".into(),
        })
    }
}

/// Newton iteration for a fixed point `f(z) = z` from `z0`; rejects
/// non-repelling results.
fn newton_fixed_point(family: MapFamily, z0: Complex64) -> Result<Complex64> {
    let map = AnalyticMap {
        family,
        growth: growth_for(family),
        julia_seed: Complex64::new(0.0, 0.0),
        singular_values: Vec::new(),
    };
    let mut z = z0;
    for _ in 0..80 {
        let g = map.eval(z) - z;
        let gp = map.deriv(z) - Complex64::new(1.0, 0.0);
        if !g.is_finite() || gp.norm() < 1e-14 {
            break;
        }
        let step = g / gp;
        z -= step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    let residual = (map.eval(z) - z).norm();
    if residual <= SEED_RESIDUAL_TOL * (1.0 + z.norm()) && map.deriv(z).norm() > 1.0 {
        Ok(z)
    } else {
        Err(Error::InvalidParameters {
            family: "catalog",
            reason: format!("no repelling fixed point found from {z0} (reached {z})"),
        })
    }
}

/// Build a verified-hyperbolic catalog map from a family id and named
/// parameters. Unknown families and parameters outside the documented
/// hyperbolic ranges are rejected.
pub fn build_catalog_map(family_id: &str, params: &BTreeMap<String, f64>) -> Result<AnalyticMap> {
    build_family(parse_family(family_id, params)?, true)
}

/// Build a map without the hyperbolicity range gate. Branch enumeration,
/// growth sampling, and Borel sums remain valid; Gibbs-theoretic results
/// are not guaranteed to mean anything for such maps.
pub fn build_map_unchecked(family_id: &str, params: &BTreeMap<String, f64>) -> Result<AnalyticMap> {
    build_family(parse_family(family_id, params)?, false)
}

fn parse_family(family_id: &str, params: &BTreeMap<String, f64>) -> Result<MapFamily> {
    let get = |key: &str| -> Result<f64> {
        params.get(key).copied().ok_or_else(|| Error::InvalidParameters {
            family: "catalog",
            reason: format!("missing parameter `{key}` for family `{family_id}`"),
        })
    };
    let expect_keys = |keys: &[&str]| -> Result<()> {
        for k in params.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(Error::InvalidParameters {
                    family: "catalog",
                    reason: format!("unexpected parameter `{k}` for family `{family_id}`"),
                });
            }
        }
        Ok(())
    };
    match family_id {
        "exp" => {
            expect_keys(&["lambda"])?;
            Ok(MapFamily::Exp { lambda: get("lambda")? })
        }
        "tangent" => {
            expect_keys(&["lambda"])?;
            Ok(MapFamily::Tangent { lambda: get("lambda")? })
        }
        "sine" => {
            expect_keys(&["a", "b"])?;
            let b = params.get("b").copied().unwrap_or(0.0);
            Ok(MapFamily::Sine { a: get("a")?, b })
        }
        "power" => {
            expect_keys(&["d"])?;
            let d = get("d")?;
            if d.fract() != 0.0 || !(2.0..=12.0).contains(&d) {
                return Err(Error::InvalidParameters {
                    family: "power",
                    reason: format!("degree d = {d} must be an integer in 2..=12"),
                });
            }
            Ok(MapFamily::Power { d: d as u32 })
        }
        "quadratic" => {
            expect_keys(&["c"])?;
            Ok(MapFamily::Quadratic { c: get("c")? })
        }
        "elliptic_weierstrass" | "schwarzian_polynomial" => Err(Error::MetadataOnlyFamily {
            family: family_id.to_string(),
        }),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

/// One row of the catalog listing.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub family_id: &'static str,
    pub description: &'static str,
    pub parameters: &'static str,
    pub hyperbolic_range: &'static str,
    pub representative_growth: GrowthProfile,
    /// Whether the family has evaluators and inverse branches, or is a
    /// metadata-only record of its growth constants.
    pub has_evaluator: bool,
}

/// The full catalog, including metadata-only records for families whose
/// growth envelopes are documented but which have no evaluator here.
pub fn catalog_entries() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            family_id: "exp",
            description: "z ↦ λ e^z",
            parameters: "lambda > 0",
            hyperbolic_range: "0 < lambda < 1/e",
            representative_growth: growth_for(MapFamily::Exp { lambda: 0.3 }),
            has_evaluator: true,
        },
        CatalogEntry {
            family_id: "tangent",
            description: "z ↦ λ tan z",
            parameters: "lambda > 0",
            hyperbolic_range: "0 < lambda < 1",
            representative_growth: growth_for(MapFamily::Tangent { lambda: 0.5 }),
            has_evaluator: true,
        },
        CatalogEntry {
            family_id: "sine",
            description: "z ↦ sin(a z + b)",
            parameters: "a > 0, b real (default 0)",
            hyperbolic_range: "0 < a <= 0.95, |b| <= 0.5",
            representative_growth: growth_for(MapFamily::Sine { a: 0.8, b: 0.0 }),
            has_evaluator: true,
        },
        CatalogEntry {
            family_id: "power",
            description: "z ↦ z^d (exact oracle)",
            parameters: "integer d in 2..=12",
            hyperbolic_range: "all d in 2..=12",
            representative_growth: growth_for(MapFamily::Power { d: 2 }),
            has_evaluator: true,
        },
        CatalogEntry {
            family_id: "quadratic",
            description: "z ↦ z² + c (oracle near c = 0)",
            parameters: "c real",
            hyperbolic_range: "0 <= c <= 0.24",
            representative_growth: growth_for(MapFamily::Quadratic { c: 0.1 }),
            has_evaluator: true,
        },
        CatalogEntry {
            family_id: "elliptic_weierstrass",
            description: "Weierstrass ℘ (metadata only)",
            parameters: "lattice invariants g2, g3",
            hyperbolic_range: "not constructed here",
            representative_growth: GrowthProfile {
                kappa: 8.0,
                alpha1: 0.0,
                alpha2_lower: 1.5,
                alpha2_upper: 1.5,
                order: 2.0,
                divergence_type: true,
                entire: false,
            },
            has_evaluator: false,
        },
        CatalogEntry {
            family_id: "schwarzian_polynomial",
            description: "solutions of a degree-2 polynomial Schwarzian equation (metadata only)",
            parameters: "polynomial coefficients",
            hyperbolic_range: "not constructed here",
            representative_growth: GrowthProfile {
                kappa: 8.0,
                alpha1: 0.0,
                alpha2_lower: 2.0,
                alpha2_upper: 2.0,
                order: 2.0,
                divergence_type: true,
                entire: false,
            },
            has_evaluator: false,
        },
    ]
}

/// Worst-case sandwich ratios from [`verify_growth`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthCheck {
    /// min over samples of `|f'| / (κ⁻¹ |z|^{α₁} |f|^{α₂ lower})`; the
    /// envelope holds when this is ≥ 1.
    pub worst_lower_ratio: f64,
    /// max over samples of `|f'| / (κ |z|^{α₁} |f|^{α₂ upper})`; the
    /// envelope holds when this is ≤ 1.
    pub worst_upper_ratio: f64,
    pub samples_used: usize,
}

/// Check the growth sandwich `κ^{∓1}|z|^{α₁}|f(z)|^{α₂}` against `|f'|` on
/// the given sample points. Errors if any sample sits on a pole, zero, or
/// critical point, where the ratios are undefined.
pub fn verify_growth(map: &AnalyticMap, samples: &[Complex64]) -> Result<GrowthCheck> {
    let g = map.growth();
    let mut worst_lower = f64::MAX;
    let mut worst_upper = f64::MIN;
    for &z in samples {
        let w = map.eval(z);
        if !w.is_finite() {
            return Err(Error::SingularSample {
                z,
                reason: "sample maps to a pole".into(),
            });
        }
        if w.norm() == 0.0 {
            return Err(Error::SingularSample {
                z,
                reason: "sample maps to 0; the envelope is undefined there".into(),
            });
        }
        let fp = map.deriv(z).norm();
        if fp == 0.0 || !fp.is_finite() {
            return Err(Error::SingularSample {
                z,
                reason: "sample is a critical point".into(),
            });
        }
        let zpow = z.norm().powf(g.alpha1);
        let lower_env = zpow * w.norm().powf(g.alpha2_lower) / g.kappa;
        let upper_env = g.kappa * zpow * w.norm().powf(g.alpha2_upper);
        worst_lower = worst_lower.min(fp / lower_env);
        worst_upper = worst_upper.max(fp / upper_env);
    }
    Ok(GrowthCheck {
        worst_lower_ratio: worst_lower,
        worst_upper_ratio: worst_upper,
        samples_used: samples.len(),
    })
}

/// Draw points on (an approximation of) the Julia set by iterating inverse
/// branches backward from the map's seed, choosing a branch uniformly at
/// random at each step. Fully determined by `seed`.
pub fn sample_julia_points(
    map: &AnalyticMap,
    count: usize,
    burn_in: usize,
    window: &BranchWindow,
    seed: u64,
) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = map.julia_seed();
    let mut out = Vec::with_capacity(count);
    let mut branches = Vec::new();
    for step in 0..(burn_in + count) {
        map.branches_into(z, window, &mut branches)?;
        if branches.is_empty() {
            return Err(Error::EmptyLevel { level: step });
        }
        z = branches[rng.gen_range(0..branches.len())];
        if step >= burn_in {
            out.push(z);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HyperbolicVerdict {
    Pass,
    Inconclusive,
    NotHyperbolic,
}

/// Outcome of the numerical hyperbolicity certificate.
#[derive(Debug, Clone)]
pub struct HyperbolicReport {
    pub verdict: HyperbolicVerdict,
    /// Populated for non-pass verdicts with the first obstruction found.
    pub reason: Option<String>,
    /// A quarter of the measured distance between the sampled Julia set
    /// and the postsingular set.
    pub delta_lower: f64,
    /// Fitted expansion rate γ in `|(fⁿ)'| ≥ c γⁿ` over Julia samples.
    pub expansion_gamma: f64,
    pub expansion_c: f64,
    /// Attracting cycles reached by the singular orbits.
    pub attracting_cycles: Vec<Vec<Complex64>>,
}

/// Track every singular orbit for up to `budget` steps, locate attracting
/// cycles, measure how far the postsingular set stays from backward-orbit
/// Julia samples, and fit the expansion rate along forward orbits.
///
/// Escaping singular orbits (as for `λ e^z` at λ = 1) give an
/// `Inconclusive` verdict: the map may still be topologically hyperbolic,
/// but this certificate cannot see it.
pub fn verify_hyperbolic(map: &AnalyticMap, budget: usize) -> Result<HyperbolicReport> {
    let mut verdict = HyperbolicVerdict::Pass;
    let mut reason: Option<String> = None;
    let mut postsingular: Vec<Complex64> = Vec::new();
    let mut cycles: Vec<Vec<Complex64>> = Vec::new();
    let note = |v: HyperbolicVerdict, r: String, verdict: &mut HyperbolicVerdict,
                reason: &mut Option<String>| {
        // NotHyperbolic dominates Inconclusive; keep the first reason.
        if *verdict == HyperbolicVerdict::Pass
            || (*verdict == HyperbolicVerdict::Inconclusive && v == HyperbolicVerdict::NotHyperbolic)
        {
            *verdict = v;
            if reason.is_none() || *verdict == HyperbolicVerdict::NotHyperbolic {
                *reason = Some(r);
            }
        }
    };

    for &sv in map.singular_values() {
        let mut trail: Vec<Complex64> = Vec::new();
        let mut z = sv;
        let mut settled = false;
        for _ in 0..budget {
            if !z.is_finite() || z.norm() > ESCAPE_RADIUS {
                note(
                    HyperbolicVerdict::Inconclusive,
                    format!("singular orbit of {sv} escapes to infinity"),
                    &mut verdict,
                    &mut reason,
                );
                settled = true;
                break;
            }
            postsingular.push(z);
            // Look for a return to a recent orbit point: an attracting
            // cycle of period up to 8.
            let lookback = trail.len().min(8);
            let mut found: Option<usize> = None;
            for p in 1..=lookback {
                let prev = trail[trail.len() - p];
                if (z - prev).norm() <= 1e-9 * (1.0 + z.norm()) {
                    found = Some(p);
                    break;
                }
            }
            if let Some(p) = found {
                let cycle: Vec<Complex64> = trail[trail.len() - p..].to_vec();
                let mult: f64 = cycle.iter().map(|&c| map.deriv(c).norm()).product();
                if mult < 1.0 - 1e-9 {
                    cycles.push(cycle);
                } else {
                    note(
                        HyperbolicVerdict::NotHyperbolic,
                        format!(
                            "singular orbit of {sv} recurs with multiplier {mult:.6} ≥ 1"
                        ),
                        &mut verdict,
                        &mut reason,
                    );
                }
                settled = true;
                break;
            }
            trail.push(z);
            z = map.eval(z);
        }
        if !settled {
            note(
                HyperbolicVerdict::Inconclusive,
                format!("singular orbit of {sv} did not settle within {budget} steps"),
                &mut verdict,
                &mut reason,
            );
        }
    }

    let window = BranchWindow::new(7, 1e4);
    let samples = sample_julia_points(map, 192, 12, &window, 0xA11C_E000)?;

    let mut delta_lower = f64::MAX;
    if postsingular.is_empty() {
        delta_lower = 0.0;
    } else {
        for s in &samples {
            for p in &postsingular {
                delta_lower = delta_lower.min((s - p).norm());
            }
        }
        if delta_lower < 1e-6 {
            note(
                HyperbolicVerdict::NotHyperbolic,
                format!(
                    "postsingular set comes within {delta_lower:.3e} of the sampled Julia set"
                ),
                &mut verdict,
                &mut reason,
            );
        }
        delta_lower /= 4.0;
    }

    // Expansion fit: minimum of |(fⁿ)'| over samples, n = 1..=8, then a
    // least-squares line through the logs.
    let mut log_mins = Vec::new();
    for n in 1..=8usize {
        let mut min_log = f64::MAX;
        let mut any = false;
        for &z0 in samples.iter().take(64) {
            let mut z = z0;
            let mut log_prod = 0.0f64;
            let mut ok = true;
            for _ in 0..n {
                let d = map.deriv(z).norm();
                if !(d > 0.0) || !d.is_finite() {
                    ok = false;
                    break;
                }
                log_prod += d.ln();
                z = map.eval(z);
                if !z.is_finite() {
                    ok = false;
                    break;
                }
            }
            if ok {
                any = true;
                min_log = min_log.min(log_prod);
            }
        }
        if any {
            log_mins.push((n as f64, min_log));
        }
    }
    let (slope, intercept) = least_squares_line(&log_mins);
    let gamma = slope.exp();
    let c = intercept.exp();
    if !(gamma > 1.0 + 1e-9) {
        note(
            HyperbolicVerdict::NotHyperbolic,
            format!("no uniform expansion measured along Julia samples (γ = {gamma:.6})"),
            &mut verdict,
            &mut reason,
        );
    }

    Ok(HyperbolicReport {
        verdict,
        reason,
        delta_lower,
        expansion_gamma: gamma,
        expansion_c: c,
        attracting_cycles: cycles,
    })
}

pub(crate) fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map_or(0.0, |p| p.1));
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Repelling periodic points located by Newton iteration from preimage-tree
/// seeds.
#[derive(Debug, Clone)]
pub struct PeriodicPoints {
    /// Strictly repelling points of period dividing the requested period,
    /// sorted by (modulus, argument), deduplicated.
    pub points: Vec<Complex64>,
    /// `|(fⁿ)'(z)|` for each returned point, in the same order.
    pub multipliers: Vec<f64>,
    pub seeds_tried: usize,
    pub converged: usize,
    /// Set when no seed converged to a repelling point.
    pub warning: Option<String>,
}

/// Find repelling points with `fⁿ(z) = z` for `n = period`. Seeds are the
/// depth-`period` preimage tree of `base` under the window; each seed runs
/// Newton on `fⁿ(z) − z`. Results satisfy
/// `|fⁿ(z) − z| ≤ 1e−10 (1 + |z|)` and `|(fⁿ)'(z)| > 1`.
pub fn find_periodic_points(
    map: &AnalyticMap,
    period: usize,
    base: Complex64,
    window: &BranchWindow,
) -> Result<PeriodicPoints> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be ≥ 1".into()));
    }
    window.validate()?;
    let seed_cap = 100_000usize;
    if (window.max_count as f64).powi(period as i32) > seed_cap as f64 {
        return Err(Error::InvalidArgument(format!(
            "seed tree too large: max_count^period = {}^{period} exceeds {seed_cap}",
            window.max_count
        )));
    }

    // Newton basins of fⁿ(z) − z are fractal, so depth-`period` tree points
    // alone are unreliable starts. Points a couple of levels deeper shadow
    // the periodic cycle more closely; seed from every level in
    // period ..= period + extra.
    let mut extra = 2usize;
    while extra > 0
        && (window.max_count as f64).powi((period + extra) as i32) > seed_cap as f64
    {
        extra -= 1;
    }
    let mut seeds: Vec<Complex64> = Vec::new();
    let mut level = vec![base];
    let mut next = Vec::new();
    let mut branches = Vec::new();
    for depth in 1..=(period + extra) {
        next.clear();
        for &w in &level {
            map.branches_into(w, window, &mut branches)?;
            next.extend_from_slice(&branches);
        }
        std::mem::swap(&mut level, &mut next);
        if level.is_empty() {
            break;
        }
        if depth >= period {
            seeds.extend_from_slice(&level);
        }
    }

    let mut found: Vec<(Complex64, f64)> = Vec::new();
    let mut converged = 0usize;
    let seeds_tried = seeds.len();
    for &seed in &seeds {
        if let Some((z, mult)) = newton_periodic(map, seed, period) {
            converged += 1;
            if mult > 1.0 + 1e-9 {
                found.push((z, mult));
            }
        }
    }

    found.sort_by(|a, b| preimage_cmp(&a.0, &b.0));
    let mut points = Vec::new();
    let mut multipliers = Vec::new();
    for (z, m) in found {
        let dup = points
            .iter()
            .any(|&p: &Complex64| (p - z).norm() <= 1e-8 * (1.0 + z.norm()));
        if !dup {
            points.push(z);
            multipliers.push(m);
        }
    }

    let warning = if points.is_empty() {
        Some(format!(
            "no repelling period-{period} points converged from {seeds_tried} seeds"
        ))
    } else {
        None
    };
    Ok(PeriodicPoints {
        points,
        multipliers,
        seeds_tried,
        converged,
        warning,
    })
}

/// Newton on `fⁿ(z) − z`; returns the point and `|(fⁿ)'|` on success.
fn newton_periodic(map: &AnalyticMap, seed: Complex64, n: usize) -> Option<(Complex64, f64)> {
    let one = Complex64::new(1.0, 0.0);
    let mut z = seed;
    for _ in 0..60 {
        let mut fz = z;
        let mut dz = one;
        for _ in 0..n {
            dz *= map.deriv(fz);
            fz = map.eval(fz);
            if !fz.is_finite() || !dz.is_finite() {
                return None;
            }
        }
        let g = fz - z;
        let gp = dz - one;
        if g.norm() <= 1e-12 * (1.0 + z.norm()) {
            break;
        }
        if gp.norm() < 1e-14 {
            return None;
        }
        let step = g / gp;
        z -= step;
        if !z.is_finite() || z.norm() > 1e8 || z.re > 500.0 {
            return None;
        }
        if step.norm() <= 1e-14 * (1.0 + z.norm()) {
            break;
        }
    }
    // Final residual and multiplier at the converged point.
    let mut fz = z;
    let mut dz = one;
    for _ in 0..n {
        dz *= map.deriv(fz);
        fz = map.eval(fz);
        if !fz.is_finite() {
            return None;
        }
    }
    if (fz - z).norm() <= ROUND_TRIP_TOL * (1.0 + z.norm()) {
        Some((z, dz.norm()))
    } else {
        None
    }
}
