//! Truncated transfer operators on backward-orbit trees.
//!
//! The operator `L_φ g(w) = Σ_{f(z)=w} g(z) e^{φ(z)}` is evaluated over the
//! finitely many inverse branches admitted by a [`BranchWindow`]; iterates
//! `L_φ^n` become sums over depth-`n` preimage trees. Two engines share one
//! branch-expansion core: a streaming depth-first walk whose memory is
//! `O(depth · max_count)` (used by the pressure, expectation, and variance
//! estimators in `thermo`), and a stored breadth-first [`PreimageTree`] for
//! measure atoms, Newton seeding, and CSV export.
//!
//! Every truncation is accounted for: each node expansion records a bound
//! on the weight mass it discarded, obtained from the branch density and
//! the decay exponent `s = t·τ̂` of tame weights, with the amplitude fitted
//! on the retained branches. These bounds are diagnostics, not certified
//! enclosures; finite-degree maps get exact discarded sums instead.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::{least_squares_line, AnalyticMap, BranchWindow};
use crate::potentials::TamePotential;

/// Stored trees refuse to grow beyond this many nodes; deep iteration
/// should use the streaming walk instead.
pub const MAX_STORED_NODES: usize = 4_000_000;

// ---------------------------------------------------------------------------
// Log-space accumulators
// ---------------------------------------------------------------------------

/// Online log-sum-exp: maintains `Σ e^{x_i}` as `e^{shift} · sum` with the
/// shift tracking the running maximum, so level masses at any depth stay
/// inside f64 range.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    shift: f64,
    sum: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        LogSum {
            shift: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub(crate) fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.shift {
            self.sum += (x - self.shift).exp();
        } else {
            self.sum = self.sum * (self.shift - x).exp() + 1.0;
            self.shift = x;
        }
    }

    pub(crate) fn log_total(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.sum.ln()
        }
    }

    #[cfg(test)]
    pub(crate) fn is_empty(&self) -> bool {
        self.sum == 0.0
    }
}

/// Weighted complex sum `Σ g_i e^{w_i}` kept on the same moving log scale
/// as its weight mass, so normalized means survive arbitrarily large or
/// small cumulative weights.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WeightedSum {
    shift: f64,
    weight: f64,
    num: Complex64,
}

impl WeightedSum {
    pub(crate) fn new() -> Self {
        WeightedSum {
            shift: f64::NEG_INFINITY,
            weight: 0.0,
            num: Complex64::new(0.0, 0.0),
        }
    }

    pub(crate) fn add(&mut self, log_w: f64, g: Complex64) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w <= self.shift {
            let scale = (log_w - self.shift).exp();
            self.weight += scale;
            self.num += g * scale;
        } else {
            let scale = (self.shift - log_w).exp();
            self.weight = self.weight * scale + 1.0;
            self.num = self.num * scale + g;
            self.shift = log_w;
        }
    }

    /// `Σ g e^{w} / Σ e^{w}`.
    pub(crate) fn mean(&self) -> Complex64 {
        self.num / self.weight
    }

    pub(crate) fn log_weight(&self) -> f64 {
        if self.weight == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.weight.ln()
        }
    }

    #[cfg(test)]
    pub(crate) fn is_empty(&self) -> bool {
        self.weight == 0.0
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

// ---------------------------------------------------------------------------
// Branch expansion with discarded-mass bounds
// ---------------------------------------------------------------------------

/// Precomputed constants of the tail model for one `(map, φ)` pair.
pub(crate) struct TailParams {
    /// Weight decay exponent `s = t·τ̂` of `e^{φ(z)} ≲ A·|z|^{-s}`.
    s: f64,
    density: f64,
    /// Log of the growth-envelope amplitude `e^{sup h}·κ^t`, the fallback
    /// when no branch was retained to fit against.
    log_envelope: f64,
    /// Exponent `t(α₂ − τ)` of the `|w|` dependence of the amplitude.
    t_out: f64,
    finite_degree: Option<usize>,
    /// The model exponent `τ̂γ = (t·τ̂ − ρ)/2` used to report the fitted
    /// constant of the per-level bound `C/R^{τ̂γ}`.
    gamma_hat: f64,
}

impl TailParams {
    pub(crate) fn new(map: &AnalyticMap, phi: &TamePotential) -> Result<Self> {
        if !phi.is_tame() {
            return Err(Error::LooselyTameWeight {
                t: phi.t(),
                tau: phi.tau(),
            });
        }
        let g = map.growth();
        let s = phi.t() * phi.tau_hat(map);
        let finite_degree = map.finite_degree();
        if finite_degree.is_none() && !(s > g.order) {
            return Err(Error::NotTame {
                t: phi.t(),
                threshold: g.order / phi.tau_hat(map),
            });
        }
        Ok(TailParams {
            s,
            density: map.branch_density(),
            log_envelope: phi.h().sup_bound() + phi.t() * g.kappa.ln(),
            t_out: phi.t() * (g.alpha2_lower - phi.tau()),
            finite_degree,
            gamma_hat: 0.5 * (s - g.order),
        })
    }

    pub(crate) fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }
}

/// Result of expanding one node: children (with their one-step weights)
/// live in the caller's buffers.
pub(crate) struct NodeExpansion {
    /// Log of the bound on `Σ e^{φ(z)}` over the discarded preimages of
    /// this node; `-∞` when the expansion is complete.
    pub log_missing: f64,
    /// Radius beyond which branches were discarded.
    pub cutoff: f64,
}

/// Enumerate the windowed preimages of `w`, filling `zs` and the matching
/// one-step log-weights `phis`, and bound what the window discarded.
pub(crate) fn expand_children(
    map: &AnalyticMap,
    phi: &TamePotential,
    tp: &TailParams,
    w: Complex64,
    log_abs_w: f64,
    window: &BranchWindow,
    zs: &mut Vec<Complex64>,
    phis: &mut Vec<f64>,
) -> Result<NodeExpansion> {
    map.branches_into(w, window, zs)?;
    phis.clear();
    for &z in zs.iter() {
        phis.push(phi.value_from_pair(map, z, w, z.norm().ln(), log_abs_w));
    }

    if let Some(d) = tp.finite_degree {
        if zs.len() >= d {
            return Ok(NodeExpansion {
                log_missing: f64::NEG_INFINITY,
                cutoff: f64::INFINITY,
            });
        }
        // Few enough branches to enumerate: the discarded sum is exact.
        let all = map.inverse_branches(w, &BranchWindow::new(d, f64::MAX))?;
        let mut missing = LogSum::new();
        for &z in all.iter().skip(zs.len()) {
            missing.add(phi.value_from_pair(map, z, w, z.norm().ln(), log_abs_w));
        }
        let cutoff = zs.last().map_or(0.0, |z| z.norm());
        return Ok(NodeExpansion {
            log_missing: missing.log_total(),
            cutoff,
        });
    }

    // Transcendental: branches beyond the cutoff radius follow the density
    // model. When the count cap bit first, the cutoff is the last retained
    // modulus (everything missing lies further out).
    let count_capped = zs.len() == window.max_count;
    let cutoff = if count_capped {
        zs.last().map(|z| z.norm()).unwrap_or(window.max_modulus)
    } else {
        window.max_modulus
    };
    // Amplitude of e^{φ(z)} ≈ A·|z|^{-s}, fitted on the retained branches;
    // envelope fallback when the window retained nothing.
    let log_amp = zs
        .iter()
        .zip(phis.iter())
        .map(|(z, p)| p + tp.s * z.norm().ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let log_amp = if log_amp == f64::NEG_INFINITY {
        tp.log_envelope - tp.t_out * log_abs_w
    } else {
        log_amp
    };
    // Σ_{|z|≥R} A|z|^{-s} ≤ A·R^{-s} + A·D·R^{1-s}/(s-1): first missing
    // branch plus the density integral.
    let lr = cutoff.ln();
    let log_missing = log_amp
        + log_add(
            -tp.s * lr,
            (tp.density / (tp.s - 1.0)).ln() + (1.0 - tp.s) * lr,
        );
    Ok(NodeExpansion {
        log_missing,
        cutoff,
    })
}

// ---------------------------------------------------------------------------
// Streaming depth-first walk
// ---------------------------------------------------------------------------

/// Consumer of a depth-first tree walk. `enter` fires once per retained
/// node in deterministic (depth-first, branch-sorted) order; stacks keyed
/// by level can rely on ancestors of a level-`k` node having entered at
/// levels `1..k` with no intervening siblings.
pub(crate) trait TreeVisitor {
    fn enter(&mut self, level: usize, z: Complex64, log_weight: f64, phi_z: f64);
    /// One-step discarded-mass bound feeding `level` (cumulative weight of
    /// the truncating parent included).
    fn truncated(&mut self, _level: usize, _log_missing: f64) {}
}

#[derive(Debug, Clone)]
pub(crate) struct WalkStats {
    pub nodes: u64,
    pub level_counts: Vec<u64>,
}

#[derive(Clone, Copy)]
struct Frame {
    cum: f64,
    idx: usize,
}

/// Walk the depth-`n` preimage tree of `root` without storing it,
/// reporting every retained node and every truncation to the visitor.
pub(crate) fn walk_tree<V: TreeVisitor>(
    map: &AnalyticMap,
    phi: &TamePotential,
    root: Complex64,
    depth: usize,
    window: &BranchWindow,
    visitor: &mut V,
) -> Result<WalkStats> {
    window.validate()?;
    let tp = TailParams::new(map, phi)?;
    let mut stats = WalkStats {
        nodes: 0,
        level_counts: vec![0; depth + 1],
    };
    stats.level_counts[0] = 1;
    if depth == 0 {
        return Ok(stats);
    }
    let log_min_weight = if window.min_weight > 0.0 {
        window.min_weight.ln()
    } else {
        f64::NEG_INFINITY
    };

    let mut zs: Vec<Vec<Complex64>> = (0..depth).map(|_| Vec::new()).collect();
    let mut phis: Vec<Vec<f64>> = (0..depth).map(|_| Vec::new()).collect();

    let exp0 = expand_children(
        map,
        phi,
        &tp,
        root,
        root.norm().ln(),
        window,
        &mut zs[0],
        &mut phis[0],
    )?;
    visitor.truncated(1, exp0.log_missing);
    if zs[0].is_empty() {
        return Err(Error::EmptyLevel { level: 1 });
    }
    let mut frames = Vec::with_capacity(depth);
    frames.push(Frame { cum: 0.0, idx: 0 });

    loop {
        let level = frames.len();
        if level == 0 {
            break;
        }
        let top = *frames.last().unwrap();
        if top.idx >= zs[level - 1].len() {
            frames.pop();
            continue;
        }
        frames.last_mut().unwrap().idx += 1;
        let z = zs[level - 1][top.idx];
        let phi_z = phis[level - 1][top.idx];
        let cum = top.cum + phi_z;
        if cum < log_min_weight {
            visitor.truncated(level, cum);
            continue;
        }
        stats.nodes += 1;
        stats.level_counts[level] += 1;
        visitor.enter(level, z, cum, phi_z);
        if level < depth {
            let log_abs_z = z.norm().ln();
            let exp = expand_children(
                map,
                phi,
                &tp,
                z,
                log_abs_z,
                window,
                &mut zs[level],
                &mut phis[level],
            )?;
            visitor.truncated(level + 1, cum + exp.log_missing);
            if !zs[level].is_empty() {
                frames.push(Frame { cum, idx: 0 });
            }
        }
    }

    for (level, &count) in stats.level_counts.iter().enumerate().skip(1) {
        if count == 0 {
            return Err(Error::EmptyLevel { level });
        }
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Stored trees
// ---------------------------------------------------------------------------

/// One retained preimage: its point, the index of its parent in the
/// previous level, and the cumulative log-weight `S_kφ` along its path.
#[derive(Debug, Clone, Copy)]
pub struct TreeNode {
    pub z: Complex64,
    pub parent: u32,
    pub log_weight: f64,
}

/// One level of a stored tree with its mass and truncation diagnostics.
#[derive(Debug, Clone)]
pub struct TreeLevel {
    pub nodes: Vec<TreeNode>,
    /// `log Σ e^{S_kφ}` over the level.
    pub log_mass: f64,
    /// Log of the bound on the weight mass discarded while producing this
    /// level (window truncation plus pruning); `-∞` when complete.
    pub log_tail: f64,
    /// The constant of the reported tail model `C/R^{τ̂γ}` relative to the
    /// retained mass, fitted so the model reproduces the computed bound.
    pub tail_constant: f64,
    /// Largest truncation radius used while expanding into this level.
    pub cutoff: f64,
}

/// Breadth-first truncated backward-orbit tree rooted at `w`, carrying
/// cumulative weights in log space.
#[derive(Debug, Clone)]
pub struct PreimageTree {
    root: Complex64,
    window: BranchWindow,
    levels: Vec<TreeLevel>,
}

impl PreimageTree {
    pub fn root(&self) -> Complex64 {
        self.root
    }

    pub fn window(&self) -> &BranchWindow {
        &self.window
    }

    /// Number of expanded levels (0 for a root-only tree).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[TreeLevel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &TreeLevel {
        &self.levels[k]
    }

    pub fn leaf_level(&self) -> &TreeLevel {
        self.levels.last().unwrap()
    }

    /// Worst per-level ratio of the discarded-mass bound to the retained
    /// mass; 0 for complete trees.
    pub fn tail_bound(&self) -> f64 {
        self.levels
            .iter()
            .skip(1)
            .map(|l| (l.log_tail - l.log_mass).exp())
            .fold(0.0, f64::max)
    }

    /// Grow the tree by one level under the same potential and window.
    pub fn expand_one(&mut self, map: &AnalyticMap, phi: &TamePotential) -> Result<()> {
        let tp = TailParams::new(map, phi)?;
        let log_min_weight = if self.window.min_weight > 0.0 {
            self.window.min_weight.ln()
        } else {
            f64::NEG_INFINITY
        };
        let parents = self.levels.last().unwrap();
        let budget = parents.nodes.len().saturating_mul(self.window.max_count);
        let total: usize = self.levels.iter().map(|l| l.nodes.len()).sum();
        if total.saturating_add(budget) > MAX_STORED_NODES {
            return Err(Error::InvalidArgument(format!(
                "stored tree would exceed {MAX_STORED_NODES} nodes; \
                 use a streaming walk for deep iteration"
            )));
        }

        let mut nodes = Vec::new();
        let mut mass = LogSum::new();
        let mut tail = LogSum::new();
        let mut cutoff = 0.0f64;
        let mut zs = Vec::new();
        let mut phis = Vec::new();
        for (pi, parent) in parents.nodes.iter().enumerate() {
            let exp = expand_children(
                map,
                phi,
                &tp,
                parent.z,
                parent.z.norm().ln(),
                &self.window,
                &mut zs,
                &mut phis,
            )?;
            tail.add(parent.log_weight + exp.log_missing);
            cutoff = cutoff.max(exp.cutoff.min(self.window.max_modulus));
            for (&z, &phi_z) in zs.iter().zip(phis.iter()) {
                let log_weight = parent.log_weight + phi_z;
                if log_weight < log_min_weight {
                    tail.add(log_weight);
                    continue;
                }
                mass.add(log_weight);
                nodes.push(TreeNode {
                    z,
                    parent: pi as u32,
                    log_weight,
                });
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyLevel {
                level: self.levels.len(),
            });
        }
        let log_mass = mass.log_total();
        let log_tail = tail.log_total();
        let tail_constant = if log_tail == f64::NEG_INFINITY {
            0.0
        } else {
            (log_tail - log_mass + tp.gamma_hat * cutoff.ln()).exp()
        };
        self.levels.push(TreeLevel {
            nodes,
            log_mass,
            log_tail,
            tail_constant,
            cutoff,
        });
        Ok(())
    }

    /// Debug export: one row per node, `level,index,parent,re,im,log_weight`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "level,index,parent,re,im,log_weight")?;
        for (level, data) in self.levels.iter().enumerate() {
            for (index, node) in data.nodes.iter().enumerate() {
                writeln!(
                    out,
                    "{level},{index},{parent},{re:.17e},{im:.17e},{w:.17e}",
                    parent = node.parent,
                    re = node.z.re,
                    im = node.z.im,
                    w = node.log_weight
                )?;
            }
        }
        Ok(())
    }
}

/// Build the depth-`n` tree of windowed preimages of `w` with cumulative
/// weights `e^{S_kφ}` stored in log space.
pub fn expand_tree(
    map: &AnalyticMap,
    phi: &TamePotential,
    w: Complex64,
    n: usize,
    window: &BranchWindow,
) -> Result<PreimageTree> {
    window.validate()?;
    TailParams::new(map, phi)?;
    if !w.is_finite() {
        return Err(Error::SingularTarget {
            w,
            reason: "tree root must be finite".into(),
        });
    }
    let mut tree = PreimageTree {
        root: w,
        window: *window,
        levels: vec![TreeLevel {
            nodes: vec![TreeNode {
                z: w,
                parent: 0,
                log_weight: 0.0,
            }],
            log_mass: 0.0,
            log_tail: f64::NEG_INFINITY,
            tail_constant: 0.0,
            cutoff: 0.0,
        }],
    };
    for _ in 0..n {
        tree.expand_one(map, phi)?;
    }
    Ok(tree)
}

/// Probability measure putting normalized leaf weights
/// `e^{S_nφ(y)} / Σ e^{S_nφ}` on the deepest level of a tree.
#[derive(Debug, Clone)]
pub struct GibbsTreeMeasure {
    tree: PreimageTree,
    log_norm: f64,
}

impl GibbsTreeMeasure {
    pub fn new(tree: PreimageTree) -> Self {
        let log_norm = tree.leaf_level().log_mass;
        GibbsTreeMeasure { tree, log_norm }
    }

    pub fn tree(&self) -> &PreimageTree {
        &self.tree
    }

    pub fn atoms(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        self.tree
            .leaf_level()
            .nodes
            .iter()
            .map(move |n| (n.z, (n.log_weight - self.log_norm).exp()))
    }

    pub fn expectation(&self, f: impl Fn(Complex64) -> f64) -> f64 {
        self.atoms().map(|(z, w)| w * f(z)).sum()
    }
}

// ---------------------------------------------------------------------------
// Single application
// ---------------------------------------------------------------------------

/// One application of the truncated operator together with the bound on
/// what the truncation discarded.
#[derive(Debug, Clone, Copy)]
pub struct TransferApplication {
    pub value: Complex64,
    pub tail_bound: f64,
}

/// `L_φ g(w)` over the windowed preimages. `g_sup` is the caller's bound
/// on `|g|` over the whole preimage set; it scales the discarded-mass
/// bound into `tail_bound` and is enforced on every retained node.
pub fn apply_transfer(
    map: &AnalyticMap,
    phi: &TamePotential,
    g: impl Fn(Complex64) -> Complex64,
    g_sup: f64,
    w: Complex64,
    window: &BranchWindow,
) -> Result<TransferApplication> {
    window.validate()?;
    let tp = TailParams::new(map, phi)?;
    let mut zs = Vec::new();
    let mut phis = Vec::new();
    let exp = expand_children(
        map,
        phi,
        &tp,
        w,
        w.norm().ln(),
        window,
        &mut zs,
        &mut phis,
    )?;
    let log_min_weight = if window.min_weight > 0.0 {
        window.min_weight.ln()
    } else {
        f64::NEG_INFINITY
    };
    let mut value = Complex64::new(0.0, 0.0);
    let mut log_pruned = exp.log_missing;
    for (&z, &phi_z) in zs.iter().zip(phis.iter()) {
        if phi_z < log_min_weight {
            log_pruned = log_add(log_pruned, phi_z);
            continue;
        }
        let gz = g(z);
        if !gz.is_finite() || gz.norm() > g_sup {
            return Err(Error::UnboundedObservable {
                z,
                magnitude: gz.norm(),
            });
        }
        value += gz * phi_z.exp();
    }
    Ok(TransferApplication {
        value,
        tail_bound: g_sup * log_pruned.exp(),
    })
}

// ---------------------------------------------------------------------------
// Borel sums
// ---------------------------------------------------------------------------

/// Truncated `Σ(u,a) = Σ_{f(z)=a} |z|^{-u}` with its integral tail
/// estimate.
#[derive(Debug, Clone, Copy)]
pub struct BorelSum {
    pub value: f64,
    pub tail_bound: f64,
    /// Number of retained preimages.
    pub count: usize,
    /// Modulus beyond which the tail estimate takes over.
    pub cutoff: f64,
}

/// Evaluate the Borel sum of exponent `u` at `a`. For transcendental maps
/// the sum converges only for `u` above the order ρ; the tail records
/// `∫_R^∞ r^{-u}·(branch density) dr` plus one first-missing term.
pub fn borel_sum(
    map: &AnalyticMap,
    u: f64,
    a: Complex64,
    window: &BranchWindow,
) -> Result<BorelSum> {
    window.validate()?;
    let growth = map.growth();
    if map.finite_degree().is_none() && u <= growth.order {
        return Err(Error::DivergentSum {
            u,
            rho: growth.order,
        });
    }

    if let Some(d) = map.finite_degree() {
        let all = map.inverse_branches(a, &BranchWindow::new(d, f64::MAX))?;
        let mut value = 0.0;
        let mut tail = 0.0;
        let mut count = 0;
        for (i, z) in all.iter().enumerate() {
            let term = z.norm().powf(-u);
            if i < window.max_count && z.norm() <= window.max_modulus {
                value += term;
                count += 1;
            } else {
                tail += term;
            }
        }
        return Ok(BorelSum {
            value,
            tail_bound: tail,
            count,
            cutoff: f64::INFINITY,
        });
    }

    // Compensated summation: the tail coverage margin at large windows is
    // tighter than naive float accumulation error over 10^5-term sums.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let (count, last) =
        map.for_each_preimage_modulus(a, window.max_count, window.max_modulus, |m| {
            let term = m.powf(-u) - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
        })?;
    let cutoff = if count == window.max_count {
        last
    } else {
        window.max_modulus
    };
    let lr = cutoff.ln();
    let density = map.branch_density();
    let tail_bound = (-u * lr).exp() + density / (u - 1.0) * ((1.0 - u) * lr).exp();
    Ok(BorelSum {
        value: sum,
        tail_bound,
        count,
        cutoff,
    })
}

/// Exponent `τ̂γ` of the tail model `C/R^{τ̂γ}` governing both truncation
/// bookkeeping and the predicted tightness decay of conformal measures.
pub fn tail_model_exponent(map: &AnalyticMap, phi: &TamePotential) -> Result<f64> {
    Ok(TailParams::new(map, phi)?.gamma_hat())
}

// ---------------------------------------------------------------------------
// Iterate decay
// ---------------------------------------------------------------------------

/// Decay diagnostics of the normalized iterates `L̂^n g` toward their
/// limit.
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// `r_n = max over the grid of |L̂^n g(w) - L̂^{n_max} g(w)|`, for
    /// `n = 1..n_max`.
    pub residuals: Vec<f64>,
    /// Fitted per-step contraction factor from the last half of the
    /// residual range; 0 when the residuals sit below the noise floor.
    pub xi: f64,
    /// True when the residuals reached float noise before the fit window,
    /// indicating a spectral gap stronger than measurable.
    pub below_noise: bool,
    /// `xi < 1` or below noise.
    pub converged: bool,
    pub note: String,
}

struct IterateVisitor<'a, G: Fn(Complex64) -> f64> {
    g: &'a G,
    sums: Vec<WeightedSum>,
}

impl<G: Fn(Complex64) -> f64> TreeVisitor for IterateVisitor<'_, G> {
    fn enter(&mut self, level: usize, z: Complex64, log_weight: f64, _phi_z: f64) {
        self.sums[level].add(log_weight, Complex64::new((self.g)(z), 0.0));
    }
}

/// Measure how fast `L̂^n g = e^{-nP} L_φ^n g` settles across a grid of
/// base points, fitting the contraction factor ξ of the residual decay.
/// The limit is taken self-consistently as the deepest computed iterate.
pub fn operator_decay(
    map: &AnalyticMap,
    phi: &TamePotential,
    pressure: f64,
    g: impl Fn(Complex64) -> f64,
    n_max: usize,
    grid: &[Complex64],
    window: &BranchWindow,
) -> Result<DecayReport> {
    if n_max < 3 {
        return Err(Error::InvalidArgument(
            "iterate decay needs n_max ≥ 3".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument(
            "iterate decay needs at least one base point".into(),
        ));
    }
    let mut residuals = vec![0.0f64; n_max];
    let mut scale = 0.0f64;
    for &w in grid {
        let mut visitor = IterateVisitor {
            g: &g,
            sums: vec![WeightedSum::new(); n_max + 1],
        };
        walk_tree(map, phi, w, n_max, window, &mut visitor)?;
        let iterate = |s: &WeightedSum, n: usize| -> f64 {
            (s.log_weight() - n as f64 * pressure).exp() * s.mean().re
        };
        let limit = iterate(&visitor.sums[n_max], n_max);
        scale = scale.max(limit.abs());
        for n in 1..n_max {
            let v = iterate(&visitor.sums[n], n);
            residuals[n - 1] = residuals[n - 1].max((v - limit).abs());
        }
    }
    residuals.truncate(n_max - 1);

    let noise = 1e-13 * (1.0 + scale);
    let fit_from = (n_max - 1) / 2;
    let fit: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .skip(fit_from)
        .filter(|(_, &r)| r > noise)
        .map(|(i, &r)| ((i + 1) as f64, r.ln()))
        .collect();
    if fit.len() < 2 {
        return Ok(DecayReport {
            residuals,
            xi: 0.0,
            below_noise: true,
            converged: true,
            note: format!(
                "residuals below noise floor {noise:.2e}; spectral gap at \
                 least as strong as the floor implies"
            ),
        });
    }
    let (slope, _) = least_squares_line(&fit);
    let xi = slope.exp();
    Ok(DecayReport {
        residuals,
        xi,
        below_noise: false,
        converged: xi < 1.0,
        note: format!("fitted ξ = {xi:.4} over {} residuals", fit.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AnalyticMap;
    use crate::potentials::TamePotential;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square() -> AnalyticMap {
        AnalyticMap::power_map(2).unwrap()
    }

    fn unit_exp() -> AnalyticMap {
        crate::maps::build_map_unchecked(
            "exp",
            &std::collections::BTreeMap::from([("lambda".to_string(), 1.0)]),
        )
        .unwrap()
    }

    struct LevelRecorder {
        masses: Vec<LogSum>,
        tails: Vec<LogSum>,
    }

    impl LevelRecorder {
        fn new(depth: usize) -> Self {
            LevelRecorder {
                masses: vec![LogSum::new(); depth + 1],
                tails: vec![LogSum::new(); depth + 1],
            }
        }
    }

    impl TreeVisitor for LevelRecorder {
        fn enter(&mut self, level: usize, _z: Complex64, log_weight: f64, _phi_z: f64) {
            self.masses[level].add(log_weight);
        }
        fn truncated(&mut self, level: usize, log_missing: f64) {
            self.tails[level].add(log_missing);
        }
    }

    #[test]
    fn binary_tree_of_the_squaring_map() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let window = BranchWindow::new(4, 1e6);
        let tree = expand_tree(&map, &phi, c(1.0, 0.0), 3, &window).unwrap();
        assert_eq!(tree.depth(), 3);
        assert_eq!(tree.level(1).nodes.len(), 2);
        assert_eq!(tree.level(2).nodes.len(), 4);
        assert_eq!(tree.level(3).nodes.len(), 8);
        for node in &tree.leaf_level().nodes {
            assert_relative_eq!(node.log_weight, -3.0 * LN_2, max_relative = 1e-12);
            // Leaves are eighth roots of unity.
            assert_relative_eq!(node.z.norm(), 1.0, max_relative = 1e-12);
        }
        // Complete expansion: every level carries mass 1 and no tail.
        for level in tree.levels().iter().skip(1) {
            assert_relative_eq!(level.log_mass, 0.0, epsilon = 1e-12);
            assert_eq!(level.log_tail, f64::NEG_INFINITY);
        }
        assert_eq!(tree.tail_bound(), 0.0);
    }

    #[test]
    fn root_only_tree_has_unit_weight() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let tree =
            expand_tree(&map, &phi, c(0.3, 0.4), 0, &BranchWindow::new(4, 1e6)).unwrap();
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.leaf_level().nodes.len(), 1);
        assert_eq!(tree.leaf_level().nodes[0].log_weight, 0.0);
    }

    #[test]
    fn exp_level_one_weights_match_the_branch_formula() {
        let map = unit_exp();
        let phi = TamePotential::geometric(&map, 2.0, Some(0.95)).unwrap();
        let window = BranchWindow::new(41, 1e9);
        let w = c(std::f64::consts::E, 0.0);
        let tree = expand_tree(&map, &phi, w, 1, &window).unwrap();
        let level = tree.level(1);
        assert_eq!(level.nodes.len(), 41);
        // Preimages are 1 + 2πik; weight |e|^{-2(1-0.95)}·|z_k|^{-1.9}.
        for node in &level.nodes {
            assert_relative_eq!(node.z.re, 1.0, max_relative = 1e-10);
            let k = node.z.im / TAU;
            assert_relative_eq!(k, k.round(), epsilon = 1e-9);
            assert!(k.round().abs() <= 20.0);
            let expected = -2.0 * 0.05 - 1.9 * node.z.norm().ln();
            assert_relative_eq!(node.log_weight, expected, max_relative = 1e-12);
        }
        assert!(level.log_tail.is_finite());
        assert!(level.tail_constant > 0.0);
    }

    #[test]
    fn walk_and_stored_tree_agree_level_by_level() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let window = BranchWindow::new(6, 1e4);
        let root = map.julia_seed();
        let depth = 3;
        let tree = expand_tree(&map, &phi, root, depth, &window).unwrap();
        let mut rec = LevelRecorder::new(depth);
        let stats = walk_tree(&map, &phi, root, depth, &window, &mut rec).unwrap();
        for k in 1..=depth {
            assert_eq!(stats.level_counts[k] as usize, tree.level(k).nodes.len());
            assert_relative_eq!(
                rec.masses[k].log_total(),
                tree.level(k).log_mass,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                rec.tails[k].log_total(),
                tree.level(k).log_tail,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn tree_nodes_round_trip_to_their_parents() {
        for map in [
            AnalyticMap::exp_map(0.3).unwrap(),
            AnalyticMap::tangent_map(0.5).unwrap(),
            AnalyticMap::sine_map(0.8, 0.0).unwrap(),
        ] {
            let phi = TamePotential::geometric(&map, 1.4, None).unwrap();
            let window = BranchWindow::new(5, 1e4);
            let tree = expand_tree(&map, &phi, map.julia_seed(), 3, &window).unwrap();
            for k in 1..=3 {
                let (parents, children) =
                    (&tree.level(k - 1).nodes, &tree.level(k).nodes);
                for child in children {
                    let target = parents[child.parent as usize].z;
                    let back = map.eval(child.z);
                    assert!(
                        (back - target).norm() <= 1e-10 * (1.0 + target.norm()),
                        "round trip failed at level {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn apply_transfer_squaring_examples() {
        let map = square();
        let window = BranchWindow::new(4, 1e6);
        let w = c(0.6, 0.8);
        let phi2 = TamePotential::geometric(&map, 2.0, Some(0.0)).unwrap();
        let out = apply_transfer(&map, &phi2, |_| c(1.0, 0.0), 1.0, w, &window).unwrap();
        assert_relative_eq!(out.value.re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(out.value.im, 0.0, epsilon = 1e-15);
        assert_eq!(out.tail_bound, 0.0);

        let phi1 = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let out = apply_transfer(&map, &phi1, |z| z, 2.0, w, &window).unwrap();
        assert!(out.value.norm() < 1e-14);
    }

    #[test]
    fn apply_transfer_stabilizes_within_its_tail_bound() {
        let map = unit_exp();
        let phi = TamePotential::geometric(&map, 2.0, Some(0.95)).unwrap();
        let w = c(std::f64::consts::E, 0.0);
        let g = |_: Complex64| c(1.0, 0.0);
        let coarse = apply_transfer(
            &map,
            &phi,
            g,
            1.0,
            w,
            &BranchWindow::new(1_000, 1e12),
        )
        .unwrap();
        let fine = apply_transfer(
            &map,
            &phi,
            g,
            1.0,
            w,
            &BranchWindow::new(2_000, 1e12),
        )
        .unwrap();
        let diff = (fine.value - coarse.value).norm();
        assert!(
            diff <= coarse.tail_bound,
            "doubling moved the value by {diff:.3e}, beyond the bound {:.3e}",
            coarse.tail_bound
        );
        assert!(fine.tail_bound < coarse.tail_bound);
        assert!(diff < 1e-3);
    }

    #[test]
    fn unbounded_observables_are_rejected() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let err = apply_transfer(
            &map,
            &phi,
            |z| z * 100.0,
            1.0,
            c(4.0, 0.0),
            &BranchWindow::new(4, 1e6),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnboundedObservable { .. }));
    }

    #[test]
    fn composition_matches_the_depth_two_tree() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let window = BranchWindow::new(6, 1e4);
        let w = map.julia_seed();
        let inner = |z: Complex64| {
            apply_transfer(&map, &phi, |_| c(1.0, 0.0), 1.0, z, &window)
                .unwrap()
                .value
        };
        let nested = apply_transfer(&map, &phi, inner, 20.0, w, &window)
            .unwrap()
            .value;
        let tree = expand_tree(&map, &phi, w, 2, &window).unwrap();
        let direct = tree.level(2).log_mass.exp();
        assert_relative_eq!(nested.re, direct, max_relative = 1e-12);
        assert!(nested.im.abs() < 1e-14 * direct);
    }

    #[test]
    fn pull_out_identity() {
        let psi = |z: Complex64| Complex64::new(1.0 / (1.0 + z.norm_sqr()), 0.3);
        let g = |z: Complex64| Complex64::new(z.re / (1.0 + z.norm()), -0.1);
        for map in [
            AnalyticMap::exp_map(0.3).unwrap(),
            AnalyticMap::tangent_map(0.5).unwrap(),
            square(),
        ] {
            let phi = if map.finite_degree().is_some() {
                TamePotential::geometric(&map, 1.3, Some(0.0)).unwrap()
            } else {
                TamePotential::geometric(&map, 1.3, None).unwrap()
            };
            let window = BranchWindow::new(8, 1e5);
            let w = map.julia_seed();
            let lhs = apply_transfer(
                &map,
                &phi,
                |z| g(z) * psi(map.eval(z)),
                5.0,
                w,
                &window,
            )
            .unwrap()
            .value;
            let rhs = psi(w)
                * apply_transfer(&map, &phi, g, 5.0, w, &window)
                    .unwrap()
                    .value;
            assert!(
                (lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()),
                "pull-out violated for {}",
                map.family_id()
            );
        }
    }

    #[test]
    fn enlarging_the_window_is_monotone() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let w = map.julia_seed();
        let mut last_value = 0.0;
        let mut last_tail = f64::INFINITY;
        for count in [4, 8, 16, 32, 64] {
            let out = apply_transfer(
                &map,
                &phi,
                |_| c(1.0, 0.0),
                1.0,
                w,
                &BranchWindow::new(count, 1e9),
            )
            .unwrap();
            assert!(out.value.re >= last_value);
            assert!(out.tail_bound <= last_tail);
            last_value = out.value.re;
            last_tail = out.tail_bound;
        }
    }

    #[test]
    fn transfer_of_one_vanishes_at_infinity_with_the_right_slope() {
        // exp, t=2, τ=0.55: predicted log-log slope -t(α₂-τ) = -0.9.
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 2.0, Some(0.55)).unwrap();
        let window = BranchWindow::new(4_000, 1e12);
        let mut pts = Vec::new();
        for k in 2..=6 {
            let w = c((2.0 * k as f64).exp(), 0.0);
            let out = apply_transfer(&map, &phi, |_| c(1.0, 0.0), 1.0, w, &window).unwrap();
            pts.push((w.norm().ln(), out.value.re.ln()));
        }
        let (slope, _) = least_squares_line(&pts);
        let predicted = -2.0 * (1.0 - 0.55);
        assert!(
            (slope - predicted).abs() <= 0.2 * predicted.abs(),
            "slope {slope:.4} vs predicted {predicted:.4}"
        );

        // Squaring map, t=2: L1(w) = 0.5/|w|, slope exactly -1.
        let map = square();
        let phi = TamePotential::geometric(&map, 2.0, Some(0.0)).unwrap();
        let mut pts = Vec::new();
        for k in 1..=5 {
            let w = c((k as f64).exp(), 0.0);
            let out = apply_transfer(
                &map,
                &phi,
                |_| c(1.0, 0.0),
                1.0,
                w,
                &BranchWindow::new(2, 1e9),
            )
            .unwrap();
            pts.push((w.norm().ln(), out.value.re.ln()));
        }
        let (slope, _) = least_squares_line(&pts);
        assert_relative_eq!(slope, -1.0, max_relative = 1e-9);
    }

    #[test]
    fn borel_sum_closed_forms() {
        let map = square();
        let out = borel_sum(&map, 3.0, c(4.0, 0.0), &BranchWindow::new(4, 1e6)).unwrap();
        assert_relative_eq!(out.value, 0.25, max_relative = 1e-12);
        assert_eq!(out.tail_bound, 0.0);
        assert_eq!(out.count, 2);

        let map = unit_exp();
        let a = c(std::f64::consts::E, 0.0);
        let out = borel_sum(&map, 2.0, a, &BranchWindow::new(20_001, 1e12)).unwrap();
        let oracle = 0.5 / (0.5f64).tanh();
        let err = (out.value - oracle).abs();
        assert!(err < 1e-4);
        assert!(
            err <= out.tail_bound,
            "error {err:.3e} not covered by tail {:.3e}",
            out.tail_bound
        );
        assert!(out.tail_bound < 1e-4);

        assert!(matches!(
            borel_sum(&map, 0.9, a, &BranchWindow::new(100, 1e9)),
            Err(Error::DivergentSum { .. })
        ));
    }

    #[test]
    fn min_weight_prunes_into_the_tail() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let w = map.julia_seed();
        let full = apply_transfer(
            &map,
            &phi,
            |_| c(1.0, 0.0),
            1.0,
            w,
            &BranchWindow::new(12, 1e9),
        )
        .unwrap();
        let pruned_window = BranchWindow::new(12, 1e9).with_min_weight(5e-2);
        let pruned = apply_transfer(&map, &phi, |_| c(1.0, 0.0), 1.0, w, &pruned_window)
            .unwrap();
        assert!(pruned.value.re < full.value.re);
        // The pruned mass moved into the tail bound exactly.
        assert!(
            pruned.tail_bound - full.tail_bound
                >= full.value.re - pruned.value.re - 1e-12
        );
    }

    #[test]
    fn empty_levels_are_reported() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let window = BranchWindow::new(6, 1e-6);
        let err = expand_tree(&map, &phi, map.julia_seed(), 2, &window).unwrap_err();
        assert!(matches!(err, Error::EmptyLevel { .. }));
    }

    #[test]
    fn loosely_tame_weights_are_rejected() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let psi = TamePotential::log_deriv_integrand(0.0);
        let err = expand_tree(
            &map,
            &psi,
            map.julia_seed(),
            1,
            &BranchWindow::new(4, 1e4),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LooselyTameWeight { .. }));
    }

    #[test]
    fn decay_of_the_squaring_map_sits_below_noise() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let grid: Vec<Complex64> = (0..4)
            .map(|k| Complex64::from_polar(1.0, 0.3 + k as f64))
            .collect();
        let window = BranchWindow::new(2, 1e6);
        let report =
            operator_decay(&map, &phi, 0.0, |_| 1.0, 8, &grid, &window).unwrap();
        assert!(report.below_noise);
        assert!(report.converged);

        let report =
            operator_decay(&map, &phi, 0.0, |z| z.re, 8, &grid, &window).unwrap();
        assert!(report.below_noise, "Re z dies after one application");
    }

    #[test]
    fn decay_of_the_exponential_contracts() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let window = BranchWindow::new(5, 1e4);
        let tree = expand_tree(&map, &phi, map.julia_seed(), 2, &window).unwrap();
        let grid: Vec<Complex64> =
            tree.level(2).nodes.iter().take(3).map(|n| n.z).collect();
        // Rough pressure from level mass growth, good enough for the
        // normalization here.
        let tree = expand_tree(&map, &phi, map.julia_seed(), 6, &window).unwrap();
        let p = tree.level(6).log_mass - tree.level(5).log_mass;
        let report = operator_decay(
            &map,
            &phi,
            p,
            |z| z.re.clamp(-3.0, 3.0),
            7,
            &grid,
            &window,
        )
        .unwrap();
        assert!(report.converged);
        if !report.below_noise {
            assert!(report.xi < 1.0, "ξ = {}", report.xi);
        }
    }

    #[test]
    fn csv_export_is_stable_and_complete() {
        let map = square();
        let phi = TamePotential::geometric(&map, 1.0, Some(0.0)).unwrap();
        let tree =
            expand_tree(&map, &phi, c(1.0, 0.0), 2, &BranchWindow::new(4, 1e6)).unwrap();
        let mut buf = Vec::new();
        tree.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,index,parent,re,im,log_weight");
        assert_eq!(lines.len(), 1 + 1 + 2 + 4);
        let mut again = Vec::new();
        tree.write_csv(&mut again).unwrap();
        assert_eq!(text.as_bytes(), again.as_slice());
    }

    #[test]
    fn gibbs_tree_measure_normalizes() {
        let map = AnalyticMap::exp_map(0.3).unwrap();
        let phi = TamePotential::geometric(&map, 1.25, Some(0.95)).unwrap();
        let tree = expand_tree(
            &map,
            &phi,
            map.julia_seed(),
            3,
            &BranchWindow::new(6, 1e4),
        )
        .unwrap();
        let measure = GibbsTreeMeasure::new(tree);
        let total: f64 = measure.atoms().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert!(measure.atoms().all(|(_, w)| w > 0.0));
        let mean_mod = measure.expectation(|z| z.norm());
        assert!(mean_mod.is_finite() && mean_mod > 0.0);
    }

    #[test]
    fn log_accumulators_match_direct_sums() {
        let xs = [-3.0, -1.5, 0.2, -700.0, 4.0, 3.9];
        let mut acc = LogSum::new();
        for &x in &xs {
            acc.add(x);
        }
        let direct: f64 = xs.iter().map(|x| x.exp()).sum();
        assert_relative_eq!(acc.log_total(), direct.ln(), max_relative = 1e-12);

        let mut ws = WeightedSum::new();
        let gs = [0.3, -0.7, 1.1, 0.0, 2.0, -0.4];
        for (&x, &g) in xs.iter().zip(gs.iter()) {
            ws.add(x, c(g, 0.1 * g));
        }
        let wdirect: f64 = xs.iter().map(|x| x.exp()).sum();
        let ndirect: Complex64 = xs
            .iter()
            .zip(gs.iter())
            .map(|(&x, &g)| c(g, 0.1 * g) * x.exp())
            .sum();
        assert_relative_eq!(ws.log_weight(), wdirect.ln(), max_relative = 1e-12);
        assert_relative_eq!(ws.mean().re, (ndirect / wdirect).re, max_relative = 1e-10);
        assert!(!ws.is_empty());
        assert!(!acc.is_empty());
    }
}
