//! One handler per subcommand. Each returns the stdout summary, the
//! artifact body, and whether every convergence flag passed; the caller
//! owns emission and exit codes.

use juliatherm_core::maps::{
    catalog_entries, sample_julia_points, verify_growth, verify_hyperbolic, HyperbolicVerdict,
};
use juliatherm_core::multifractal::{
    bowen_dimension, legendre_check, parameter_sweep, spectrum_from_curve, temperature_curve,
};
use juliatherm_core::potentials::TamePotential;
use juliatherm_core::thermo::{asymptotic_variance, gibbs_density, pressure};
use juliatherm_core::Error;

use crate::config::{HSpec, Prepared};
use crate::output::{num, Body};
use crate::CliError;

pub struct Outcome {
    pub stdout: Vec<String>,
    pub body: Body,
    pub converged: bool,
}

pub fn catalog() -> Outcome {
    let mut body = Body::new(vec![
        "family",
        "description",
        "parameters",
        "hyperbolic_range",
        "kappa",
        "alpha1",
        "alpha2_lower",
        "alpha2_upper",
        "order",
        "divergence_type",
        "entire",
        "has_evaluator",
    ]);
    let mut stdout = Vec::new();
    for entry in catalog_entries() {
        let g = &entry.representative_growth;
        body.rows.push(vec![
            entry.family_id.to_string(),
            entry.description.to_string(),
            entry.parameters.to_string(),
            entry.hyperbolic_range.to_string(),
            num(g.kappa),
            num(g.alpha1),
            num(g.alpha2_lower),
            num(g.alpha2_upper),
            num(g.order),
            g.divergence_type.to_string(),
            g.entire.to_string(),
            entry.has_evaluator.to_string(),
        ]);
        stdout.push(format!(
            "{:<22} {}  [{}; {}]  ρ={} κ={}{}",
            entry.family_id,
            entry.description,
            entry.parameters,
            entry.hyperbolic_range,
            num(g.order),
            num(g.kappa),
            if entry.has_evaluator {
                ""
            } else {
                "  (metadata only)"
            },
        ));
    }
    Outcome {
        stdout,
        body,
        converged: true,
    }
}

pub fn diagnose(cfg: &Prepared) -> Result<Outcome, CliError> {
    let samples = sample_julia_points(
        &cfg.map,
        cfg.diagnose_samples,
        12,
        &cfg.window,
        cfg.seed,
    )
    .map_err(CliError::Core)?;
    let growth = verify_growth(&cfg.map, &samples).map_err(CliError::Core)?;
    let hyp = verify_hyperbolic(&cfg.map, cfg.diagnose_budget).map_err(CliError::Core)?;

    let envelope_ok = growth.worst_lower_ratio >= 1.0 && growth.worst_upper_ratio <= 1.0;
    let verdict = match hyp.verdict {
        HyperbolicVerdict::Pass => "pass",
        HyperbolicVerdict::Inconclusive => "inconclusive",
        HyperbolicVerdict::NotHyperbolic => "not_hyperbolic",
    };

    let mut body = Body::new(vec!["section", "key", "value"]);
    let mut push = |section: &str, key: &str, value: String| {
        body.rows
            .push(vec![section.to_string(), key.to_string(), value]);
    };
    push("growth", "worst_lower_ratio", num(growth.worst_lower_ratio));
    push("growth", "worst_upper_ratio", num(growth.worst_upper_ratio));
    push("growth", "samples_used", growth.samples_used.to_string());
    push("growth", "envelope_ok", envelope_ok.to_string());
    push("hyperbolic", "verdict", verdict.to_string());
    push(
        "hyperbolic",
        "reason",
        hyp.reason.clone().unwrap_or_default(),
    );
    push("hyperbolic", "delta_lower", num(hyp.delta_lower));
    push("hyperbolic", "expansion_gamma", num(hyp.expansion_gamma));
    push("hyperbolic", "expansion_c", num(hyp.expansion_c));
    push(
        "hyperbolic",
        "attracting_cycles",
        hyp.attracting_cycles.len().to_string(),
    );

    let converged = envelope_ok && hyp.verdict == HyperbolicVerdict::Pass;
    let stdout = vec![
        format!(
            "growth envelope over {} samples: lower ratio {} (need ≥ 1), upper ratio {} (need ≤ 1)",
            growth.samples_used,
            num(growth.worst_lower_ratio),
            num(growth.worst_upper_ratio),
        ),
        format!(
            "hyperbolicity: {verdict} (δ ≥ {}, expansion ≥ {}·{}^n, {} attracting cycle(s)){}",
            num(hyp.delta_lower),
            num(hyp.expansion_c),
            num(hyp.expansion_gamma),
            hyp.attracting_cycles.len(),
            hyp.reason
                .as_deref()
                .map(|r| format!(": {r}"))
                .unwrap_or_default(),
        ),
    ];
    Ok(Outcome {
        stdout,
        body,
        converged,
    })
}

pub fn pressure_cmd(cfg: &Prepared) -> Result<Outcome, CliError> {
    let phi = cfg.potential()?;
    let est = pressure(
        &cfg.map,
        &phi,
        &cfg.bases,
        &cfg.window,
        cfg.depth,
        cfg.spread_tol,
    )
    .map_err(CliError::Core)?;

    let mut body = Body::new(vec![
        "family",
        "t",
        "tau",
        "depth",
        "bases",
        "pressure",
        "spread",
        "tail_fraction",
        "extrapolated",
        "converged",
    ]);
    body.rows.push(vec![
        cfg.map.family_id().to_string(),
        num(phi.t()),
        num(phi.tau()),
        cfg.depth.to_string(),
        cfg.bases.len().to_string(),
        num(est.value),
        num(est.spread),
        num(est.tail_fraction),
        est.extrapolated.to_string(),
        est.converged.to_string(),
    ]);

    let stdout = vec![
        format!("P = {:.6}", est.value),
        format!(
            "spread {} over {} bases (tolerance {}), tail fraction {}{}",
            num(est.spread),
            cfg.bases.len(),
            num(cfg.spread_tol),
            num(est.tail_fraction),
            if est.converged { "" } else { "  [not converged]" },
        ),
    ];
    Ok(Outcome {
        stdout,
        body,
        converged: est.converged,
    })
}

pub fn gibbs(cfg: &Prepared) -> Result<Outcome, CliError> {
    let phi = cfg.potential()?;
    let est = pressure(
        &cfg.map,
        &phi,
        &cfg.bases,
        &cfg.window,
        cfg.depth,
        cfg.spread_tol,
    )
    .map_err(CliError::Core)?;
    let density = gibbs_density(
        &cfg.map,
        &phi,
        &est,
        &cfg.bases,
        cfg.depth,
        &cfg.window,
        cfg.residual_tol,
    )
    .map_err(CliError::Core)?;

    let mut body = Body::new(vec!["re", "im", "density"]);
    for (w, value) in density.points.iter().zip(&density.values) {
        body.rows.push(vec![num(w.re), num(w.im), num(*value)]);
    }
    body.note("pressure", num(est.value));
    body.note("pressure_spread", num(est.spread));
    body.note("cesaro_depth", density.depth.to_string());
    body.note("residual", num(density.residual));

    let converged = est.converged && density.converged;
    let stdout = vec![format!(
        "Cesàro density at {} grid points, depth {}: residual {} (tolerance {}){}",
        density.points.len(),
        density.depth,
        num(density.residual),
        num(cfg.residual_tol),
        if converged { "" } else { "  [not converged]" },
    )];
    Ok(Outcome {
        stdout,
        body,
        converged,
    })
}

pub fn bowen(cfg: &Prepared) -> Result<Outcome, CliError> {
    let opts = cfg.solver_options();
    let root = bowen_dimension(&cfg.map, &opts).map_err(CliError::Core)?;

    let mut body = Body::new(vec![
        "family",
        "h",
        "residual",
        "tau_position",
        "evaluations",
    ]);
    body.rows.push(vec![
        cfg.map.family_id().to_string(),
        num(root.value),
        num(root.residual),
        num(root.tau_position),
        root.evaluations.to_string(),
    ]);
    let stdout = vec![
        format!("h = {:.6}", root.value),
        format!(
            "|P(h)| = {} after {} pressure evaluations (τ position {})",
            num(root.residual),
            root.evaluations,
            num(root.tau_position),
        ),
    ];
    Ok(Outcome {
        stdout,
        body,
        converged: true,
    })
}

pub fn spectrum(cfg: &Prepared) -> Result<Outcome, CliError> {
    let phi = cfg.potential()?;
    let opts = cfg.solver_options();
    let curve = temperature_curve(&cfg.map, &phi, &cfg.q_grid, &opts).map_err(CliError::Core)?;
    let spec = spectrum_from_curve(&curve).map_err(CliError::Core)?;
    let check = legendre_check(&curve);

    let mut body = Body::new(vec!["q", "T", "T1_analytic", "T1_fd", "T2", "alpha", "F"]);
    for (i, &q) in spec.q.iter().enumerate() {
        // The spectrum may collapse to the single grid point nearest q = 0;
        // index back into the full curve by q.
        let j = curve
            .q
            .iter()
            .position(|&cq| cq == q)
            .expect("spectrum points come from the curve grid");
        body.rows.push(vec![
            num(q),
            num(curve.t[j]),
            num(curve.t1_analytic[j]),
            num(curve.t1_fd[j]),
            num(curve.t2[j]),
            num(spec.alpha[i]),
            num(spec.f[i]),
        ]);
    }
    body.note("degenerate", spec.degenerate.to_string());
    body.note("alpha_min", num(spec.alpha_range.0));
    body.note("alpha_max", num(spec.alpha_range.1));
    body.note("concavity_defect", num(spec.concavity_defect));
    body.note("legendre_value_defect", num(check.max_value_defect));
    body.note("legendre_aligned", check.aligned.to_string());
    body.note("normalization", num(curve.normalization));
    body.note("tau", num(curve.tau));
    if let Some(w) = &curve.warning {
        body.note("warning", w.clone());
    }

    let mut stdout = Vec::new();
    if spec.degenerate {
        stdout.push(format!(
            "degenerate spectrum: single point (α, F) = ({}, {})",
            num(spec.alpha[0]),
            num(spec.f[0]),
        ));
    } else {
        stdout.push(format!(
            "spectrum over {} grid points: α ∈ [{}, {}], concavity defect {}",
            spec.q.len(),
            num(spec.alpha_range.0),
            num(spec.alpha_range.1),
            num(spec.concavity_defect),
        ));
    }
    if let Some(w) = &curve.warning {
        stdout.push(format!("warning: {w}"));
    }

    Ok(Outcome {
        stdout,
        body,
        converged: curve.warning.is_none(),
    })
}

pub fn sweep(cfg: &Prepared) -> Result<Outcome, CliError> {
    let (values, task) = cfg.sweep_plan()?;
    let table = parameter_sweep(
        cfg.map.family_id(),
        &values,
        &task,
        &cfg.sweep_config(),
    )
    .map_err(CliError::Core)?;

    let mut columns = vec!["param"];
    columns.extend(table.columns.iter().copied());
    columns.push("skipped");
    let n_cols = table.columns.len();
    let mut body = Body::new(columns);
    let mut skipped = 0usize;
    for row in &table.rows {
        let mut cells = vec![num(row.param)];
        if row.skipped.is_some() {
            skipped += 1;
            cells.extend(std::iter::repeat(String::new()).take(n_cols));
        } else {
            cells.extend(row.values.iter().map(|v| num(*v)));
        }
        cells.push(row.skipped.clone().unwrap_or_default());
        body.rows.push(cells);
    }
    body.note("family", table.family.clone());
    body.note("param_name", table.param_name.to_string());
    body.note("smoothness_residual", num(table.smoothness_residual));

    let solved = table.rows.len() - skipped;
    let stdout = vec![format!(
        "swept {} over {} values of {}: {} solved, {} skipped, smoothness residual {}",
        table.family,
        table.rows.len(),
        table.param_name,
        solved,
        skipped,
        num(table.smoothness_residual),
    )];
    Ok(Outcome {
        stdout,
        body,
        converged: solved > 0,
    })
}

pub fn correlations(cfg: &Prepared) -> Result<Outcome, CliError> {
    let phi = cfg.potential()?;
    let section = cfg.correlations.as_ref();
    let k_max = section
        .and_then(|c| c.k_max)
        .unwrap_or_else(|| cfg.depth.saturating_sub(1).clamp(1, 6));
    if k_max + 1 > cfg.depth {
        return Err(CliError::Config(format!(
            "config error at `correlations.k_max`: lag cutoff {k_max} needs depth > {k_max}"
        )));
    }
    let psi_spec = section
        .and_then(|c| c.psi.clone())
        .unwrap_or(HSpec::ReClamped { bound: 20.0 });
    let zeta_spec = section.and_then(|c| c.zeta.clone());
    let psi = TamePotential::loosely_tame(0.0, phi.tau(), psi_spec.build()?);
    let zeta = match &zeta_spec {
        Some(spec) => TamePotential::loosely_tame(0.0, phi.tau(), spec.build()?),
        None => psi.clone(),
    };

    let var = asymptotic_variance(
        &cfg.map,
        &phi,
        &psi,
        &zeta,
        k_max,
        &cfg.bases,
        &cfg.window,
        cfg.depth,
    )
    .map_err(CliError::Core)?;

    let mut body = Body::new(vec!["lag", "correlation"]);
    for (k, c) in var.correlations.iter().enumerate() {
        body.rows.push(vec![k.to_string(), num(*c)]);
    }
    body.note("variance", num(var.value));
    body.note("xi", num(var.xi));
    body.note("remainder", num(var.remainder));
    body.note("below_noise", var.below_noise.to_string());

    let stdout = vec![format!(
        "σ² = {} from lags 0..={} (decay factor ξ = {}, tail remainder {}{})",
        num(var.value),
        k_max,
        num(var.xi),
        num(var.remainder),
        if var.below_noise {
            ", correlations below noise floor"
        } else {
            ""
        },
    )];
    Ok(Outcome {
        stdout,
        body,
        converged: true,
    })
}

/// Exit-code classification of core errors: schema-adjacent problems are
/// config errors, best-effort failures are non-convergence, the rest are
/// domain violations of the underlying formalism.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::UnknownFamily(_)
        | Error::MetadataOnlyFamily { .. }
        | Error::InvalidParameters { .. }
        | Error::InvalidArgument(_)
        | Error::TauOutOfRange { .. } => 2,
        Error::NotConverged { .. }
        | Error::BracketFailure { .. }
        | Error::UnreliableVariance { .. }
        | Error::NoPeriodicPoints { .. } => 3,
        _ => 4,
    }
}
