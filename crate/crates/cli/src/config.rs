//! Run configuration: TOML schema, flag overrides, validation, and the
//! provenance hash.
//!
//! A config is parsed to a raw TOML value first so `--set key.path=value`
//! can splice into any leaf, then the merged tree is schema-checked. The
//! provenance hash covers the merged tree, so a flag override and the
//! equivalent file edit produce the same hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::Deserialize;

use juliatherm_core::maps::{build_catalog_map, AnalyticMap, BranchWindow};
use juliatherm_core::multifractal::{RunMode, SolverOptions, SweepConfig, SweepTask};
use juliatherm_core::potentials::{HolderObservable, TamePotential};
use juliatherm_core::thermo::default_bases;

use crate::CliError;

// ---------------------------------------------------------------------------
// Raw schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub map: MapSection,
    pub potential: Option<PotentialSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    pub grid: Option<GridSection>,
    pub sweep: Option<SweepSection>,
    pub correlations: Option<CorrelationsSection>,
    pub diagnose: Option<DiagnoseSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub t: f64,
    pub tau: Option<f64>,
    pub h: Option<HSpec>,
}

/// Bounded weakly Hölder observable, described by kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    Zero,
    Constant { value: f64 },
    ReClamped { bound: f64 },
}

impl HSpec {
    pub fn build(&self) -> Result<HolderObservable, CliError> {
        match self {
            HSpec::Zero => Ok(HolderObservable::zero()),
            HSpec::Constant { value } => Ok(HolderObservable::constant(*value)),
            HSpec::ReClamped { bound } => {
                HolderObservable::re_z_clamped(*bound).map_err(CliError::Core)
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub depth: Option<usize>,
    pub window: Option<WindowSection>,
    /// Number of base points drawn deterministically from the seed.
    pub bases: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub mode: Option<ModeSpec>,
    pub seed: Option<u64>,
    /// Root-finding bracket override for `bowen`.
    pub bracket: Option<[f64; 2]>,
    /// Position inside the feasible τ interval, in (0, 1).
    pub tau_position: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub max_count: usize,
    pub max_modulus: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_spread_tol")]
    pub spread: f64,
    #[serde(default = "default_residual_tol")]
    pub residual: f64,
    #[serde(default = "default_root_tol")]
    pub root: f64,
}

fn default_spread_tol() -> f64 {
    5e-4
}
fn default_residual_tol() -> f64 {
    1e-6
}
fn default_root_tol() -> f64 {
    1e-11
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            spread: default_spread_tol(),
            residual: default_residual_tol(),
            root: default_root_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Deterministic,
    Fast,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<FormatSpec>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FormatSpec {
    Csv,
    Json,
}

/// q-grid for `spectrum` and the spectrum sweep task.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub q_min: f64,
    pub q_max: f64,
    pub points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit grid; overrides min/max/step when present.
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub step: Option<f64>,
    pub task: Option<SweepTaskSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTaskSpec {
    Bowen,
    Spectrum,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationsSection {
    pub k_max: Option<usize>,
    pub psi: Option<HSpec>,
    pub zeta: Option<HSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Iteration budget for the hyperbolicity certificate.
    pub budget: Option<usize>,
    /// Number of Julia samples for the growth check.
    pub samples: Option<usize>,
}

// ---------------------------------------------------------------------------
// Loading and overrides
// ---------------------------------------------------------------------------

/// Parse `key.path=value` and splice the value into the TOML tree,
/// creating intermediate tables as needed.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{spec}` is not of the form key.path=value"))
    })?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "override path `{path}` has an empty segment"
        )));
    }
    let leaf = parse_override_value(raw);
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override path `{path}`: `{key}` is not a table in the config"
            ))
        })?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        CliError::Config(format!("override path `{path}` does not end in a table"))
    })?;
    table.insert(keys[keys.len() - 1].to_string(), leaf);
    Ok(())
}

/// Interpret an override payload as TOML (numbers, bools, arrays, inline
/// tables, quoted strings); anything that fails to parse is a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("x = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut table) => table.remove("x").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// One leaf override sugar, used by dedicated flags like `--mode`.
pub fn sugar(root: &mut toml::Value, path: &str, value: toml::Value) {
    let spec_never_fails = apply_override_value(root, path, value);
    debug_assert!(spec_never_fails.is_ok());
}

fn apply_override_value(
    root: &mut toml::Value,
    path: &str,
    value: toml::Value,
) -> Result<(), CliError> {
    let rendered = match &value {
        toml::Value::String(s) => format!("{path}={s:?}"),
        other => format!("{path}={other}"),
    };
    apply_override(root, &rendered)
}

/// Load the file, apply overrides, and schema-check the merged tree.
pub fn load(
    path: &std::path::Path,
    overrides: &[String],
    sugars: &[(&str, toml::Value)],
) -> Result<(RawConfig, toml::Value), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config `{}`: {e}", path.display()))
    })?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    for (p, v) in sugars {
        sugar(&mut value, p, v.clone());
    }
    // Round-trip through text so schema violations report the offending
    // key with its context.
    let merged = toml::to_string(&value)
        .map_err(|e| CliError::Config(format!("config re-serialization failed: {e}")))?;
    let raw: RawConfig = toml::from_str(&merged)
        .map_err(|e| CliError::Config(format!("config schema error: {e}")))?;
    Ok((raw, value))
}

// ---------------------------------------------------------------------------
// Validated form
// ---------------------------------------------------------------------------

pub struct Prepared {
    pub map: AnalyticMap,
    pub potential: Option<PotentialSection>,
    pub depth: usize,
    pub window: BranchWindow,
    pub base_count: usize,
    pub bases: Vec<Complex64>,
    pub spread_tol: f64,
    pub residual_tol: f64,
    pub root_tol: f64,
    pub bracket: Option<(f64, f64)>,
    pub tau_position: f64,
    pub mode: RunMode,
    pub seed: u64,
    pub format: FormatSpec,
    pub out_path: Option<PathBuf>,
    pub q_grid: Vec<f64>,
    pub sweep: Option<(Vec<f64>, SweepTaskSpec)>,
    pub correlations: Option<CorrelationsSection>,
    pub diagnose_budget: usize,
    pub diagnose_samples: usize,
    /// FNV-1a-64 over the canonical JSON form of the merged config.
    pub config_hash: String,
}

impl Prepared {
    pub fn potential(&self) -> Result<TamePotential, CliError> {
        let section = self.potential.as_ref().ok_or_else(|| {
            CliError::Config("config error at `potential`: section required by this command".into())
        })?;
        let h = section.h.clone().unwrap_or(HSpec::Zero).build()?;
        TamePotential::tame(&self.map, section.t, section.tau, h).map_err(CliError::Core)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            window: self.window,
            depth: self.depth,
            bases: self.bases.clone(),
            root_tol: self.root_tol,
            bracket: self.bracket,
            tau_position: self.tau_position,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            window: self.window,
            depth: self.depth,
            base_count: self.base_count,
            seed: self.seed,
            root_tol: self.root_tol,
            tau_position: self.tau_position,
            mode: self.mode,
        }
    }

    pub fn sweep_plan(&self) -> Result<(Vec<f64>, SweepTask), CliError> {
        let (values, task) = self.sweep.as_ref().ok_or_else(|| {
            CliError::Config("config error at `sweep`: section required by this command".into())
        })?;
        let task = match task {
            SweepTaskSpec::Bowen => SweepTask::Bowen,
            SweepTaskSpec::Spectrum => SweepTask::SpectrumAt(self.q_grid.clone()),
        };
        Ok((values.clone(), task))
    }
}

pub fn prepare(raw: RawConfig, merged: &toml::Value) -> Result<Prepared, CliError> {
    let map = build_catalog_map(&raw.map.family, &raw.map.params).map_err(CliError::Core)?;

    let mode = match raw.solver.mode {
        Some(ModeSpec::Fast) => RunMode::Fast,
        Some(ModeSpec::Deterministic) | None => RunMode::Deterministic,
    };
    let seed = match (raw.solver.seed, mode) {
        (Some(s), _) => s,
        (None, RunMode::Deterministic) => {
            return Err(CliError::Config(
                "config error at `solver.seed`: required in deterministic mode".into(),
            ));
        }
        (None, RunMode::Fast) => 0,
    };

    let standard = SolverOptions::standard(&map, seed).map_err(CliError::Core)?;
    let window = match raw.solver.window {
        Some(w) => BranchWindow::new(w.max_count, w.max_modulus),
        None => standard.window,
    };
    window.validate().map_err(CliError::Core)?;
    let depth = raw.solver.depth.unwrap_or(standard.depth);
    if depth == 0 {
        return Err(CliError::Config(
            "config error at `solver.depth`: must be ≥ 1".into(),
        ));
    }
    let base_count = raw.solver.bases.unwrap_or(3);
    let bases = default_bases(&map, base_count, seed).map_err(CliError::Core)?;
    let bracket = raw.solver.bracket.map(|[lo, hi]| (lo, hi));
    let tau_position = raw.solver.tau_position.unwrap_or(standard.tau_position);
    if !(0.0 < tau_position && tau_position < 1.0) {
        return Err(CliError::Config(
            "config error at `solver.tau_position`: must lie strictly between 0 and 1".into(),
        ));
    }

    let q_grid = match &raw.grid {
        None => (0..9).map(|i| -0.5 + 0.25 * i as f64).collect(),
        Some(g) => {
            if g.points < 2 || !(g.q_min < g.q_max) {
                return Err(CliError::Config(
                    "config error at `grid`: need points ≥ 2 and q_min < q_max".into(),
                ));
            }
            let h = (g.q_max - g.q_min) / (g.points - 1) as f64;
            (0..g.points).map(|i| g.q_min + h * i as f64).collect()
        }
    };

    let sweep = match &raw.sweep {
        None => None,
        Some(s) => {
            let explicit = s.values.as_ref().filter(|v| !v.is_empty());
            let values = match (explicit, s.min, s.max, s.step) {
                (Some(v), _, _, _) => v.clone(),
                (None, Some(lo), Some(hi), Some(step)) if step > 0.0 && lo <= hi => {
                    let n = ((hi - lo) / step).round() as usize + 1;
                    (0..n).map(|i| lo + step * i as f64).collect()
                }
                _ => {
                    return Err(CliError::Config(
                        "config error at `sweep`: give `values` or `min`/`max`/`step`".into(),
                    ));
                }
            };
            Some((values, s.task.unwrap_or(SweepTaskSpec::Bowen)))
        }
    };

    let diagnose_budget = raw.diagnose.as_ref().and_then(|d| d.budget).unwrap_or(400);
    let diagnose_samples = raw.diagnose.as_ref().and_then(|d| d.samples).unwrap_or(32);

    Ok(Prepared {
        map,
        potential: raw.potential,
        depth,
        window,
        base_count,
        bases,
        spread_tol: raw.solver.tolerances.spread,
        residual_tol: raw.solver.tolerances.residual,
        root_tol: raw.solver.tolerances.root,
        bracket,
        tau_position,
        mode,
        seed,
        format: raw.output.format.unwrap_or(FormatSpec::Csv),
        out_path: raw.output.path.clone(),
        q_grid,
        sweep,
        correlations: raw.correlations,
        diagnose_budget,
        diagnose_samples,
        config_hash: config_hash(merged),
    })
}

// ---------------------------------------------------------------------------
// Provenance hash
// ---------------------------------------------------------------------------

/// FNV-1a-64 of the canonical JSON rendering of the config tree (object
/// keys sorted, shortest round-trip number formatting).
pub fn config_hash(value: &toml::Value) -> String {
    let json = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    let mut text = String::new();
    canonical_json(&json, &mut text);
    format!("fnv1a64:{:016x}", fnv1a64(text.as_bytes()))
}

fn canonical_json(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        serde_json::Value::Number(n) => {
            let _ = write!(out, "{n}");
        }
        serde_json::Value::String(s) => {
            let _ = write!(out, "{}", serde_json::Value::String(s.clone()));
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", serde_json::Value::String((*key).clone()));
                out.push(':');
                canonical_json(&map[*key], out);
            }
            out.push('}');
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_leaves() {
        let mut v: toml::Value = "[map]\nfamily = \"exp\"\n[map.params]\nlambda = 0.3"
            .parse()
            .unwrap();
        apply_override(&mut v, "map.params.lambda=0.25").unwrap();
        apply_override(&mut v, "solver.depth=9").unwrap();
        apply_override(&mut v, "output.format=json").unwrap();
        assert_eq!(
            v["map"]["params"]["lambda"],
            toml::Value::Float(0.25)
        );
        assert_eq!(v["solver"]["depth"], toml::Value::Integer(9));
        assert_eq!(
            v["output"]["format"],
            toml::Value::String("json".into())
        );
    }

    #[test]
    fn hash_is_key_order_independent_and_value_sensitive() {
        let a: toml::Value = "[map]\nfamily = \"exp\"\n[solver]\ndepth = 7\nseed = 1"
            .parse()
            .unwrap();
        let b: toml::Value = "[solver]\nseed = 1\ndepth = 7\n[map]\nfamily = \"exp\""
            .parse()
            .unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let mut c = a.clone();
        apply_override(&mut c, "solver.seed=2").unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn schema_rejects_unknown_fields_with_the_key_name() {
        let text = "[map]\nfamily = \"exp\"\n[solver]\ndepht = 7";
        let err = toml::from_str::<RawConfig>(text).unwrap_err().to_string();
        assert!(err.contains("depht"), "{err}");
    }
}
