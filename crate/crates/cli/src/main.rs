//! Command-line front end: thermodynamic-formalism estimators for
//! hyperbolic entire and meromorphic maps, driven by a TOML run
//! configuration and emitting plot-ready CSV or JSON with provenance.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FormatSpec, ModeSpec};
use juliatherm_core::multifractal::RunMode;
use output::Provenance;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(juliatherm_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(err) => commands::exit_code(err),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "juliatherm",
    version,
    about = "Transfer-operator thermodynamics for hyperbolic entire and meromorphic maps",
    after_help = "Exit codes: 0 ok, 2 config error, 3 non-converged (artifact still written), \
                  4 math-domain error. JULIATHERM_THREADS caps the worker pool."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the map catalog with growth profiles
    Catalog(EmitArgs),
    /// Check the growth envelope and the hyperbolicity certificate
    Diagnose(RunArgs),
    /// Topological pressure of the configured potential
    Pressure(RunArgs),
    /// Cesàro-averaged Gibbs density on the base-point grid
    Gibbs(RunArgs),
    /// Hyperbolic dimension via the pressure zero
    Bowen(RunArgs),
    /// Temperature function and multifractal spectrum on a q-grid
    Spectrum(RunArgs),
    /// Re-solve a task over a one-parameter family grid
    Sweep(RunArgs),
    /// Lagged correlations and the Green-Kubo variance
    Correlations(RunArgs),
}

#[derive(Args)]
struct EmitArgs {
    /// Write the artifact here (stdout summary is always printed)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact format
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatSpec,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Override a config leaf, e.g. --set solver.depth=9 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for --set solver.mode=...
    #[arg(long, value_enum)]
    mode: Option<ModeSpec>,
    /// Shorthand for --set solver.seed=...
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for --set output.path=...
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shorthand for --set output.format=...
    #[arg(long, value_enum)]
    format: Option<FormatSpec>,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// JULIATHERM_THREADS caps the global worker pool; unset means the library
/// default. Invalid values are a config error rather than a silent default.
fn init_thread_pool() {
    let Ok(raw) = std::env::var("JULIATHERM_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => {
            eprintln!("error: JULIATHERM_THREADS must be a positive integer, got `{raw}`");
            std::process::exit(2);
        }
    }
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Catalog(args) => {
            let outcome = commands::catalog();
            let prov = Provenance {
                command: "catalog",
                config_hash: config::config_hash(&toml::Value::Table(Default::default())),
                mode: "deterministic",
                seed: 0,
            };
            for line in &outcome.stdout {
                println!("{line}");
            }
            if let Some(path) =
                output::emit(&prov, &outcome.body, args.format, args.out.as_deref())?
            {
                println!("wrote {}  [{}]", path.display(), prov.config_hash);
            }
            Ok(0)
        }
        Command::Diagnose(args) => run(args, "diagnose", commands::diagnose),
        Command::Pressure(args) => run(args, "pressure", commands::pressure_cmd),
        Command::Gibbs(args) => run(args, "gibbs", commands::gibbs),
        Command::Bowen(args) => run(args, "bowen", commands::bowen),
        Command::Spectrum(args) => run(args, "spectrum", commands::spectrum),
        Command::Sweep(args) => run(args, "sweep", commands::sweep),
        Command::Correlations(args) => run(args, "correlations", commands::correlations),
    }
}

fn run(
    args: RunArgs,
    name: &'static str,
    handler: impl Fn(&config::Prepared) -> Result<commands::Outcome, CliError>,
) -> Result<u8, CliError> {
    let mut sugars: Vec<(&str, toml::Value)> = Vec::new();
    if let Some(mode) = args.mode {
        let text = match mode {
            ModeSpec::Deterministic => "deterministic",
            ModeSpec::Fast => "fast",
        };
        sugars.push(("solver.mode", toml::Value::String(text.into())));
    }
    if let Some(seed) = args.seed {
        sugars.push(("solver.seed", toml::Value::Integer(seed as i64)));
    }
    if let Some(out) = &args.out {
        sugars.push((
            "output.path",
            toml::Value::String(out.display().to_string()),
        ));
    }
    if let Some(format) = args.format {
        let text = match format {
            FormatSpec::Csv => "csv",
            FormatSpec::Json => "json",
        };
        sugars.push(("output.format", toml::Value::String(text.into())));
    }

    let (raw, merged) = config::load(&args.config, &args.set, &sugars)?;
    let cfg = config::prepare(raw, &merged)?;
    let prov = Provenance {
        command: name,
        config_hash: cfg.config_hash.clone(),
        mode: match cfg.mode {
            RunMode::Deterministic => "deterministic",
            RunMode::Fast => "fast",
        },
        seed: cfg.seed,
    };

    match handler(&cfg) {
        Ok(outcome) => {
            for line in &outcome.stdout {
                println!("{line}");
            }
            if let Some(path) =
                output::emit(&prov, &outcome.body, cfg.format, cfg.out_path.as_deref())?
            {
                println!("wrote {}  [{}]", path.display(), prov.config_hash);
            }
            Ok(if outcome.converged { 0 } else { 3 })
        }
        Err(err) => {
            // Non-convergence still writes a flagged artifact so pipelines
            // see what failed; config errors upstream of here do not.
            if let CliError::Core(core_err) = &err {
                if commands::exit_code(core_err) == 3 {
                    let mut body = output::Body::new(vec!["error"]);
                    body.note("converged", "false");
                    body.rows.push(vec![core_err.to_string().replace(',', ";")]);
                    let _ = output::emit(&prov, &body, cfg.format, cfg.out_path.as_deref());
                }
            }
            Err(err)
        }
    }
}
