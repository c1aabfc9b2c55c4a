//! Command-line front end.
//!
//! Exit codes: 0 CERTIFIED-EXTREMAL, 2 FAIL, 3 NON-CERTIFIED, 1 for usage,
//! configuration and validation errors. clap's own usage exit code (2) is
//! remapped to 1 so that 2 always means a failed check.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::{debug, info};
use pmp_core::certify::Verdict;
use pmp_core::pipeline::{self, PipelineError};
use pmp_core::problem::{catalog_draft_with, catalog_names, describe_entry, validate, ProblemDraft};

use crate::config::{ConfigError, RunConfig};
use crate::report::{sha256_hex, trace_csv, Report};

pub const EXIT_CERTIFIED: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FAIL: u8 = 2;
pub const EXIT_NON_CERTIFIED: u8 = 3;

pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";

#[derive(Debug, Parser)]
#[command(name = "pmp-horizon", version, about = "Certify maximum-principle relations for infinite-horizon control problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the adjoint certificate and check every relation.
    Run(RunArgs),
    /// Print the built-in problems.
    List,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Built-in problem; replaces the problem named in the config file.
    #[arg(long, value_name = "NAME")]
    pub catalog: Option<String>,
    /// Override a parameter, `candidate.u<j>` or `initial.x<i>`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for report.json (and trace.csv); stdout otherwise.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write the per-node CSV trace (needs an output directory).
    #[arg(long)]
    pub csv: bool,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", value.trim()))?;
    if !value.is_finite() {
        return Err(format!("`{key}` must be finite"));
    }
    Ok((key.into(), value))
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let shown = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{shown}");
                EXIT_ERROR
            } else {
                let _ = write!(stdout, "{shown}");
                EXIT_CERTIFIED
            };
        }
    };
    match cli.command {
        Command::List => {
            for line in catalog_names().into_iter().filter_map(describe_entry) {
                let _ = writeln!(stdout, "{line}");
            }
            EXIT_CERTIFIED
        }
        Command::Run(args) => match execute(&args, stdout) {
            Ok(code) => code,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_ERROR
            }
        },
    }
}

/// Problem, numerics and output choices after merging file and flags.
pub struct Resolved {
    pub draft: ProblemDraft,
    pub config: RunConfig,
    pub config_hash: String,
    pub out: Option<PathBuf>,
    pub csv: bool,
}

/// Merges the config file with command-line flags.
///
/// Overrides from the file apply only to the problem the file names;
/// `--set` applies to whichever problem is chosen.
pub fn resolve(args: &RunArgs) -> Result<Resolved, ConfigError> {
    let (config, mut hashed) = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => (RunConfig::default(), Vec::new()),
    };
    // flags that change the run are folded into the hash
    if let Some(name) = &args.catalog {
        hashed.extend_from_slice(format!("\ncatalog={name}").as_bytes());
    }
    for (k, v) in &args.set {
        hashed.extend_from_slice(format!("\nset {k}={v:?}").as_bytes());
    }
    let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
    let problem = &config.problem;
    let draft = match (&args.catalog, &problem.catalog, &problem.inline) {
        (Some(name), _, _) => {
            let set: BTreeMap<String, f64> = args.set.iter().cloned().collect();
            catalog_draft_with(name, &set).map_err(|e| invalid(&e))?
        }
        (None, Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(
                "[problem] takes either `catalog` or `inline`, not both".into(),
            ))
        }
        (None, Some(name), None) => {
            let mut merged = problem.overrides.clone();
            merged.extend(args.set.iter().cloned());
            catalog_draft_with(name, &merged).map_err(|e| invalid(&e))?
        }
        (None, None, Some(inline)) => {
            let mut draft = inline.to_draft();
            for (k, v) in problem.overrides.iter().chain(args.set.iter().map(|(k, v)| (k, v))) {
                draft.apply_override(k, *v).map_err(|e| invalid(&e))?;
            }
            draft
        }
        (None, None, None) => {
            return Err(ConfigError::Invalid(
                "no problem given: use --catalog NAME or a config with [problem]".into(),
            ))
        }
    };
    let out = args.out.clone().or_else(|| config.output.dir.clone());
    let csv = args.csv || config.output.csv;
    if csv && out.is_none() {
        return Err(ConfigError::Invalid("--csv needs an output directory (--out DIR)".into()));
    }
    Ok(Resolved {
        draft,
        config_hash: sha256_hex(&hashed),
        config,
        out,
        csv,
    })
}

fn write_file(path: &std::path::Path, text: &str) -> Result<(), ConfigError> {
    std::fs::write(path, text).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the pipeline for `args` and writes the artifacts. Returns the exit
/// code for the verdict.
pub fn execute(args: &RunArgs, stdout: &mut dyn Write) -> Result<u8, ConfigError> {
    let resolved = resolve(args)?;
    let spec = validate(&resolved.draft).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let numerics = resolved.config.numerics();
    info!("running {} with t_max = {}", spec.name(), numerics.t_max);
    let (report, csv) = match pipeline::run(&spec, &numerics) {
        Ok(run) => {
            debug!("mesh has {} nodes, max kappa {:e}", run.fund.mesh().len(), run.fund.max_kappa());
            let report = Report::from_run(resolved.config_hash.clone(), &spec, &run);
            let csv = resolved.csv.then(|| trace_csv(&run.trace_rows(&spec), spec.state_dim()));
            (report, csv)
        }
        Err(PipelineError::InvalidNumerics(why)) => return Err(ConfigError::Invalid(format!("invalid numerics: {why}"))),
        Err(PipelineError::Numerical(why)) => (
            Report::non_certified(resolved.config_hash.clone(), &spec, &numerics, why),
            None,
        ),
    };
    let json = report.to_json();
    match &resolved.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| ConfigError::Io {
                path: dir.clone(),
                source,
            })?;
            write_file(&dir.join(REPORT_FILE), &json)?;
            if let Some(csv) = csv {
                write_file(&dir.join(TRACE_FILE), &csv)?;
            }
            let _ = writeln!(stdout, "{}: {}", spec.name(), report.verdict);
        }
        None => {
            let _ = write!(stdout, "{json}");
        }
    }
    Ok(match report.verdict.as_str() {
        v if v == Verdict::CertifiedExtremal.as_str() => EXIT_CERTIFIED,
        v if v == Verdict::Fail(Vec::new()).as_str() => EXIT_FAIL,
        _ => EXIT_NON_CERTIFIED,
    })
}
