//! `levypen`: runs one numerical experiment per invocation and writes CSV.
//!
//! Exit codes: 0 when every declared check passes, 1 when a check fails or
//! the numerics break down, 2 when the config is rejected. Failures are
//! reported on stderr as one JSON object per line.

mod config;
mod experiments;
mod presets;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Overrides, RunConfig};
use experiments::{checks_csv, execute};
use presets::Catalog;

#[derive(Debug, Parser)]
#[command(name = "levypen", version, about = "Minimal penalty and risk measure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment from a config file or a named preset.
    Run(RunArgs),
    /// Print the bundled presets and any from user preset files.
    ListPresets {
        /// Extra preset file (repeatable).
        #[arg(long = "presets", value_name = "PATH")]
        presets: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of a bundled or user preset.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Extra preset file (repeatable).
    #[arg(long = "presets", value_name = "PATH")]
    presets: Vec<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths; overrides the config.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Suppress the summary line.
    #[arg(long)]
    quiet: bool,
}

fn record(kind: &str, fields: serde_json::Value) {
    let mut obj = json!({ "status": kind });
    if let (Some(o), serde_json::Value::Object(extra)) = (obj.as_object_mut(), fields) {
        o.extend(extra);
    }
    eprintln!("{obj}");
}

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    record("config-error", json!({ "message": message.to_string() }));
    ExitCode::from(2)
}

fn load(args: &RunArgs) -> Result<RunConfig, String> {
    let overrides = Overrides { seed: args.seed, paths: args.paths };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        return RunConfig::from_json(&text, stem, overrides).map_err(|e| e.0);
    }
    let name = args.preset.as_deref().expect("clap requires --config or --preset");
    let mut catalog = Catalog::bundled();
    for p in &args.presets {
        catalog.load_file(p);
    }
    if let Some(bad) = catalog.invalid.iter().find(|i| i.name == name || i.name == "*") {
        return Err(format!("preset file {}: {}: {}", bad.source.display(), bad.name, bad.reason));
    }
    let preset = catalog.find(name).ok_or_else(|| format!("unknown preset `{name}`"))?;
    RunConfig::from_value(preset.config.clone(), &preset.name, overrides).map_err(|e| e.0)
}

fn prepare_dir(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))
}

fn run(args: RunArgs) -> ExitCode {
    let run = match load(&args) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    if let Err(e) = prepare_dir(&args.out) {
        return config_error(e);
    }
    let kind = run.plan.kind();
    let outcome = match execute(&run) {
        Ok(o) => o,
        Err(e) => {
            record("numerical-error", json!({ "experiment": kind, "message": e.0 }));
            return ExitCode::from(1);
        }
    };
    let checks = match checks_csv(&outcome.checks) {
        Ok(c) => c,
        Err(e) => {
            record("numerical-error", json!({ "experiment": kind, "message": e.0 }));
            return ExitCode::from(1);
        }
    };
    let table_path = args.out.join(format!("{}.csv", run.output));
    let checks_path = args.out.join(format!("{}_checks.csv", run.output));
    for (path, bytes) in [(&table_path, &outcome.table), (&checks_path, &checks)] {
        if let Err(e) = std::fs::write(path, bytes) {
            record("io-error", json!({ "path": path.display().to_string(), "message": e.to_string() }));
            return ExitCode::from(1);
        }
    }
    let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.pass).collect();
    for c in &failed {
        record(
            "tolerance-failure",
            json!({ "experiment": kind, "check": c.name, "value": c.value, "target": c.target, "tolerance": c.tolerance }),
        );
    }
    if !args.quiet {
        println!(
            "{kind} [{}]: {} passed, {} failed; {} -> {}",
            run.output,
            outcome.checks.len() - failed.len(),
            failed.len(),
            outcome.summary,
            table_path.display()
        );
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets { presets } => {
            let mut catalog = Catalog::bundled();
            for p in &presets {
                catalog.load_file(p);
            }
            print!("{}", catalog.render());
            ExitCode::SUCCESS
        }
    }
}
