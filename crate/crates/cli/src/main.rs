//! `apnf`: runs one scenario through constants, normalization and dynamics.

mod artifacts;
mod pipeline;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use serde_json::json;

use artifacts::Artifacts;
use pipeline::RunMode;

#[derive(Parser, Debug)]
#[command(name = "apnf", version, about = "Normal forms for aperiodically perturbed Hamiltonians")]
struct Args {
    /// Scenario file, or `builtin:<name>` (iso_resonant, iso_quadratic, iso_bumps, nekho_desk, empty).
    #[arg(long)]
    config: String,
    /// Base directory for the timestamped run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "verify")]
    mode: RunMode,
    /// `key=value` with a dotted key, e.g. `perturbation.eps=1e-4`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Exit status when a hard invariant fails; configuration and runtime errors give 1.
const HARD_FAILURE: u8 = 2;

fn run(args: &Args) -> Result<u8> {
    let text = scenario::load_text(&args.config)?;
    let sc = scenario::parse(&text, &args.overrides)?;
    let mut out = Artifacts::create(&args.out, &sc.name, args.mode.as_str())?;
    out.text("scenario.toml", &toml::to_string(&sc)?)?;
    let outcome = pipeline::run(&sc, args.mode, &mut out)?;
    let status = if outcome.hard_failures.is_empty() { "ok" } else { "hard-failure" };
    let mut files = out.files.clone();
    files.push("manifest.json".into());
    out.json(
        "manifest.json",
        &json!({
            "scenario": sc.name,
            "mode": args.mode.as_str(),
            "overrides": args.overrides,
            "created": chrono::Local::now().to_rfc3339(),
            "status": status,
            "hard_failures": outcome.hard_failures,
            "regime_flags": outcome.regime_flags,
            "summary": outcome.summary,
            "files": files,
        }),
    )?;
    println!("{}", out.dir.display());
    for f in &outcome.regime_flags {
        eprintln!("regime: {f}");
    }
    for f in &outcome.hard_failures {
        eprintln!("hard failure: {f}");
    }
    Ok(if outcome.hard_failures.is_empty() { 0 } else { HARD_FAILURE })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
