mod args;
mod commands;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};

use args::{Cli, Command, Common};
use commands::{execute, resolve, Plan};

const THREADS_ENV: &str = "QBATTERY_THREADS";

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    schema: String,
    #[serde(flatten)]
    plan: Plan,
    outputs: Vec<PathBuf>,
    wall_time_s: f64,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV} must be a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let plan = match cli.command {
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.manifest)
                .with_context(|| format!("reading {}", a.manifest.display()))?;
            let m: RunManifest = serde_json::from_str(&text).context("invalid manifest")?;
            m.plan
        }
        command => resolve(command, &cli.common)?,
    };
    write_outputs(&plan, &cli.common)
}

fn write_outputs(plan: &Plan, common: &Common) -> Result<()> {
    let start = Instant::now();
    let output = execute(plan)?;
    let wall = start.elapsed().as_secs_f64();
    let Some(out) = &common.out else {
        std::io::stdout().write_all(output.body.as_bytes())?;
        return Ok(());
    };
    fs::write(out, &output.body).with_context(|| format!("writing {}", out.display()))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema: output.schema.into(),
        plan: plan.clone(),
        outputs: vec![out.clone()],
        wall_time_s: wall,
    };
    fs::write(manifest_path(out), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// 2 for invalid input, 3 when the numerics fail.
fn exit_code(err: &anyhow::Error) -> u8 {
    use qbattery_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Numerical(_) | E::NoFeasibleEvaluation | E::DegenerateBranch(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
