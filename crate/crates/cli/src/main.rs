//! `rfpgs` pipeline driver. Each subcommand reads a TOML config, applies
//! `--key value` overrides, echoes the resolved config into its output
//! directory and runs one stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::Parser;

use config::Command;

/// Worker-thread count for the parallel renderer; unset uses every core.
const THREADS_ENV: &str = "RFPGS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "rfpgs", version, about = "Radio radiance fields with planar Gaussian splatting")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Overrides as `--key value`; keys are dotted paths into the config
    /// (`--rf.lambda_mv 0`) or per-command shorthands such as `--iterations`,
    /// `--samples`, `--psf-beamwidth` and `--metric`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| anyhow!("expected `--key value`, got {flag:?}"))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        match it.next() {
            Some(v) => out.push((key.to_string(), v.clone())),
            None => bail!("override --{key} is missing its value"),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let overrides = parse_overrides(&cli.overrides)?;
    let cfg = config::resolve(cli.command, &cli.config, &overrides)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| anyhow!("creating {}: {e}", cfg.out_dir.display()))?;
    config::echo(&cfg)?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::TrainGeom => commands::train_geom(&cfg),
        Command::TrainRf => commands::train_rf(&cfg),
        Command::Finetune => commands::finetune(&cfg),
        Command::Render => commands::render(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Beamform => commands::beamform(&cfg),
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<rfpgs::Error>() {
            return match err {
                rfpgs::Error::InvalidInput(_) => "invalid_input",
                rfpgs::Error::DimensionMismatch(_) | rfpgs::Error::PixelOutOfBounds { .. } => "dimension_mismatch",
                rfpgs::Error::EmptyDataset(_) => "empty_dataset",
                rfpgs::Error::Schema { .. } | rfpgs::Error::Json(_) | rfpgs::Error::Csv(_) => "schema",
                rfpgs::Error::Io { .. } | rfpgs::Error::Png(_) => "io",
            };
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = serde_json::json!({"error": {"kind": "usage", "message": e.to_string().trim()}});
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({"error": {"kind": error_kind(&e), "message": format!("{e:#}")}});
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
