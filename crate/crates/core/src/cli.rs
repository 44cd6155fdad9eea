//! Command-line entry points.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::trainer::{run_with, TrainConfig, METRICS_HEADER};
use crate::verify::{any_failed, render_report, run_checks, Mutation, VerifyOptions};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "PROXLAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "proxlab",
    version,
    about = "Proximal policy optimization surrogates and their checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one policy and write metrics.csv and config.resolved.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides both the config file and PROXLAB_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the property checks and write verify_report.txt.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Corrupt the objective under test; every non-`none` value must fail.
        #[arg(long, value_enum, default_value_t = Mutation::None)]
        mutation: Mutation,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train with seeds `seed, seed + 1, ...`, one subdirectory per seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<TrainConfig<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::parse(&text, &path.display().to_string())
}

/// Applies the seed precedence: flag, then environment, then file.
pub fn resolve_seed(config: &mut TrainConfig<f64>, flag: Option<u64>, env: Option<&str>) -> Result<()> {
    if let Some(value) = env {
        config.seed = value
            .trim()
            .parse()
            .map_err(|_| Error::invalid_argument(format!("{SEED_ENV} must be an unsigned integer, got {value:?}")))?;
    }
    if let Some(seed) = flag {
        config.seed = seed;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Trains with `config`, streaming one CSV row per epoch into `out/metrics.csv`.
pub fn run_train(config: &TrainConfig<f64>, out: &Path) -> Result<usize> {
    create_dir(out)?;
    write_file(&out.join("config.resolved"), &config.to_string())?;
    let csv_path = out.join("metrics.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = std::io::BufWriter::new(file);
    writeln!(csv, "{METRICS_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
    let series = run_with(config, |m| {
        writeln!(csv, "{}", m.csv_row()).map_err(|e| Error::io(&csv_path, e))
    })?;
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(series.len())
}

/// Runs the check suite, writes `out/verify_report.txt` and returns whether
/// every check avoided FAIL.
pub fn run_verify(options: &VerifyOptions, out: &Path) -> Result<bool> {
    create_dir(out)?;
    let results = run_checks(options);
    let report = render_report(&results);
    write_file(&out.join("verify_report.txt"), &report)?;
    print!("{report}");
    Ok(!any_failed(&results))
}

/// Trains `seeds` runs starting from the configured seed.
pub fn run_sweep(config: &TrainConfig<f64>, seeds: usize, out: &Path) -> Result<()> {
    for k in 0..seeds as u64 {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(k);
        run_train(&cfg, &out.join(format!("seed_{}", cfg.seed)))?;
    }
    Ok(())
}

/// Executes a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let env_seed = std::env::var(SEED_ENV).ok();
    match cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg = parse_config(&config)?;
            resolve_seed(&mut cfg, seed, env_seed.as_deref())?;
            run_train(&cfg, &out)?;
            Ok(0)
        }
        Command::Verify { out, mutation, seed } => {
            let options = VerifyOptions {
                mutation,
                seed,
                ..VerifyOptions::default()
            };
            Ok(if run_verify(&options, &out)? { 0 } else { 1 })
        }
        Command::Sweep { config, seeds, out } => {
            let mut cfg = parse_config(&config)?;
            resolve_seed(&mut cfg, None, env_seed.as_deref())?;
            run_sweep(&cfg, seeds, &out)?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        let mut cfg = TrainConfig::<f64>::default();
        cfg.seed = 3;
        resolve_seed(&mut cfg, None, None).unwrap();
        assert_eq!(cfg.seed, 3);
        resolve_seed(&mut cfg, None, Some("11")).unwrap();
        assert_eq!(cfg.seed, 11);
        resolve_seed(&mut cfg, Some(5), Some("11")).unwrap();
        assert_eq!(cfg.seed, 5);
        assert!(resolve_seed(&mut cfg, None, Some("x")).is_err());
    }

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from(["proxlab", "verify", "--out", "d", "--mutation", "rollback-slope"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Verify {
                mutation: Mutation::RollbackSlope,
                ..
            }
        ));
        assert!(Cli::try_parse_from(["proxlab", "train", "--out", "d"]).is_err());
        let cli = Cli::try_parse_from(["proxlab", "sweep", "--config", "c", "--seeds", "3", "--out", "d"]).unwrap();
        assert!(matches!(cli.command, Command::Sweep { seeds: 3, .. }));
    }
}
