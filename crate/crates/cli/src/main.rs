//! `wildeuler`: build, perturb, verify and report subsolutions from a TOML
//! run configuration.
//!
//! Exit codes: 0 every check passed, 2 a verification failed, 3 the
//! configuration or input could not be used.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wildeuler::pipeline::{self, RunConfig};
use wildeuler::report::RunReport;

const EXIT_FAIL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "wildeuler", version, about = "Subsolutions and convex-integration steps for semi-stationary Euler flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every tolerance; overrides `tol_scale`.
    #[arg(long)]
    tol_scale: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and check a subsolution, writing it to the output directory.
    Build(Common),
    /// Add perturbation steps to a stored subsolution.
    Perturb {
        /// Directory written by `build` or `perturb`.
        input: PathBuf,
        /// Trial steps; overrides `perturb_steps`.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-check a stored subsolution from its files.
    Verify {
        dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Also write report.json and summary.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gauge table from `chi0` and the maximal time.
    Chi(Common),
    /// Print the summary of a stored report.
    Report {
        /// report.json or a directory containing one.
        path: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.tol_scale {
        cfg.tol_scale = t;
    }
    if let Some(o) = &common.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out);
    Ok((cfg, out))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn run(command: Command) -> Result<RunReport> {
    let report = match command {
        Command::Build(c) => {
            let (cfg, out) = resolve(&c)?;
            pipeline::cmd_build(&cfg, &out)?
        }
        Command::Perturb { input, steps, common } => {
            let (cfg, out) = resolve(&common)?;
            if same_dir(&input, &out) {
                bail!("output directory {} is the input; choose another with --out", out.display());
            }
            let steps = steps.unwrap_or(cfg.perturb_steps);
            pipeline::cmd_perturb(&cfg, &input, steps, &out)
                .with_context(|| format!("perturbing {}", input.display()))?
        }
        Command::Verify { dir, tol_scale, out } => {
            let r = pipeline::cmd_verify(&dir, tol_scale).with_context(|| format!("verifying {}", dir.display()))?;
            if let Some(o) = out {
                pipeline::write_report(&o, &r)?;
            }
            r
        }
        Command::Chi(c) => {
            let (cfg, out) = resolve(&c)?;
            pipeline::cmd_chi(&cfg, c.out.as_ref().map(|_| out.as_path()))?
        }
        Command::Report { path } => pipeline::cmd_report(&path)?,
    };
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                if let Some(s) = report.first_failure() {
                    eprintln!("verification failed at stage {}", s.name);
                }
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
