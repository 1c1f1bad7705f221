//! `nonholo`: simulate and verify nonholonomic systems from a flat config file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 failed verification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, VerifyTarget};
use config::{RawConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "nonholo", version, about = "Almost-Poisson brackets and gauge momenta for nonholonomic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set chaplygin.I1=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel evaluation.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a trajectory and write CSV plus a JSON summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Run verification checks and print a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check name or `all`.
        #[arg(long, default_value = "all")]
        check: String,
        /// Which system(s) to check; defaults to both bundled systems without a
        /// config file and to the configured system otherwise.
        #[arg(long, value_enum)]
        system: Option<VerifyTarget>,
        /// 3-form used by the gauge transformation: generators, zero or random.
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Solve the gauge ODE of a solid of revolution on the theta grid.
    GaugeOde {
        #[command(flatten)]
        common: Common,
    },
    /// Print the blocks of the nonholonomic and gauge-transformed bivectors at the initial state.
    BracketTable {
        #[command(flatten)]
        common: Common,
        /// Configuration point, comma separated.
        #[arg(long)]
        q: Option<String>,
        /// Momenta, comma separated.
        #[arg(long)]
        pi: Option<String>,
    },
}

fn load(common: &Common, extra: &[(&str, String)]) -> Result<RunConfig, CliError> {
    let cfg_err = |e: config::ConfigError| CliError::Config(e.to_string());
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path).map_err(cfg_err)?,
        None => RawConfig::default(),
    };
    for kv in &common.overrides {
        raw.apply_override(kv).map_err(cfg_err)?;
    }
    for (k, v) in extra {
        raw.set(k, v).map_err(cfg_err)?;
    }
    let env = std::env::var("NONHOLO_SEED").ok();
    let mut cfg = RunConfig::resolve(&raw, env.as_deref()).map_err(cfg_err)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, t_end, step } => {
            let mut extra = Vec::new();
            if let Some(t) = t_end {
                extra.push(("integrator.t_end", t.to_string()));
            }
            if let Some(h) = step {
                extra.push(("integrator.step", h.to_string()));
            }
            let cfg = load(&common, &extra)?;
            let summary = commands::simulate(&cfg)?;
            print_json(&summary)
        }
        Command::Verify { common, check, system, lambda, n_samples } => {
            let mut extra = Vec::new();
            if let Some(l) = lambda {
                extra.push(("verify.lambda", l));
            }
            if let Some(n) = n_samples {
                extra.push(("verify.n_samples", n.to_string()));
            }
            let target = system.unwrap_or(if common.config.is_some() { VerifyTarget::Config } else { VerifyTarget::All });
            let cfg = load(&common, &extra)?;
            let out = commands::verify(&cfg, &check, target, common.jobs)?;
            print_json(&out)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
                let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
                std::fs::write(dir.join("verify.json"), text + "\n").map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            if out.all_ok {
                Ok(())
            } else {
                let failed: Vec<String> = out
                    .reports
                    .iter()
                    .filter(|r| !r.ok())
                    .map(|r| format!("{} on {} ({:.3e} > {:.0e})", r.check, r.system, r.max_residual, r.threshold))
                    .collect();
                Err(CliError::Verification(failed.join("; ")))
            }
        }
        Command::GaugeOde { common } => {
            let cfg = load(&common, &[])?;
            print_json(&commands::gauge_ode(&cfg)?)
        }
        Command::BracketTable { common, q, pi } => {
            let mut extra = Vec::new();
            if let Some(q) = q {
                extra.push(("initial.q", q));
            }
            if let Some(p) = pi {
                extra.push(("initial.pi", p));
            }
            let cfg = load(&common, &extra)?;
            print_json(&commands::bracket_table(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
