//! Command-line front end. Exit codes: 0 all tests passed, 2 a statistical
//! test failed, 1 configuration or runtime error (including a failed
//! `validate`).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use metastab::config::{ExperimentConfig, ExperimentKind};
use metastab::experiment;
use metastab::simulate::default_workers;

#[derive(Parser)]
#[command(name = "metastab", version, about = "Metastability lab for Lévy-driven gradient dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Landscape, generator, exit rates and transition matrices.
    Analyze(RunArgs),
    /// Exponentiality of rescaled first exit times and exit splits.
    Exitlaw(RunArgs),
    /// Empirical generator from transition times.
    Transitions(RunArgs),
    /// Finite-dimensional distributions against the limiting chain.
    Meta(RunArgs),
    /// Localization at times `t/ε^δ`.
    Shorttime(RunArgs),
    /// Brownian comparison of log mean transition times.
    Gauss(RunArgs),
    /// Lists every violated constraint of a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sample paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to `METASTAB_WORKERS` or the core count.
    #[arg(long)]
    workers: Option<usize>,
}

fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool> {
    let mut cfg = load(&args.config)?;
    cfg.kind = kind;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.paths {
        cfg.n_paths = n;
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    let violations = cfg.validate();
    if !violations.is_empty() {
        bail!("invalid configuration:\n  {}", violations.join("\n  "));
    }
    let workers = args.workers.unwrap_or_else(default_workers);
    let report = experiment::run(&cfg, workers, Some(&cfg.output.join("records")))?;
    report.write(&cfg.output)?;
    for t in &report.tests {
        let p = t.p_value.map_or(String::new(), |p| format!(" p={p:.4}"));
        println!("[{}] {}: statistic={:.4}{p} n={}", if t.pass { "PASS" } else { "FAIL" }, t.test, t.statistic, t.n);
    }
    println!("report written to {}", cfg.output.join("report.json").display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(a) => run(ExperimentKind::Analyze, a),
        Command::Exitlaw(a) => run(ExperimentKind::ExitLaw, a),
        Command::Transitions(a) => run(ExperimentKind::Transitions, a),
        Command::Meta(a) => run(ExperimentKind::Meta, a),
        Command::Shorttime(a) => run(ExperimentKind::ShortTime, a),
        Command::Gauss(a) => run(ExperimentKind::Gauss, a),
        Command::Validate { config } => load(&config).and_then(|cfg| {
            let v = cfg.validate();
            if v.is_empty() {
                println!("ok");
                Ok(true)
            } else {
                v.iter().for_each(|m| println!("{m}"));
                bail!("{} violated constraint(s)", v.len())
            }
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
