use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rlevss::experiment::{run, Method, Mode, RunConfig, RunOutput, SizeSpec};

#[derive(Parser)]
#[command(name = "rlevss", version, about = "Random-LASSO variable selection with leverage-score subdata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulation study: power, error and test MSE per replication.
    Simulate(Common),
    /// Simulation over a grid of n1 and p_s values.
    Sweep(Common),
    /// Bootstrap MSPE on a train/test pair of CSV files.
    Realdata(Common),
    /// Fit the full pipeline to one CSV file and write the model as JSON.
    Fit(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (a manifest.toml from an earlier run also works).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Subdata size: a count or a fraction of n such as 0.1n.
    #[arg(long)]
    k: Option<SizeSpec>,
    /// Comma-separated subset of algorithm1,onephase_baseline,fulldata_lasso.
    #[arg(long)]
    methods: Option<String>,
    /// Replications, or bootstrap samples for realdata.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Input CSV for fit.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Record wall-clock seconds per stage (outputs are then not byte-reproducible).
    #[arg(long)]
    timings: bool,
}

fn build_config(mode: Mode, a: Common) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    cfg.mode = mode;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out {
        cfg.paths.out = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if let Some(v) = a.k {
        cfg.subdata.k = v;
    }
    if let Some(v) = a.methods {
        cfg.methods = Method::parse_list(&v)?;
    }
    if let Some(v) = a.replications {
        cfg.replications = v;
    }
    if a.train.is_some() {
        cfg.paths.train = a.train;
    }
    if a.test.is_some() {
        cfg.paths.test = a.test;
    }
    if a.input.is_some() {
        cfg.paths.input = a.input;
    }
    if a.timings {
        cfg.timings = true;
    }
    Ok(cfg)
}

fn report(out: &RunOutput) -> Result<()> {
    match out {
        RunOutput::Simulation(s) => {
            println!("k = {}, {} replications", s.k, s.replications);
            for m in &s.methods {
                println!(
                    "{:<18} power {:>8} error {:>8} mse {:>12} failed {}",
                    m.method.to_string(),
                    fmt(m.mean_power),
                    fmt(m.mean_error),
                    fmt(m.mean_mse),
                    m.n_failed
                );
            }
            for f in &s.failures {
                eprintln!("replicate {} {}: {}", f.replicate, f.method, f.message);
            }
        }
        RunOutput::Sweep(s) => {
            for c in &s.cells {
                for m in &c.methods {
                    println!(
                        "n1 {:>4} p_s {:>4} {:<18} power {:>8} error {:>8} mse {:>12}",
                        c.n1,
                        c.p_s,
                        m.method.to_string(),
                        fmt(m.mean_power),
                        fmt(m.mean_error),
                        fmt(m.mean_mse)
                    );
                }
            }
        }
        RunOutput::RealData(s) => {
            for m in &s.methods {
                println!("{:<18} k {:>6} mean mspe {:>12} failed {}", m.method.to_string(), m.k, fmt(m.mean_mspe), m.n_failed);
            }
            for f in &s.failures {
                eprintln!("bootstrap {} {}: {}", f.bootstrap, f.method, f.message);
            }
        }
        RunOutput::Fit(m) => println!("{}", m.to_json()?),
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Realdata(a) => (Mode::Realdata, a),
        Command::Fit(a) => (Mode::Fit, a),
    };
    let result = build_config(mode, args).and_then(|cfg| {
        let out = run(&cfg)?;
        report(&out)?;
        eprintln!("wrote {}", cfg.paths.out.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
