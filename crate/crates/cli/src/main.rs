//! `nlsgraph`: run standing-wave, stability, evolution and scattering
//! experiments from a JSON config and write CSV tables.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nlsgraph::NlsError;
use rayon::prelude::*;

use commands::{num, Outcome, Status};
use config::{parse_config, read_document, set_path, Sweep};

#[derive(Parser)]
#[command(name = "nlsgraph", version, about = "Nonlinear Schrödinger experiments on star graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form standing waves and their functionals (states.csv).
    Stationary(Common),
    /// Morse index, L2 kernel and VK verdict over a frequency sweep (stability.csv).
    Stability(Common),
    /// Time evolution with conservation monitoring (trace.csv, snap_<t>.csv).
    Evolve(Common),
    /// Fast soliton scattering at the vertex (scatter.csv, scatter_summary.csv).
    Scatter(Common),
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Run once per value: `key=v1,v2,...` with a dotted config path.
    #[arg(long)]
    sweep: Option<String>,
    /// Seed for random perturbations; overrides the config field.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Stationary,
    Stability,
    Evolve,
    Scatter,
}

const CONFIG_ERROR: u8 = 2;
const BLOW_UP: u8 = 3;
const NUMERICAL_FAILURE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<NlsError>() {
            return match e {
                NlsError::BlowUp { .. } => BLOW_UP,
                NlsError::StepSize(_) | NlsError::Solver { .. } | NlsError::Singular(_) | NlsError::StepNotConverged { .. } => {
                    NUMERICAL_FAILURE
                }
                _ => CONFIG_ERROR,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return 1;
        }
    }
    CONFIG_ERROR
}

fn run_one(command: Kind, doc: serde_json::Value, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let cfg = parse_config(doc)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let seed = seed.or(cfg.seed);
    match command {
        Kind::Stationary => commands::stationary(&cfg, out),
        Kind::Stability => commands::stability(&cfg, out),
        Kind::Evolve => commands::evolve(&cfg, out, seed),
        Kind::Scatter => commands::scatter(&cfg, out),
    }
}

fn report(res: &Result<Outcome>, label: &str) -> u8 {
    match res {
        Ok(Outcome { status: Status::BlowUp { t }, .. }) => {
            eprintln!("{label}blow-up signal at t = {t}; trace truncated");
            BLOW_UP
        }
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{label}error: {e:#}");
            exit_code(e)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("NLSGRAPH_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn run(command: Kind, common: &Common) -> u8 {
    let doc = match fs::read_to_string(&common.config)
        .with_context(|| format!("cannot read {}", common.config.display()))
        .and_then(|text| read_document(&text))
    {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e:#}");
            return CONFIG_ERROR;
        }
    };
    let Some(spec) = &common.sweep else {
        return report(&run_one(command, doc, &common.out, common.seed), "");
    };
    let sweep = match Sweep::parse(spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return CONFIG_ERROR;
        }
    };
    let mut docs = Vec::new();
    for v in &sweep.values {
        let mut d = doc.clone();
        if let Err(e) = set_path(&mut d, &sweep.key, v.clone()) {
            eprintln!("error: {e:#}");
            return CONFIG_ERROR;
        }
        docs.push(d);
    }
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let results: Vec<Result<Outcome>> = pool.install(|| {
        docs.into_par_iter()
            .zip(sweep.labels.par_iter())
            .map(|(d, label)| run_one(command, d, &common.out.join(format!("{}={label}", sweep.key)), common.seed))
            .collect()
    });
    let mut code = 0;
    for (res, label) in results.iter().zip(&sweep.labels) {
        let c = report(res, &format!("[{}={label}] ", sweep.key));
        if code == 0 {
            code = c;
        }
    }
    if command == Kind::Scatter {
        if let Err(e) = write_sweep_summary(&common.out, &sweep, &results) {
            eprintln!("error: {e:#}");
            return code.max(1);
        }
    }
    code
}

/// One summary row per swept value.
fn write_sweep_summary(out: &Path, sweep: &Sweep, results: &[Result<Outcome>]) -> Result<()> {
    let rows: Vec<_> = results.iter().zip(&sweep.labels).filter_map(|(r, l)| Some((l, r.as_ref().ok()?.summary.as_ref()?))).collect();
    let Some((_, (header, _))) = rows.first() else { return Ok(()) };
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("scatter_summary.csv"))?;
    let mut h = vec![sweep.key.clone()];
    h.extend(header.iter().cloned());
    w.write_record(&h)?;
    for (label, (_, row)) in rows {
        let mut r = vec![label.parse::<f64>().map(num).unwrap_or_else(|_| label.clone())];
        r.extend(row.iter().cloned());
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, common) = match Cli::parse().command {
        Command::Stationary(c) => (Kind::Stationary, c),
        Command::Stability(c) => (Kind::Stability, c),
        Command::Evolve(c) => (Kind::Evolve, c),
        Command::Scatter(c) => (Kind::Scatter, c),
    };
    ExitCode::from(run(kind, &common))
}
