use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use feaslab::harness::{self, ExperimentConfig, TruthSpec};
use feaslab::odds;
use feaslab::testbeds::estimate_truth;
use feaslab::OddsRatio;

#[derive(Parser)]
#[command(name = "feaslab", version, about = "Feasibility determination experiments and session service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a macro-replication experiment and write a CSV report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of macro-replications.
        #[arg(long)]
        reps: Option<u64>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FEASLAB_THREADS")]
        threads: Option<usize>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form analytics.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Estimate true probabilities for a configuration's source.
    Truth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the /v1 session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "feaslab-state")]
        state_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Smallest continuation half-width for a per-constraint error.
    Halfwidth {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        theta: f64,
    },
    /// Expected number of replications until a decision.
    Stoptime {
        #[arg(long)]
        p: f64,
        #[arg(long = "h")]
        h: f64,
        #[arg(long = "H")]
        halfwidth: u32,
    },
    /// Probability of declaring Feasible.
    Absorption {
        #[arg(long)]
        p: f64,
        #[arg(long = "h")]
        h: f64,
        #[arg(long = "H")]
        halfwidth: u32,
    },
    /// Threshold boundaries of the indifference zone around p.
    Boundaries {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        theta: f64,
    },
    /// Tolerance and adjusted thresholds for the batch-means baseline.
    Convert {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        thresholds: Vec<f64>,
        #[arg(long)]
        theta: f64,
    },
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn analyze(what: Analyze) -> Result<()> {
    use serde_json::json;
    match what {
        Analyze::Halfwidth { beta, theta } => {
            let h = odds::continuation_halfwidth(beta, OddsRatio::new(theta)?)?;
            print_json(&json!({ "beta": beta, "theta": theta, "halfwidth": h }))
        }
        Analyze::Stoptime { p, h, halfwidth } => {
            let t = odds::expected_stopping_time(p, h, halfwidth)?;
            print_json(&json!({ "p": p, "h": h, "halfwidth": halfwidth, "expected_stopping_time": t }))
        }
        Analyze::Absorption { p, h, halfwidth } => {
            let a = odds::absorption_probability(p, h, halfwidth)?;
            print_json(&json!({ "p": p, "h": h, "halfwidth": halfwidth, "p_feasible": a }))
        }
        Analyze::Boundaries { p, theta } => print_json(&odds::boundary_thresholds(p, OddsRatio::new(theta)?)?),
        Analyze::Convert { thresholds, theta } => {
            print_json(&odds::tolerance_convert(&thresholds, OddsRatio::new(theta)?)?)
        }
    }
}

fn run(config: PathBuf, reps: Option<u64>, seed: Option<u64>, threads: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(r) = reps {
        cfg.macro_reps = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    let report = harness::run_macro(&cfg, threads)?;
    log::info!(
        "{} {}: PCD {:.4}, OBS {:.1}",
        report.config_id,
        report.procedure,
        report.pcd.mean,
        report.obs_total.mean
    );
    match out {
        Some(path) => harness::emit_csv(&[report], &path)?,
        None => harness::write_csv(&[report], std::io::stdout().lock())?,
    }
    Ok(())
}

fn truth(config: PathBuf, n: u64, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let seed = seed.unwrap_or(match &cfg.truth {
        TruthSpec::Estimate { seed, .. } => *seed,
        _ => cfg.master_seed,
    });
    let source = cfg.source.build()?;
    let table = estimate_truth(&source, seed, n)?;
    table.write_csv(&out)?;
    Ok(())
}

async fn serve(port: u16, state_dir: PathBuf) -> Result<()> {
    let state = feaslab_service::AppState::open(&state_dir)?;
    let app = feaslab_service::router(state);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            reps,
            seed,
            threads,
            out,
        } => run(config, reps, seed, threads, out),
        Command::Analyze { what } => analyze(what),
        Command::Truth { config, n, seed, out } => truth(config, n, seed, out),
        Command::Serve { port, state_dir } => tokio::runtime::Runtime::new()?.block_on(serve(port, state_dir)),
    }
}
