use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use qctrl::bench::{emit_plot_data, load_config, load_records, replay_file, run_experiment, PlotKind};
use qctrl::Error;

/// Bang-bang and continuous control of open multi-level ladders.
#[derive(Parser)]
#[command(name = "qctrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out_dir`, else `results/<name>`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Thread cap; QCTRL_DETERMINISTIC=1 overrides it with one thread.
    #[arg(long, global = true)]
    max_workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (task, method, seed) cell of an experiment config.
    Run { config: PathBuf },
    /// Replay a stored record or `{task, protocol}` file and print its fidelity.
    Replay { protocol: PathBuf },
    /// Turn a directory of records into CSV plot data.
    Plotdata {
        records_dir: PathBuf,
        #[arg(long)]
        kind: String,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            if cli.max_workers.is_some() {
                cfg.max_workers = cli.max_workers;
            }
            let out = cli
                .out_dir
                .or(cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
            cfg.out_dir = Some(out.clone());
            let outcome = run_experiment(&cfg)?;
            for r in &outcome.records {
                let seed = r.seed.map_or_else(|| r.aggregate.clone().unwrap_or_else(|| "-".into()), |s| s.to_string());
                println!("{:<28} {:<10} {:<13} {:.6}", r.task_id, r.method, seed, r.best_fidelity);
            }
            for f in &outcome.failures {
                eprintln!("FAILED {} {} {:?}: {}", f.task_id, f.method, f.seed, f.error);
            }
            println!("records written to {}", out.join("records").display());
            if !outcome.failures.is_empty() {
                bail!("{} cell(s) failed; see {}", outcome.failures.len(), out.join("failures.jsonl").display());
            }
        }
        Command::Replay { protocol } => {
            let report = replay_file(&protocol).with_context(|| format!("replaying {}", protocol.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(err) = report.abs_error {
                if err > 1e-9 {
                    bail!("replayed fidelity differs from the record by {err:e}");
                }
            }
        }
        Command::Plotdata { records_dir, kind } => {
            let kind: PlotKind = kind.parse()?;
            let records = load_records(&records_dir)?;
            let out = cli.out_dir.unwrap_or_else(|| records_dir.join("plots"));
            for p in emit_plot_data(&records, kind, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config { .. })));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
