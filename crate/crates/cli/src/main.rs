//! `edgekt` experiment runner.
//!
//! `run` executes every configured seed and writes `metrics_<seed>.csv`,
//! `confusion_<agent>_<seed>.csv` and `manifest.json` into the output
//! directory. `compare` tabulates final-epoch accuracies of the local
//! agent across finished run directories.
//!
//! Exit status: 0 on success, 2 for configuration or missing-artifact
//! problems, 1 for failures during a run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use edgekt::experiment::{run_seed, MethodKind, RunConfig};
use edgekt::metrics::{read_metrics_csv, write_confusion_csv, write_metrics_csv, MeanStd};
use edgekt::sim::{AgentId, Preset};

#[derive(Parser)]
#[command(name = "edgekt", version, about = "Decentralized knowledge transfer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run {
        /// TOML config, or JSON (such as a previous manifest.json).
        #[arg(long)]
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// ours, kd, fedavg, gossip or none.
        #[arg(long)]
        method: Option<MethodKind>,
        /// none, half_mesh, full_mesh, transitive or federated_star.
        #[arg(long)]
        topology: Option<Preset>,
    },
    /// Compare final-epoch accuracies of finished runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<edgekt::Error> for Failure {
    fn from(e: edgekt::Error) -> Self {
        match e {
            edgekt::Error::Config(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            method,
            topology,
        } => run(&config, seed, out, method, topology),
        Command::Compare { dirs } => compare(&dirs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Parses JSON when the file is `.json` or starts with `{`, TOML otherwise.
fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let cfg = if is_json {
        serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?
    } else {
        toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?
    };
    Ok(cfg)
}

fn run(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    method: Option<MethodKind>,
    topology: Option<Preset>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config).map_err(Failure::Config)?;
    if let Some(seed) = seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = out {
        cfg.run.out_dir = out;
    }
    if let Some(method) = method {
        cfg.training.method = method;
    }
    if let Some(topology) = topology {
        cfg.training.topology = topology;
    }
    cfg.validate()?;

    let dir = cfg.run.out_dir.clone();
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)?;
    let manifest = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(dir.join("manifest.json"), manifest + "\n")
        .with_context(|| format!("cannot write manifest in {}", dir.display()))
        .map_err(Failure::Runtime)?;

    for &seed in &cfg.run.seeds {
        let output = run_seed(&cfg, seed)?;
        write_metrics_csv(&output.records, dir.join(format!("metrics_{seed}.csv")))?;
        for (agent, matrix) in &output.confusions {
            write_confusion_csv(
                matrix,
                &output.class_names,
                dir.join(format!("confusion_{agent}_{seed}.csv")),
            )?;
        }
        if let Some(r) = output.final_record(AgentId(0)) {
            eprintln!(
                "seed {seed}: local {:.4} remote {:.4} combined {:.4} messages {}",
                r.local_acc, r.remote_acc, r.combined_acc, output.messages
            );
        }
    }
    Ok(())
}

struct Row {
    label: String,
    method: String,
    topology: String,
    seeds: usize,
    local: MeanStd,
    remote: MeanStd,
    combined: MeanStd,
}

fn summarize_dir(dir: &Path) -> anyhow::Result<Row> {
    let manifest = dir.join("manifest.json");
    let cfg = load_config(&manifest).with_context(|| format!("{} is not a finished run", dir.display()))?;
    let mut finals = Vec::with_capacity(cfg.run.seeds.len());
    for seed in &cfg.run.seeds {
        let path = dir.join(format!("metrics_{seed}.csv"));
        let records = read_metrics_csv(&path)?;
        let last = records
            .iter()
            .rev()
            .find(|r| r.agent == AgentId(0))
            .ok_or_else(|| anyhow!("{} has no records for agent 0", path.display()))?;
        finals.push(last.clone());
    }
    let column = |f: fn(&edgekt::metrics::MetricsRecord) -> f64| MeanStd::of(&finals.iter().map(f).collect::<Vec<_>>());
    Ok(Row {
        label: dir.display().to_string(),
        method: cfg.training.method.to_string(),
        topology: cfg.training.topology.to_string(),
        seeds: finals.len(),
        local: column(|r| r.local_acc),
        remote: column(|r| r.remote_acc),
        combined: column(|r| r.combined_acc),
    })
}

fn compare(dirs: &[PathBuf]) -> Result<(), Failure> {
    let rows = dirs
        .iter()
        .map(|d| summarize_dir(d))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Config)?;
    let cell = |m: &MeanStd| format!("{:.4}±{:.4}", m.mean, m.std);
    let mut table = vec![vec![
        "run".to_string(),
        "method".to_string(),
        "topology".to_string(),
        "seeds".to_string(),
        "local".to_string(),
        "remote".to_string(),
        "combined".to_string(),
    ]];
    for r in &rows {
        table.push(vec![
            r.label.clone(),
            r.method.clone(),
            r.topology.clone(),
            r.seeds.to_string(),
            cell(&r.local),
            cell(&r.remote),
            cell(&r.combined),
        ]);
    }
    print!("{}", aligned_tsv(&table));
    Ok(())
}

/// Tab-separated rows with every column but the last padded to a common width.
fn aligned_tsv(table: &[Vec<String>]) -> String {
    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in table {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c + 1 == cols {
                    v.clone()
                } else {
                    format!("{v:<w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}
