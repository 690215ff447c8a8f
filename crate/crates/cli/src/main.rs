use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use qaoa_darbo::bits::index_to_bitstring;
use qaoa_darbo::harness::{self, RunConfig, RunOptions};
use qaoa_darbo::mitigation::{self, ConfusionSpec};
use qaoa_darbo::problem::{generate_w3r, QuboProblem, WeightedGraph};
use qaoa_darbo::simulator::{self, ShotSample};

#[derive(Parser)]
#[command(name = "qaoa-darbo", version, about = "Error-mitigated QAOA experiments with Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a weighted random 3-regular graph as JSON.
    GenGraph {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        weight_low: f64,
        #[arg(long, default_value_t = 1.0)]
        weight_high: f64,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Brute-force optimum of a graph's QUBO as JSON.
    Oracle {
        /// Graph JSON file; omit with --five-variable.
        #[arg(long, required_unless_present = "five_variable")]
        graph: Option<PathBuf>,
        /// Use the built-in five-variable benchmark QUBO.
        #[arg(long, conflicts_with = "graph")]
        five_variable: bool,
    },
    /// Run an experiment config and write trajectories plus aggregates.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Worker threads (0 = one per CPU).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Summarize a run directory and write its plot-ready curve.csv.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Apply readout mitigation to a recorded shot sample.
    Mitigate {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        confusion: PathBuf,
        /// Project the quasi-distribution onto the probability simplex.
        #[arg(long)]
        project: bool,
        /// Also report the mitigated objective of this graph.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| qaoa_darbo::Error::io(path, e).into())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenGraph { n, seed, weight_low, weight_high, output } => {
            let graph = generate_w3r(n, seed, weight_low, weight_high)?;
            match output {
                Some(path) => graph.save(&path)?,
                None => println!("{}", graph.to_json()?),
            }
        }
        Command::Oracle { graph, five_variable } => {
            let problem = if five_variable {
                QuboProblem::five_variable_benchmark()
            } else {
                let path = graph.context("--graph is required")?;
                QuboProblem::new(WeightedGraph::load(&path)?)
            };
            println!("{}", problem.brute_force_optimum()?.to_json()?);
        }
        Command::Run { config, output, workers } => {
            let config = RunConfig::from_json(&read(&config)?)?;
            let summary = harness::run_experiment(&config, &RunOptions { output, workers })?;
            print!("{}", harness::format_table(&summary.optimizers));
        }
        Command::Report { dir, json } => {
            let report = harness::write_report(&dir)?;
            if json {
                print_json(&serde_json::to_value(&report)?)?;
            } else {
                print!("{}", harness::format_table(&report.optimizers));
            }
        }
        Command::Mitigate { sample, confusion, project, graph } => {
            let sample = ShotSample::from_json(&read(&sample)?)?;
            let spec = ConfusionSpec::from_json(&read(&confusion)?)?;
            let mut quasi = mitigation::mitigate_counts(&sample, &spec)?;
            if project {
                quasi = mitigation::project_to_simplex(&quasi);
            }
            let n = sample.n();
            let map: BTreeMap<String, f64> = quasi.iter().enumerate().map(|(i, &v)| (index_to_bitstring(i, n), v)).collect();
            let mut out = json!({ "n": n, "m": sample.m(), "projected": project, "quasi_probabilities": map });
            if let Some(path) = graph {
                let problem = QuboProblem::new(WeightedGraph::load(&path)?);
                out["raw_expectation"] = json!(simulator::shot_estimate(&problem, &sample)?);
                out["mitigated_expectation"] = json!(simulator::distribution_expectation(&problem, &quasi)?);
            }
            print_json(&out)?;
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.downcast_ref::<qaoa_darbo::Error>().map_or("other", qaoa_darbo::Error::kind)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
