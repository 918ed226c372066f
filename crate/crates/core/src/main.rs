use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ambijam::harness::{self, config, selfcheck, AgentKind, ExperimentSpec};
use ambijam::Result;

#[derive(Parser)]
#[command(name = "ambijam", version, about = "Anti-jamming backscatter link simulator and learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (or the self-check suite) from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Figure preset: fig5 .. fig11.
        #[arg(long)]
        figure: Option<String>,
        /// Restrict to one agent kind.
        #[arg(long)]
        agent: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Training iterations for every agent.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the oracle cross-validation suite instead of an experiment.
        #[arg(long)]
        selfcheck: bool,
    },
}

fn eval_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.eval.csv"))
}

fn run(
    config_path: &Path,
    figure: Option<String>,
    agent: Option<String>,
    seeds: Option<Vec<u64>>,
    iterations: Option<u64>,
    out: Option<PathBuf>,
) -> Result<bool> {
    let mut file = config::load(config_path)?;
    if figure.is_some() {
        file.run.figure = figure;
    }
    let mut spec = ExperimentSpec::from_file(&file)?;
    if let Some(a) = agent {
        spec.agents = vec![AgentKind::parse(&a)?];
    }
    if let Some(s) = seeds {
        spec.seeds = s;
    }
    if let Some(n) = iterations {
        spec.agent.iterations = n;
        spec.agent.tabular_iterations = Some(n);
    }
    if out.is_some() {
        spec.out_path = out;
    }
    let result = harness::run_experiment(&spec)?;
    match &spec.out_path {
        Some(path) => {
            harness::emit_csv(&result.rows, path)?;
            if !result.evals.is_empty() {
                harness::emit_csv(&result.evals, &eval_path(path))?;
            }
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
        }
        None => print!("{}", harness::to_csv(&result.rows)),
    }
    for f in &result.failures {
        eprintln!(
            "cell failed: agent={} seed={} sweep={:?}: {}",
            f.agent.name(),
            f.seed,
            f.sweep_value,
            f.error
        );
    }
    Ok(result.failures.is_empty())
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        figure,
        agent,
        seeds,
        iterations,
        out,
        selfcheck: check,
    } = Cli::parse().command;
    if check {
        if let Err(e) = config::load(&config) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        let seed = seeds.and_then(|s| s.first().copied()).unwrap_or(0);
        let checks = selfcheck::run_all(seed);
        for c in &checks {
            println!("{}", c.line());
        }
        return if checks.iter().all(|c| c.passed) {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        };
    }
    match run(&config, figure, agent, seeds, iterations, out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
