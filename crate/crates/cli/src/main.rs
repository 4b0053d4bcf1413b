//! `qkdsim`: run scenarios and write aggregate tables.
//!
//! Exit codes: 0 success, 1 scenario or output error, 2 usage error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use qkdsim_core::metrics::{export_csv, export_json, link_totals, write_key_events};
use qkdsim_core::topology::{parse_duration, preset_by_name, PRESET_NAMES};
use qkdsim_core::{aggregate, parse_scenario, run_with, ExportError, RunOptions, RunResult, Scenario, ScenarioError};

#[derive(Debug, Parser)]
#[command(name = "qkdsim", version, about = "Discrete-event simulator for switched QKD networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a scenario file.
    Validate {
        /// Scenario file (TOML).
        scenario: PathBuf,
    },
    /// Run a scenario file and write the aggregate tables.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        output: Output,
    },
    /// Run a built-in scenario by name.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        output: Output,
    },
    /// Run a scenario over consecutive seeds, one output directory per seed.
    Sweep {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// First seed of the range.
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Number of seeds.
        #[arg(long, default_value_t = 4)]
        count: u64,
        /// Worker threads (default: one per core).
        #[arg(long, short = 'j')]
        jobs: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Replace the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the simulated duration, e.g. 90s, 6m, 24h, 60d.
    #[arg(long, value_parser = parse_duration)]
    duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Output {
    /// Output directory.
    #[arg(long, env = "QKDSIM_OUT", default_value = "qkdsim-out")]
    out: PathBuf,
    /// Table format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write key_events.csv with the hex of every delivered key.
    #[arg(long)]
    dump_keys: bool,
    /// Also write the full run result as result.json.
    #[arg(long)]
    snapshot: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Scenario { path: String, source: ScenarioError },
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text).map_err(|source| CliError::Scenario {
        path: path.display().to_string(),
        source,
    })
}

fn apply(mut s: Scenario, o: &Overrides) -> Scenario {
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(d) = o.duration {
        s.duration = d;
    }
    s
}

fn simulate(s: &Scenario, out: &Output) -> RunResult {
    let opts = RunOptions {
        record_key_material: out.dump_keys,
        ..RunOptions::default()
    };
    run_with(s, &opts)
}

fn write_outputs(result: &RunResult, out: &Output, dir: &Path) -> Result<(), CliError> {
    let agg = aggregate(result);
    match out.format {
        Format::Csv => export_csv(&agg, dir)?,
        Format::Json => export_json(&agg, dir)?,
    };
    if out.dump_keys {
        let path = dir.join("key_events.csv");
        let file = File::create(&path).map_err(write_err(&path))?;
        write_key_events(result, BufWriter::new(file)).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    }
    if out.snapshot {
        let path = dir.join("result.json");
        fs::write(&path, result.to_json()).map_err(write_err(&path))?;
    }
    Ok(())
}

fn summary(result: &RunResult, prefix: &str, w: &mut impl Write) -> io::Result<()> {
    for t in link_totals(result) {
        writeln!(
            w,
            "{prefix}link_id={} blocks={} mean_skr={} mean_qber={}",
            t.link_id, t.blocks, t.mean_skr, t.mean_qber
        )?;
    }
    Ok(())
}

fn run_one(s: &Scenario, out: &Output) -> Result<(), CliError> {
    let result = simulate(s, out);
    write_outputs(&result, out, &out.out)?;
    summary(&result, "", &mut io::stdout().lock()).map_err(|e| CliError::Other(format!("stdout: {e}")))
}

fn sweep(s: &Scenario, first: u64, count: u64, jobs: Option<usize>, out: &Output) -> Result<(), CliError> {
    let last = first
        .checked_add(count)
        .ok_or_else(|| CliError::Other(format!("seed range {first}+{count} overflows")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let results: Vec<Result<(u64, RunResult), CliError>> = pool.install(|| {
        (first..last)
            .into_par_iter()
            .map(|seed| {
                let scenario = Scenario { seed, ..s.clone() };
                let result = simulate(&scenario, out);
                write_outputs(&result, out, &out.out.join(format!("seed-{seed}")))?;
                Ok((seed, result))
            })
            .collect()
    });
    let mut stdout = io::stdout().lock();
    for r in results {
        let (seed, result) = r?;
        summary(&result, &format!("seed={seed} "), &mut stdout).map_err(|e| CliError::Other(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "ok: {} nodes, {} links, {} maintenance windows",
                s.topology.nodes.len(),
                s.topology.links.len(),
                s.maintenance.len()
            );
            Ok(())
        }
        Command::Run {
            scenario,
            overrides,
            output,
        } => run_one(&apply(load(&scenario)?, &overrides), &output),
        Command::Preset {
            name,
            overrides,
            output,
        } => {
            let s = preset_by_name(&name).ok_or_else(|| CliError::Other(format!("unknown preset {name:?}")))?;
            run_one(&apply(s, &overrides), &output)
        }
        Command::Sweep {
            scenario,
            first_seed,
            count,
            jobs,
            output,
        } => sweep(&load(&scenario)?, first_seed, count, jobs, &output),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("qkdsim: {line}");
            ExitCode::FAILURE
        }
    }
}
