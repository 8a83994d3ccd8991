use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amsqueeze::config::{ConfigError, KvConfig};
use amsqueeze::experiments::{self, Command, ExperimentConfig, ExperimentError};
use amsqueeze::params::ParamError;
use amsqueeze::table::{Table, TableError};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

/// Squeezed-light amplitude-modulation sensing: theory curves, Monte Carlo
/// sweeps, time-domain traces and fits.
#[derive(Debug, Parser)]
#[command(name = "amsqueeze", version)]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Variance repetitions per point (overrides run.reps).
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fisher information per photon against RBW for several squeezing levels.
    TheoryFig1d,
    /// Measured quantum advantage against squeezing at fixed RBW.
    SweepPhi,
    /// Measured quantum advantage against RBW, with a classical-noise fit.
    SweepRbw,
    /// Squeezed and antisqueezed spectra around the modulation frequency.
    TraceFig2a,
    /// Run the invariant checks; exits 1 if any fails.
    Validate,
    /// Free-form frequency-domain simulation.
    Simulate,
    /// Fit a sweep CSV written by sweep-phi or sweep-rbw.
    Fit {
        /// Input CSV.
        input: PathBuf,
    },
}

impl Cmd {
    fn kind(&self) -> Command {
        match self {
            Cmd::TheoryFig1d => Command::TheoryFig1d,
            Cmd::SweepPhi => Command::SweepPhi,
            Cmd::SweepRbw => Command::SweepRbw,
            Cmd::TraceFig2a => Command::TraceFig2a,
            Cmd::Validate => Command::Validate,
            Cmd::Simulate => Command::Simulate,
            Cmd::Fit { .. } => Command::Fit,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut kv = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ConfigError::Invalid {
                key: "--config".into(),
                message: format!("{}: {e}", path.display()),
            })?;
            KvConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => KvConfig::default(),
    };
    if let Some(seed) = cli.seed {
        kv.set("run.seed", seed);
    }
    if let Some(reps) = cli.reps {
        kv.set("run.reps", reps);
    }
    Ok(ExperimentConfig::from_kv(&kv, cli.command.kind())?)
}

fn write_table(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let file =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            table.write(io::BufWriter::new(file))?;
        }
        None => table.write(io::stdout().lock())?,
    }
    Ok(())
}

/// Writes a JSON summary next to the CSV, or to stderr without `--out`.
fn write_summary(json: &str, out: Option<&Path>, suffix: &str) -> Result<()> {
    match out {
        Some(path) => {
            let target = path.with_extension(suffix);
            fs::write(&target, format!("{json}\n"))
                .with_context(|| format!("writing {}", target.display()))?;
        }
        None => eprintln!("{json}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Cmd::TheoryFig1d => write_table(&experiments::theory_fig1d(&cfg)?, out)?,
        Cmd::SweepPhi => write_table(&experiments::sweep_phi(&cfg)?, out)?,
        Cmd::SweepRbw => {
            let (table, fit) = experiments::sweep_rbw(&cfg)?;
            write_table(&table, out)?;
            write_summary(&fit.to_json(), out, "fit.json")?;
        }
        Cmd::TraceFig2a => {
            let (table, summary) = experiments::trace_fig2a(&cfg)?;
            write_table(&table, out)?;
            let json = serde_json::to_string_pretty(&summary)?;
            write_summary(&json, out, "summary.json")?;
        }
        Cmd::Simulate => write_table(&experiments::simulate(&cfg)?, out)?,
        Cmd::Fit { input } => {
            let file =
                fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
            let table =
                Table::read(file).with_context(|| format!("reading {}", input.display()))?;
            let json = experiments::fit_table(&table, &cfg)?;
            match out {
                Some(path) => fs::write(path, format!("{json}\n"))?,
                None => println!("{json}"),
            }
        }
        Cmd::Validate => {
            let report = experiments::validate(&cfg)?;
            let mut stdout = io::stdout().lock();
            for c in &report.checks {
                writeln!(
                    stdout,
                    "{} {:<34} value={:<12.6} target={:<10} tol={:<10.3e} margin={:+.3}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.target,
                    c.tolerance,
                    c.margin()
                )?;
            }
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.is::<ConfigError>()
            || c.is::<ParamError>()
            || c.downcast_ref::<ExperimentError>()
                .is_some_and(ExperimentError::is_config)
    })
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<TableError>()
                .is_some_and(TableError::is_broken_pipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
