//! `fujita-lab`: experiment driver for the semilinear heat equation on model manifolds.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::output::Sink;

#[derive(Debug, Parser)]
#[command(name = "fujita-lab", version, about = "Blow-up and global existence experiments for u_t = Δu + u^p")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `threads`.
    #[arg(long, value_name = "N", env = "FUJITA_LAB_THREADS")]
    pub threads: Option<usize>,
    /// RNG seed; overrides `seed`.
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Formats to emit; overrides `output.formats`. Repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Volume criterion verdict for `problem.p`.
    ///
    /// Writes verdict.json. Exit status: 0 divergent (every solution blows up),
    /// 1 convergent (small data are global), 4 inconclusive.
    Classify(Common),
    /// One run of the semilinear solver from `problem.u0`.
    ///
    /// Writes outcome.json, history.csv (t, clock, sup_u, sup_frame, mass, dt) and
    /// profile.csv (t, r, u) holding the snapshots and the final profile.
    Simulate(Common),
    /// Brackets the critical exponent over `problem.p_range` with the amplitude ladder.
    ///
    /// Writes sweep.json and sweep.csv (p, amplitude, outcome, t_star, alpha,
    /// predicted_p_star). Exit 4 when the budget runs out or nothing is bracketed.
    Sweep(Common),
    /// Heat kernel at the pole, condition (H) ratios and condition (G).
    ///
    /// Writes heat_kernel.json and kernel.csv (t, r, P).
    HeatKernel(Common),
    /// Envelope ball, contraction sampling and the Picard fixed point.
    ///
    /// Writes picard.json and fixed_point.csv (t, r, u).
    Picard(Common),
    /// Nonexistence test function, its measured constants and the a(i) decay table.
    ///
    /// Writes certificate.json, phi.csv (r, t, phi) and decay.csv (r0, shells, a,
    /// integral, product).
    Certificate(Common),
    /// Phase diagram from sweep CSVs listed in `report.inputs`.
    ///
    /// Writes phase.json and phase.svg.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Self::Classify(c) => ("classify", c),
            Self::Simulate(c) => ("simulate", c),
            Self::Sweep(c) => ("sweep", c),
            Self::HeatKernel(c) => ("heat-kernel", c),
            Self::Picard(c) => ("picard", c),
            Self::Certificate(c) => ("certificate", c),
            Self::Report(c) => ("report", c),
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(out) = &common.out {
        cfg.output.directory = out.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !common.format.is_empty() {
        cfg.output.formats = common.format.clone();
    }
}

fn execute(command: &Command) -> Result<i32, CliError> {
    let (name, common) = command.parts();
    let (mut cfg, raw) = config::load(&common.config)?;
    apply_overrides(&mut cfg, common);
    let threads = match cfg.threads {
        Some(0) => return Err(CliError::validation("threads must be positive")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(CliError::numerical)?;
    let mut sink = Sink::new(&cfg.output.directory, &cfg.output.formats)?;
    sink.input(&common.config, &raw);
    sink.always_json("effective_config.json", &cfg)?;
    let result = pool.install(|| match command {
        Command::Classify(_) => commands::classify::run(&cfg, &mut sink),
        Command::Simulate(_) => commands::simulate::run(&cfg, &mut sink),
        Command::Sweep(_) => commands::sweep::run(&cfg, &mut sink),
        Command::HeatKernel(_) => commands::heat_kernel::run(&cfg, &mut sink),
        Command::Picard(_) => commands::picard::run(&cfg, &mut sink),
        Command::Certificate(_) => commands::certificate::run(&cfg, &mut sink),
        Command::Report(_) => commands::report::run(&cfg, &mut sink),
    });
    sink.finish(name, cfg.seed)?;
    result
}

/// Parses `argv`, runs the subcommand and returns the exit code. Errors go to stderr as
/// a JSON object.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err =
                CliError::validation(e.kind().as_str().unwrap_or("invalid arguments")).with_details(e.to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
