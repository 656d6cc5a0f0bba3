use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "gendiag",
    version,
    about = "Convergence diagnostics for MCMC chains over arbitrary state spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sampler scenario and write its chains as NDJSON.
    Simulate(SimulateArgs),
    /// Map chains to the real line and report ESS and PSRF.
    Diag(DiagArgs),
    /// Write the mapped traceplot as CSV and/or SVG.
    Traceplot(TraceplotArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// m1, m2, m3, m4, synthetic-binary or synthetic-partition.
    #[arg(long, conflicts_with = "config")]
    pub scenario: Option<String>,
    /// JSON scenario file: a builtin name, a full sampler or synthetic spec,
    /// or a metadata sidecar written by an earlier run.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Overrides the seed from the config file. Defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iterations per chain, counting the start.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Number of chains (synthetic scenarios only).
    #[arg(long)]
    pub chains: Option<usize>,
    /// Freeze chain 0 (synthetic scenarios only).
    #[arg(long)]
    pub trapped: bool,
    /// Output NDJSON path. A `<path>.meta.json` sidecar is written next to it.
    #[arg(short = 'o', long = "output")]
    pub output: std::path::PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapArg {
    Lanfear,
    Nn,
}

#[derive(Args)]
pub struct MapInputArgs {
    /// Input chains, NDJSON.
    pub input: std::path::PathBuf,
    /// euclidean, hamming, mh or table:PATH (CSV `i,j,distance` over pool indices).
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    #[arg(long, value_enum, default_value = "nn")]
    pub map: MapArg,
    /// Reference state (JSON) for the lanfear map.
    #[arg(long)]
    pub reference: Option<std::path::PathBuf>,
    /// Pool index at which the nearest-neighbour tour starts.
    #[arg(long, conflicts_with = "random_start")]
    pub start_index: Option<usize>,
    /// Draw the tour start uniformly from the pool with this seed.
    #[arg(long)]
    pub random_start: Option<u64>,
    /// Draws dropped from the head of every chain before pooling.
    #[arg(long, default_value_t = 0)]
    pub burn_in: usize,
    /// Target and proposal for `--distance mh`: a builtin sampler name.
    #[arg(long, conflicts_with = "config")]
    pub scenario: Option<String>,
    /// Target and proposal for `--distance mh`: a scenario JSON file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct DiagArgs {
    #[command(flatten)]
    pub input: MapInputArgs,
    #[arg(long)]
    pub no_ess: bool,
    #[arg(long)]
    pub no_psrf: bool,
    /// Report path; stdout when absent.
    #[arg(short = 'o', long = "output")]
    pub output: Option<std::path::PathBuf>,
    #[arg(long)]
    pub csv: Option<std::path::PathBuf>,
    #[arg(long)]
    pub svg: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct TraceplotArgs {
    #[command(flatten)]
    pub input: MapInputArgs,
    /// CSV path; the CSV goes to stdout when neither --csv nor --svg is given.
    #[arg(long)]
    pub csv: Option<std::path::PathBuf>,
    #[arg(long)]
    pub svg: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Diag(a) => commands::diag(&a),
        Command::Traceplot(a) => commands::traceplot(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
