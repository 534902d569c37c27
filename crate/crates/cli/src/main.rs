//! `hybridseq`: train, evaluate and inspect HMM, LSTM and hybrid sequence
//! models from a JSON run config.

mod config;
mod data;
mod error;
mod inspect;
mod model;
mod sweep;
mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use hybridseq::interpret::TreeConfig;

use crate::config::ModelKind;
use crate::data::SplitName;
use crate::error::{CliError, CliResult};
use crate::inspect::{DataSource, VizArgs, VizMode};
use crate::sweep::{SweepArgs, SynthKind};

#[derive(Parser)]
#[command(name = "hybridseq", version, about = "Hybrid HMM-LSTM sequence models")]
struct Cli {
    /// Run config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random stage; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one config field by dotted path, e.g. `train.lr0=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Source {
    /// Split of the checkpoint's data to use.
    #[arg(long, default_value = "valid")]
    split: String,
    /// Read these files whole instead of a split.
    #[arg(long, value_name = "FILE")]
    data: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    HmmStates,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthArg {
    TextAb,
    TextUniform,
    TextHash,
    TextCode,
    Signal,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the configured model and write checkpoint, report and summary.
    Train,
    /// Mean per-symbol log-likelihood of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        /// Also write the full-precision result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Color text by HMM state or by k-means cluster of LSTM states.
    Viz {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Number of clusters in kmeans mode.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Number of leading symbols to render.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// HTML output file.
        #[arg(long)]
        out: PathBuf,
        /// Also print the rendering with terminal colors.
        #[arg(long)]
        ansi: bool,
    },
    /// Surrogate regression tree for one hidden dimension.
    Tree {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 20)]
        min_leaf: usize,
        /// Output prefix; writes `<out>.txt` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthArg,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a grid of (model, H, K) cells and merge their results.
    Sweep {
        /// Comma-separated model kinds.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        /// Comma-separated LSTM sizes.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        /// Comma-separated HMM state counts.
        #[arg(long, value_delimiter = ',')]
        states: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Source {
    fn resolve(&self, sets: &[String]) -> CliResult<DataSource> {
        Ok(DataSource { split: SplitName::parse(&self.split)?, files: self.data.clone(), sets: sets.to_vec() })
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let sets = &cli.sets;
    match cli.command {
        Cmd::Train => {
            let config = config::load(cli.config.as_deref(), sets, cli.seed)?;
            let report = train::cmd_train(&config)?;
            print!("{}{}", train::TABLE_HEADER, train::table_row(report.model, report.h, report.k, report.headline()));
            println!("wrote {}", config.output_dir.display());
        }
        Cmd::Eval { checkpoint, source, out } => {
            inspect::cmd_eval(&checkpoint, &source.resolve(sets)?, out.as_deref())?;
        }
        Cmd::Viz { checkpoint, source, mode, k, n, out, ansi } => {
            if n == 0 {
                return Err(CliError::config("--n: must be >= 1"));
            }
            let mode = match mode {
                ModeArg::HmmStates => VizMode::HmmStates,
                ModeArg::Kmeans => VizMode::Kmeans,
            };
            let args = VizArgs { mode, k, n, seed: cli.seed.unwrap_or(0), out, ansi };
            let shown = inspect::cmd_viz(&checkpoint, &source.resolve(sets)?, &args)?;
            eprintln!("rendered {shown} symbols to {}", args.out.display());
        }
        Cmd::Tree { checkpoint, source, dim, window, depth, min_leaf, out } => {
            let config = TreeConfig { window, max_depth: depth, min_leaf, ..TreeConfig::default() };
            inspect::cmd_tree(&checkpoint, &source.resolve(sets)?, dim, &config, &out)?;
        }
        Cmd::Synth { kind, length, out } => {
            let kind = match kind {
                SynthArg::TextAb => SynthKind::TextAb,
                SynthArg::TextUniform => SynthKind::TextUniform,
                SynthArg::TextHash => SynthKind::TextHash,
                SynthArg::TextCode => SynthKind::TextCode,
                SynthArg::Signal => SynthKind::Signal,
            };
            sweep::cmd_synth(kind, length, cli.seed.unwrap_or(0), &out)?;
        }
        Cmd::Sweep { models, hidden, states, out } => {
            let config = cli.config.ok_or_else(|| CliError::config("--config: sweep needs a base config"))?;
            let models = models.iter().map(|m| ModelKind::parse(m)).collect::<CliResult<Vec<_>>>()?;
            let cells = sweep::grid(&models, &hidden, &states)?;
            let args = SweepArgs { config, sets: sets.clone(), seed: cli.seed, out, threads: sweep::threads_from_env()? };
            let (table, failed) = sweep::cmd_sweep(&args, &cells)?;
            print!("{table}");
            if failed > 0 {
                return Err(CliError::numeric(format!("{failed} of {} sweep cells failed; see stderr.log in their directories", cells.len())));
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
