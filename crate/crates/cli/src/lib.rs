//! Command implementations behind the `macroplace` binary.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "macroplace",
    version,
    about = "Sequential macro placement with a graph policy trained by PPO",
    after_help = "Any config key can be overridden as `--section.key value`, e.g. `--train.rounds 5`.\n\
                  The config file defaults to $MACROPLACE_CONFIG when --config is absent."
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ablation preset: gat_ri, gat_no_ri, gcn_ri or gcn_no_ri.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print benchmark statistics.
    Stats { aux: Option<PathBuf> },
    /// Score a placement: hpwl, congestion, density and overlaps.
    Evaluate { aux: Option<PathBuf>, pl: Option<PathBuf> },
    /// Train a policy and write checkpoints and a JSONL log.
    Train { aux: Option<PathBuf> },
    /// Place a design with a trained policy.
    Place {
        aux: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write an SVG of the result.
        #[arg(long)]
        svg: bool,
    },
    /// Draw a layout as SVG.
    Render {
        aux: Option<PathBuf>,
        pl: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Parse `args` (without the program name), run, and return the exit code.
pub fn run(args: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match try_run(args, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn try_run(args: Vec<String>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (args, overrides) = config::split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once("macroplace".to_string()).chain(args)) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            write!(stdout, "{e}").map_err(|e| CliError::Other(e.to_string()))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            return Err(CliError::Usage(text.trim_start_matches("error: ").trim_end().to_string()));
        }
    };
    let mut overrides = overrides;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let file = config::config_path(cli.config);
    let mut config = RunConfig::load(file.as_deref(), cli.preset.as_deref(), &overrides)?;
    if let Some(dir) = cli.out_dir {
        config.paths.out_dir = dir;
    }
    let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
        if v.is_some() {
            *slot = v;
        }
    };
    match cli.command {
        Command::Stats { aux } => {
            set(&mut config.paths.aux, aux);
            commands::cmd_stats(&config, stdout)
        }
        Command::Evaluate { aux, pl } => {
            set(&mut config.paths.aux, aux);
            set(&mut config.paths.pl, pl);
            commands::cmd_evaluate(&config, stdout).map(|_| ())
        }
        Command::Train { aux } => {
            set(&mut config.paths.aux, aux);
            commands::cmd_train(&config, stdout)
        }
        Command::Place { aux, checkpoint, svg } => {
            set(&mut config.paths.aux, aux);
            set(&mut config.paths.checkpoint, checkpoint);
            commands::cmd_place(&config, svg, stdout).map(|_| ())
        }
        Command::Render { aux, pl, output } => {
            set(&mut config.paths.aux, aux);
            set(&mut config.paths.pl, pl);
            commands::cmd_render(&config, output.as_deref(), stdout).map(|_| ())
        }
    }
}
