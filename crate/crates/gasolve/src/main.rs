use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gasolve::commands;
use gasolve::config::Config;
use gasolve::Result;

#[derive(Parser)]
#[command(name = "gasolve", version, about = "Learnable multistep samplers for probability-flow ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gs,
    Gas,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` or the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `student.mode`.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate paired prior/teacher samples.
    Teacher {
        #[command(flatten)]
        common: Common,
    },
    /// Train a student solver on a teacher dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file; defaults to `<out>/dataset.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate the EMA parameters of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to `<out>/checkpoint.txt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Measure empirical convergence orders of the fixed solvers.
    OrderCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate over the `sweep.w_adv` grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(Config, PathBuf)> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.set("seed", s.to_string())?;
    }
    if let Some(m) = common.mode {
        cfg.set("student.mode", if matches!(m, ModeArg::Gs) { "gs" } else { "gas" })?;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.get("output.dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Teacher { common } => {
            let (cfg, out) = load(&common)?;
            commands::teacher(&cfg, &out)
        }
        Command::Train { common, data } => {
            let (cfg, out) = load(&common)?;
            let data = data.unwrap_or_else(|| out.join(commands::DATASET_FILE));
            commands::train(&cfg, &data, &out).map(|o| o.checkpoint)
        }
        Command::Eval { common, data, checkpoint } => {
            let (cfg, out) = load(&common)?;
            let data = data.unwrap_or_else(|| out.join(commands::DATASET_FILE));
            let ckpt = checkpoint.unwrap_or_else(|| out.join(commands::CHECKPOINT_FILE));
            commands::eval(&cfg, &ckpt, &data, &out)
        }
        Command::OrderCheck { common } => {
            let (cfg, out) = load(&common)?;
            commands::order_check(&cfg, &out)
        }
        Command::Sweep { common, data } => {
            let (cfg, out) = load(&common)?;
            let data = data.unwrap_or_else(|| out.join(commands::DATASET_FILE));
            commands::sweep(&cfg, &data, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
