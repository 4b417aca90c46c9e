//! Thin command-line front end over [`pixprop::commands`].
//!
//! Every subcommand takes the same plumbing flags and resolves its
//! effective configuration in a fixed order: built-in defaults, then the
//! `--config` file, then each `--set key=value` in the order given, then
//! `--seed` / `--out`. Exit codes sort failures by family: 2 config,
//! 3 bad or stale data, 4 training divergence, 5 I/O.

use clap::{Args, Parser, Subcommand};
use pixprop::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_infer, cmd_train, with_workers};
use pixprop::config::{apply_overrides, load_config, RunConfig};
use pixprop::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pixprop", version, about = "Scale-aware pixel-wise object proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set train.epochs=5`; repeatable,
    /// applied in order after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (0 = one per core). Changes wall time, never output.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    Gen(Common),
    /// Train the two scale-specialist localizers and the confidence net.
    Train(Common),
    /// Run the proposal pipeline over a dataset.
    Infer(Common),
    /// Score proposals against dataset ground truth.
    Eval(Common),
    /// Compare the four accumulative pipeline variants.
    Ablate(Common),
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let loaded = load_config(common.config.as_deref())?;
    let mut config = apply_overrides(loaded, &common.set)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let (common, f): (&Common, fn(&RunConfig, &std::path::Path) -> Result<()>) =
        match &cli.command {
            Command::Gen(c) => (c, cmd_gen),
            Command::Train(c) => (c, cmd_train),
            Command::Infer(c) => (c, cmd_infer),
            Command::Eval(c) => (c, cmd_eval),
            Command::Ablate(c) => (c, cmd_ablate),
        };
    let config = resolve(common)?;
    let out = config.out.clone();
    with_workers(common.workers, || f(&config, &out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
