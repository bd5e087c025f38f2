mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Variance checks, approximation audits and SGD experiments for U-statistic
/// importance-weighted variational inference.
#[derive(Debug, Parser)]
#[command(name = "uwise", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Objective and gradient variance orderings, Hoeffding bounds.
    Variance(Common),
    /// Worked example, bound-chain sweep and gap along a trajectory.
    ApproxAudit(Common),
    /// SGD grid over learning rates and seeds.
    Optimize(Common),
    /// Tabulate zeta_c for c = 0..m.
    Zeta(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads: a positive integer or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
    /// Also write the index-set collections that were used.
    #[arg(long)]
    dump_sets: bool,
}

#[derive(Debug, Clone, Copy)]
enum Threads {
    Auto,
    Fixed(usize),
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s == "auto" {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(Threads::Fixed(k)),
        _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
    }
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Passed,
    Failed,
}

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub dump_sets: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&Context, Option<&std::path::Path>) -> anyhow::Result<Outcome>) =
        match &cli.command {
            Command::Variance(c) => (c, commands::variance::run),
            Command::ApproxAudit(c) => (c, commands::approx_audit::run),
            Command::Optimize(c) => (c, commands::optimize::run),
            Command::Zeta(c) => (c, commands::zeta::run),
        };
    if let Threads::Fixed(k) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(2);
    }
    let ctx = Context { seed: common.seed, out: common.out.clone(), dump_sets: common.dump_sets };
    match run(&ctx, common.config.as_deref()) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
