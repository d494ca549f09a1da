use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbm::config::{parse_overrides, RunConfig};
use lbm::runner;
use lbm::Result;

#[derive(Parser)]
#[command(name = "lbm", version, about = "Latent bridge matching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a drift network and write a checkpoint and loss curve
    Train(RunArgs),
    /// Translate a held-out batch with a checkpoint and score it
    Sample(RunArgs),
    /// Sweep sigma, lambda, steps or timestep-dist
    Ablate(RunArgs),
    /// Compare the closed-form Gaussian drift with a Monte-Carlo estimate
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file of key=value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides such as --sigma=0.1
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let text = args.config.as_ref().map(std::fs::read_to_string).transpose()?;
    RunConfig::resolve(text.as_deref(), &parse_overrides(&args.overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = resolve(&a)?;
            let r = runner::run_train(&cfg)?;
            println!(
                "trained {} iterations in {:.2?}; final loss {}",
                r.iterations(),
                r.wall_clock,
                r.total.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Sample(a) => {
            let cfg = resolve(&a)?;
            for m in runner::run_sample(&cfg)?.metrics {
                println!("{} = {}", m.name, m.value);
            }
        }
        Command::Ablate(a) => {
            let cfg = resolve(&a)?;
            let rows = runner::run_ablation(&cfg)?;
            println!("wrote {} rows to {}", rows.len(), cfg.out_dir.join("sweep.csv").display());
        }
        Command::Oracle(a) => {
            let cfg = resolve(&a)?;
            let rows = runner::run_oracle_check(&cfg)?;
            let over = rows.iter().filter(|r| r.deviation() > 3.0 * r.stderr).count();
            println!(
                "wrote {} rows to {}; {over} beyond 3 stderr",
                rows.len(),
                cfg.out_dir.join("oracle.csv").display()
            );
        }
    }
    Ok(())
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
