use clap::{Args, Parser, Subcommand};
use irmx_cli::checks::InjectedBug;
use irmx_cli::commands;
use irmx_cli::config::{self, ConfigArgs, Experiment};
use irmx_cli::error::CliError;

/// Deterministic workbench for invariance-penalized risk minimization.
#[derive(Debug, Parser)]
#[command(name = "irmx", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Linear regression benchmark across simulated environments
    Sem(ConfigArgs),
    /// Classification task with a spurious shortcut feature
    Cls(ConfigArgs),
    /// Verify analytic identities and gradients against oracles
    Check(CheckArgs),
    /// Record the training tail of the penalized classification runs
    Trace(ConfigArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Deliberately break a property to demonstrate the suite catches it.
    #[arg(long, hide = true, value_name = "PROPERTY")]
    inject_bug: Option<String>,
}

fn run(cli: Cli, irmx_out: Option<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Sem(args) => {
            let cfg = config::resolve(Experiment::Sem, &args, irmx_out)?;
            commands::cmd_sem(&cfg)?;
        }
        Command::Cls(args) => {
            let cfg = config::resolve(Experiment::Cls, &args, irmx_out)?;
            commands::cmd_cls(&cfg)?;
        }
        Command::Trace(args) => {
            let cfg = config::resolve(Experiment::Trace, &args, irmx_out)?;
            commands::cmd_trace(&cfg)?;
        }
        Command::Check(args) => {
            let cfg = config::resolve(Experiment::Check, &args.cfg, irmx_out)?;
            let inject = match &args.inject_bug {
                Some(token) => Some(InjectedBug::parse(token).ok_or_else(|| {
                    CliError::Config(format!("unknown property for --inject-bug: {token:?}"))
                })?),
                None => None,
            };
            commands::cmd_check(&cfg, inject)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let irmx_out = std::env::var("IRMX_OUT").ok();
    if let Err(err) = run(cli, irmx_out) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
