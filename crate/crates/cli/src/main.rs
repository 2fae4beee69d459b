use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orl_cli::commands;
use orl_cli::config::{resolve_seed, PipelineConfig};
use orl_cli::CliError;

#[derive(Parser)]
#[command(
    name = "orl",
    about = "Offline-RL design selection pipeline: collect logged data once, \
             then train, evaluate, and select state spaces and rewards offline."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the online agent and log the interaction dataset (live env).
    Collect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured episode count.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train one offline policy for a configured (state space, reward) pair.
    TrainOffline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        state_space: String,
        #[arg(long)]
        reward: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run off-policy estimators for a saved policy over a dataset.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Artifact base path (without .qnet/.json extension).
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        reward: String,
        /// Comma list from: is, wis, dm, dr.
        #[arg(long, default_value = "is,wis,dm,dr")]
        estimators: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank the configured candidate state spaces by OPE.
    SelectState {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank the configured candidate rewards by best/worst separability.
    SelectReward {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        best: PathBuf,
        #[arg(long)]
        worst: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Ground-truth rollout of a saved policy (live env; audit only).
    AuditOnline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::PrintConfig { config } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::Collect { config, seed, episodes } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let path = commands::cmd_collect(&config, seed, episodes)?;
            println!("dataset: {}", path.display());
            Ok(())
        }
        Command::TrainOffline { config, dataset, state_space, reward, seed } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let base = commands::cmd_train_offline(&config, &dataset, &state_space, &reward, seed)?;
            println!("policy: {}", base.display());
            Ok(())
        }
        Command::Evaluate { config, dataset, policy, reward, estimators, seed } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let results =
                commands::cmd_evaluate(&config, &dataset, &policy, &reward, &estimators, seed)?;
            for r in &results {
                println!("{:<4} {:<30} {}", r.estimator, r.policy_id, r.value);
            }
            Ok(())
        }
        Command::SelectState { config, dataset, seed, jobs } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let path = commands::cmd_select_state(&config, &dataset, seed, jobs)?;
            println!("report: {}", path.display());
            Ok(())
        }
        Command::SelectReward { config, dataset, best, worst, seed, jobs } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let path = commands::cmd_select_reward(&config, &dataset, &best, &worst, seed, jobs)?;
            println!("report: {}", path.display());
            Ok(())
        }
        Command::AuditOnline { config, policy, episodes, seed } => {
            let config = PipelineConfig::load_or_default(config.as_deref())?;
            let seed = resolve_seed(seed, &config)?;
            let returns = commands::cmd_audit_online(&config, &policy, episodes, seed)?;
            let mean = returns.iter().sum::<f64>() / returns.len() as f64;
            println!("mean return over {} episodes: {}", returns.len(), mean);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits; true parse errors
            // are usage errors (exit 1).
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
