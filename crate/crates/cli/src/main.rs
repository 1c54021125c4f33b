use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dacoop_cli::commands::{
    cmd_compare, cmd_eval, cmd_replay, cmd_train, CompareArgs, EvalArgs, FINAL_EVAL_EPISODES,
};
use dacoop_cli::CliError;
use dacoop_core::trainer::Method;

#[derive(Parser)]
#[command(name = "dacoop", version, about = "Cooperative pursuit with learned potential-field parameters")]
struct Cli {
    /// Worker threads for evaluation and comparisons; 0 picks the core count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method as described by a run config.
    Train { config: PathBuf },
    /// Greedy evaluation of a checkpoint, optionally swept over arenas and
    /// pursuer counts.
    Eval {
        checkpoint: PathBuf,
        /// Arena files or bundled names, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "train_fig5a")]
        arena: Vec<String>,
        /// Pursuer counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        pursuers: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run config supplying scenario and potential-field settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for eval.json and eval_table.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the first evaluation episode as a trajectory CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render a trajectory CSV as SVG.
    Replay {
        csv: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Arena file or bundled name the episode ran in.
        #[arg(long, default_value = "train_fig5a")]
        arena: String,
    },
    /// Train and score several methods over several seeds.
    Compare {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "dacoop,vanilla_d3qn,modified_apf")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = FINAL_EVAL_EPISODES)]
        eval_episodes: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Train { config } => {
            let s = cmd_train(&config)?;
            println!(
                "{} seed {}: {} episodes, best success {:.3}",
                s.method, s.seed, s.episodes, s.best_success_rate
            );
        }
        Command::Eval {
            checkpoint,
            arena,
            pursuers,
            episodes,
            seed,
            config,
            out,
            trace,
        } => {
            let report = cmd_eval(&EvalArgs {
                checkpoint,
                arenas: arena,
                pursuers,
                episodes,
                seed,
                config,
                out_dir: out,
                trace,
            })?;
            print!("{}", report.table());
        }
        Command::Replay { csv, output, arena } => cmd_replay(&csv, &output, &arena)?,
        Command::Compare {
            config,
            methods,
            seeds,
            eval_episodes,
        } => {
            let methods = methods
                .iter()
                .map(|m| m.parse::<Method>().map_err(|e| CliError::Config(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let report = cmd_compare(&CompareArgs {
                config,
                methods,
                seeds,
                eval_episodes,
            })?;
            for m in &report.methods {
                println!(
                    "{:<14} seeds {} final success {:.3} curve mean {:.3}",
                    m.method, m.seeds, m.mean_final_success_rate, m.mean_curve
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DACOOP_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
