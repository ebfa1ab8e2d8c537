use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epmem::env::EnvConfig;
use epmem::harness::{self, Algo, RunConfig};
use epmem::verify::{self, Suite};

/// Episodic-memory reinforcement learning experiments.
#[derive(Debug, Parser)]
#[command(name = "epmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train learners on the secret informant problem and write CSV metrics.
    Train(TrainArgs),
    /// Run self-checks against brute-force references.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Episodic,
    Gru,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Reservoir,
    Gradients,
    Nets,
    Env,
    All,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "episodic")]
    algo: AlgoArg,
    /// Chain length (informative plus uninformative states).
    #[arg(long, default_value_t = 10)]
    length: usize,
    /// Number of actions; action 1 moves forward along the chain.
    #[arg(long, default_value_t = 3)]
    actions: usize,
    #[arg(long, default_value_t = 1)]
    decisions: usize,
    /// Memory capacity (episodic only, default 1).
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long, default_value_t = 25_000)]
    episodes: usize,
    /// Learning rate (default 0.005 episodic, 0.00078125 gru).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Episodes per CSV row.
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    /// Discount used for learning (gru only, default 0.9).
    #[arg(long)]
    gamma: Option<f64>,
    /// Entropy bonus weight (gru only, default 0.0005).
    #[arg(long)]
    entropy: Option<f64>,
    #[arg(long, default_value_t = 10)]
    hidden: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write one row per episode.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

impl TrainArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            algo: match self.algo {
                AlgoArg::Episodic => Algo::Episodic,
                AlgoArg::Gru => Algo::Gru,
            },
            env: EnvConfig {
                length: self.length,
                actions: self.actions,
                decisions: self.decisions,
                max_steps: self.max_steps,
            },
            memory: self.memory,
            episodes: self.episodes,
            learning_rate: self.lr,
            seed: self.seed,
            repetitions: self.reps,
            window: self.window,
            gamma: self.gamma,
            entropy: self.entropy,
            hidden: self.hidden,
            out_dir: self.out_dir.clone(),
            raw: self.raw,
        }
    }
}

fn train(args: &TrainArgs) -> ExitCode {
    let config = args.run_config();
    match harness::run(&config) {
        Ok(outputs) => {
            for out in outputs {
                let tail = harness::tail_return(&out.episodes, 1000.min(out.episodes.len()));
                println!(
                    "rep {} seed {}: final mean return {tail:.4} -> {}",
                    out.repetition,
                    out.seed,
                    out.csv.display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn verify(args: &VerifyArgs) -> ExitCode {
    let suite = match args.suite {
        SuiteArg::Reservoir => Suite::Reservoir,
        SuiteArg::Gradients => Suite::Gradients,
        SuiteArg::Nets => Suite::Nets,
        SuiteArg::Env => Suite::Env,
        SuiteArg::All => Suite::All,
    };
    match verify::run_suite(suite, args.seed) {
        Ok(report) => {
            println!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(args) => train(args),
        Command::Verify(args) => verify(args),
    }
}
