use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use voltguard::agents::Algorithm;
use voltguard_harness::commands;
use voltguard_harness::{load_config, HarnessError};

#[derive(Parser)]
#[command(name = "voltguard", version, about = "Voltage-constrained EV charging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents and write metrics.csv and checkpoint.txt per run.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to experiment.algorithms from the config.
        #[arg(long, value_delimiter = ',')]
        algorithm: Vec<Algorithm>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of one checkpoint on the held-out days.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained runs side by side and write a comparison table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Output directory of a previous `train`.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_delimiter = ',')]
        algorithm: Vec<Algorithm>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate per beta; write VVA histograms and VVN totals.
    BetaSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the power flow for a case and an optional injections CSV.
    PowerflowCheck {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        injections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write seeded synthetic scenario days for the configured stations.
    GenerateScenarios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn or_default<T: Clone>(given: Vec<T>, default: &[T]) -> Vec<T> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, algorithm, seeds, out } => {
            let cfg = load_config(&config)?;
            let e = &cfg.config.experiment;
            let runs = commands::cmd_train(&cfg, &or_default(algorithm, &e.algorithms), &or_default(seeds, &e.seeds), &out)?;
            for r in runs {
                let last = r.outcome.metrics.last();
                println!(
                    "{} seed {}: {} episodes, final reward {}",
                    r.algorithm,
                    r.seed,
                    r.outcome.metrics.len(),
                    last.map_or("n/a".into(), |m| format!("{:.3}", m.reward))
                );
            }
        }
        Command::Evaluate { config, checkpoint, seed, out } => {
            let cfg = load_config(&config)?;
            let rep = commands::cmd_evaluate(&cfg, &checkpoint, seed, &out)?;
            let t = rep.totals;
            println!(
                "steps {} cost {:.2} ud {:.2} vvn {} vva {:.4} max step vva {:.4}",
                t.steps, t.cost, t.ud, t.vvn, t.vva, t.max_step_vva
            );
        }
        Command::Compare { config, runs, algorithm, seeds, out } => {
            let cfg = load_config(&config)?;
            let e = &cfg.config.experiment;
            let rep = commands::cmd_compare(&cfg, &runs, &or_default(algorithm, &e.algorithms), &or_default(seeds, &e.seeds), &out)?;
            print!("{}", rep.table());
        }
        Command::BetaSweep { config, betas, seeds, out } => {
            let cfg = load_config(&config)?;
            let e = &cfg.config.experiment;
            let points = commands::cmd_beta_sweep(&cfg, &or_default(betas, &e.betas), &or_default(seeds, &e.seeds), &out)?;
            for p in points {
                println!("beta {}: mean vvn {:.1}, max step vva {:.4}", p.beta, p.mean_vvn(), p.max_step_vva());
            }
        }
        Command::PowerflowCheck { case, injections, out } => {
            let res = commands::cmd_powerflow_check(&case, injections.as_deref(), out.as_deref())?;
            print!("{}", commands::voltages_csv(&res));
        }
        Command::GenerateScenarios { config, days, seed, out } => {
            let cfg = load_config(&config)?;
            let data = commands::cmd_generate(&cfg, days, seed, &out)
                .with_context(|| format!("writing scenarios to {}", out.display()))?;
            println!("wrote {} scenario(s) to {}", data.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<HarnessError>()).map_or(1, HarnessError::exit_code);
            ExitCode::from(code)
        }
    }
}
