use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, Subcommand};

use betwise::betting::write_trace_csv;
use betwise::diagnostics::null_exceedance_simulation;
use betwise::harness::{
    emit_results, expand_methods, run_experiment, trace_run, win_rate, ExperimentConfig, SimBankConfig,
};
use betwise::{Error, RandomStream};

#[derive(Parser)]
#[command(name = "betwise", version, about = "Betting-based mean estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment grid and write CSV/JSON results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the round-by-round trace of one run as CSV.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        task: String,
        /// Method label, e.g. `ideal-kelly:lambda=1` or `approx-kelly:sim_172:lambda=1`.
        #[arg(long)]
        method: String,
        #[arg(long)]
        seed: usize,
        /// Learning rate for approx-kelly; defaults to the first eta in the config.
        #[arg(long)]
        eta: Option<f64>,
        /// Defaults to the largest T in the config.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Simulate wealth under a no-edge null and compare exceedance with alpha.
    NullCheck {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 300)]
        rounds: usize,
        #[arg(long, default_value_t = 0.5)]
        stake: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerate the real and simulator banks of a config.
    Banks {
        #[arg(long)]
        list: bool,
        /// Defaults to the shipped config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> betwise::Result<()> {
    match cli.command {
        Command::Run { config, output } => {
            let started = SystemTime::now();
            let cfg = ExperimentConfig::load(&config)?;
            let records = run_experiment(&cfg)?;
            let cells = win_rate(&records)?;
            let dir = output.unwrap_or_else(|| cfg.output.clone());
            emit_results(&records, &cells, &cfg, &dir, started)?;
            println!("{} runs, {} win-rate cells written to {}", records.len(), cells.len(), dir.display());
        }
        Command::Trace {
            config,
            task,
            method,
            seed,
            eta,
            rounds,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let trace = trace_run(&cfg, &task, &method, seed, eta, rounds)?;
            write_trace_csv(std::io::stdout().lock(), &trace).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
        Command::NullCheck {
            alpha,
            reps,
            rounds,
            stake,
            seed,
        } => {
            let r = null_exceedance_simulation(rounds, stake, alpha, reps, &mut RandomStream::new(seed))?;
            println!("rounds {rounds}, stake {stake}, alpha {alpha}, replications {reps}");
            println!("threshold 1/alpha = {}", 1.0 / alpha);
            println!("empirical exceedance {} ({} of {})", r.rate, r.exceedances, r.replications);
            println!("bound alpha + 3 sigma = {}", r.bound);
            println!("{}", if r.within_bound() { "within bound" } else { "ABOVE bound" });
        }
        Command::Banks { list, config } => {
            if !list {
                return Err(Error::Config("banks: nothing to do (pass --list)".into()));
            }
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default_config(),
            };
            let real = cfg.real_specs()?;
            println!("real bank ({} targets):", real.len());
            for s in &real {
                let m = s.moments();
                println!("  {:<16} {:<18} mean {:.6} var {:.6}", s.label(), s.family_name(), m.mean, m.variance);
            }
            println!("sim banks ({}):", cfg.sim_banks.len());
            for (name, bank) in &cfg.sim_banks {
                let source = match bank {
                    SimBankConfig::Analytic { .. } => "analytic",
                    SimBankConfig::Sampled { .. } => "sampled",
                    SimBankConfig::External { .. } => "external",
                };
                println!("  {:<16} {:<9} {} experts", name, source, cfg.sim_bank_size(name)?);
            }
            println!("methods:");
            for m in expand_methods(&cfg) {
                println!("  {}", m.label());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
