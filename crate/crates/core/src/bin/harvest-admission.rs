use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use harvest_admission::csv::fmt_real;
use harvest_admission::{parse_config, run_experiment, Algorithm, ExperimentKind};

#[derive(Parser)]
#[command(
    version,
    about = "Admission control for an energy-harvesting access point"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Option<ExperimentKind>,
        /// Replace the seed list; repeat for several seeds.
        #[arg(long)]
        seed: Vec<u64>,
        /// Training steps per run.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Regen,
    Online,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Regen => Algorithm::Regenerative,
            AlgorithmArg::Online => Algorithm::EveryStep,
        }
    }
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        experiment,
        seed,
        steps,
        out_dir,
        algorithm,
    } = Cli::parse().command;
    let mut cfg = match parse_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(kind) = experiment {
        if kind != cfg.experiment {
            cfg.experiment = kind;
            cfg.sweep = None;
        }
    }
    if !seed.is_empty() {
        cfg.seeds = seed;
    }
    if let Some(n) = steps {
        cfg.learn.total_steps = n;
    }
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    if let Some(a) = algorithm {
        cfg.learn.algorithm = a.into();
    }
    let cfg = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match run_experiment(&cfg) {
        Ok(report) => {
            println!("wrote {}", report.output_dir.display());
            for s in &report.summary {
                let value = s
                    .sweep_value
                    .map(fmt_real)
                    .unwrap_or_else(|| "-".to_owned());
                let get = |k: &str| s.get(k).map(|m| fmt_real(m.mean)).unwrap_or_default();
                println!(
                    "value {value}: psi learned {} (exact {}), greedy {}, optimal {}",
                    get("psi_learned_mc"),
                    get("psi_learned_exact"),
                    get("psi_greedy_exact"),
                    get("psi_star"),
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
