use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vuvc::experiment::{
    all_passed, coverage_report, evaluate_checkpoint, format_report, train, verify_theory, ExperimentConfig,
    RunManifest, SuiteConfig, TrainOptions,
};
use vuvc::Error;

const EXIT_VERDICT: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "vuvc", version, about = "Goal-conditioned curriculum RL experiments on point mazes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dot-path override such as `agent.gamma=0.95`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics, checkpoints and a manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from existing checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate the latest checkpoint of each seed and print JSON rows.
    Eval {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the exact entropy-increment checks; one JSON line per check.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional suite config (TOML) with instance counts.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corrupt the informative-goal offset to exercise error reporting.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Compare env steps to coverage thresholds across runs.
    CoverageReport {
        /// Manifest files or run directories.
        #[arg(required = true, num_args = 1..)]
        manifests: Vec<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(run: &RunArgs) -> vuvc::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&run.config)?.with_overrides(&run.overrides)?;
    if let Some(seed) = run.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &run.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> vuvc::Result<u8> {
    match cli.command {
        Command::Train { run, resume } => {
            let config = load_config(&run)?;
            let manifest = train(
                &config,
                TrainOptions {
                    resume,
                    stop_after: None,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(0)
        }
        Command::Eval { run } => {
            let config = load_config(&run)?;
            for &seed in &config.seeds {
                let report = evaluate_checkpoint(&config, seed)?;
                println!("{}", serde_json::json!({ "seed": seed, "report": report }));
            }
            Ok(0)
        }
        Command::VerifyTheory {
            seed,
            config,
            inject_fault,
        } => {
            let mut suite = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SuiteConfig {
                    seed,
                    ..SuiteConfig::default()
                },
            };
            suite.inject_fault |= inject_fault;
            let lines = verify_theory(&suite);
            for l in &lines {
                println!("{}", l.to_json_line());
            }
            Ok(if all_passed(&lines) { 0 } else { EXIT_VERDICT })
        }
        Command::CoverageReport { manifests, json } => {
            let loaded = manifests
                .iter()
                .map(|p| RunManifest::load_from(p))
                .collect::<vuvc::Result<Vec<_>>>()?;
            let report = coverage_report(&loaded).map_err(|e| Error::Config(e.to_string()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", format_report(&report));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_VERDICT),
            }
        }
    }
}
