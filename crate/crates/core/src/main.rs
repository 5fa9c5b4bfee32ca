use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adelfl::harness::{
    compare_methods, run_method, verify_lemmas, write_compare, write_json, write_rounds,
    write_schedule, ExperimentConfig, Format, Method, RunOverrides, Scenario, VerifySpec,
};
use adelfl::scheduler::optimize_schedule;
use adelfl::{Error, Result};

#[derive(Parser)]
#[command(name = "adelfl", version, about = "Deadline-aware layer-wise federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Tabular output format.
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise deadlines and batch scale; writes schedule.json.
    OptimizeSchedule(Common),
    /// Run the configured method; writes rounds.csv and model.json.
    Simulate(Common),
    /// Monte Carlo checks of the analysis; writes verify.json.
    VerifyLemmas {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Compare methods over seeds; writes compare.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; the configuration's list when absent.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated methods; the configuration's list when absent.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    Ok(config)
}

/// Either a `verify` section of a larger document or a bare spec.
fn load_verify_spec(path: &Path) -> Result<VerifySpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let section = value.get("verify").cloned().unwrap_or(value);
    serde_json::from_value(section).map_err(|e| Error::Config(e.to_string()))
}

enum Outcome {
    Done,
    VerificationFailed,
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::OptimizeSchedule(common) => {
            let config = load(&common)?;
            let scenario = Scenario::build(&config, config.seed)?;
            let solution = optimize_schedule(
                &config.search_spec(config.t_max),
                &scenario.clients,
                scenario.analysis()?,
                config.seed,
            )?;
            write_schedule(&common.out, &solution)?;
        }
        Command::Simulate(common) => {
            let config = load(&common)?;
            let scenario = Scenario::build(&config, config.seed)?;
            let result = run_method(
                &config,
                &scenario,
                config.method,
                config.t_max,
                config.seed,
                &RunOverrides::default(),
            )?;
            write_rounds(&common.out, &result.records, common.format)?;
            write_json(&common.out.join("model.json"), &result.final_model)?;
            if let Some(solution) = &result.schedule {
                write_schedule(&common.out, solution)?;
            }
        }
        Command::VerifyLemmas { common, trials } => {
            let spec = load_verify_spec(&common.config)?;
            fs::create_dir_all(&common.out)?;
            let report = verify_lemmas(&spec, trials, common.seed.unwrap_or(0))?;
            write_json(&common.out.join("verify.json"), &report)?;
            if !report.passed {
                return Ok(Outcome::VerificationFailed);
            }
        }
        Command::Compare { common, seeds, methods } => {
            let config = load(&common)?;
            let seeds = if seeds.is_empty() { config.seeds.clone() } else { seeds };
            let methods = if methods.is_empty() { config.methods.clone() } else { methods };
            let rows = compare_methods(&config, &methods, &seeds)?;
            write_compare(&common.out, &rows, common.format)?;
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => {
            eprintln!("verification failed; see verify.json");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config() {
                2
            } else if e.is_infeasibility() {
                3
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}
