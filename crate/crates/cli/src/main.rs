use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsv_core::experiment::{run_command, CommandSpec, ExperimentConfig, ExperimentError, RunOptions, SCHEMA_VERSION};

/// Simulate, verify and analyse entangled-state experiments from a config.
#[derive(Parser)]
#[command(name = "qsvlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification tests and certify the infidelity.
    Verify(Common),
    /// Repeat verification runs and estimate the fidelity.
    Estimate(Common),
    /// Sweep the number of tests and fit the scaling exponent.
    Scaling(Common),
    /// Compute the CHSH value of a coincidence-count table.
    Chsh {
        #[command(flatten)]
        common: Common,
        /// Count table to analyse; replaces the config's table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run a tomography convergence study.
    Tomography(Common),
    /// Tune a simulated device with QSV or tomography feedback.
    Tune(Common),
    /// Compare QSV and tomography resource costs on one source.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` or `./out`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Overrides the trial or repetition count.
    #[arg(long)]
    trials: Option<usize>,
    /// Enables test-harness features.
    #[arg(long)]
    test_mode: bool,
    /// Adds trace-oracle columns to outputs; needs --test-mode.
    #[arg(long)]
    oracle_columns: bool,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Verify(c) => ("verify", c),
            Command::Estimate(c) => ("estimate", c),
            Command::Scaling(c) => ("scaling", c),
            Command::Chsh { common, .. } => ("chsh", common),
            Command::Tomography(c) => ("tomography", c),
            Command::Tune(c) => ("tune", c),
            Command::Compare(c) => ("compare", c),
        }
    }
}

fn load(command: &Command) -> Result<(ExperimentConfig, PathBuf), ExperimentError> {
    let (name, common) = command.parts();
    let (mut config, base_dir) = match (&common.config, command) {
        (Some(path), _) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (ExperimentConfig::from_file(path)?, base)
        }
        // a bare table needs no config
        (None, Command::Chsh { table: Some(_), .. }) => {
            let config = ExperimentConfig {
                schema_version: SCHEMA_VERSION,
                seed: 0,
                delta: 0.05,
                output: None,
                strategy: None,
                source: None,
                run: CommandSpec::Chsh { table: None, counts_per_setting: None },
            };
            (config, PathBuf::new())
        }
        (None, _) => return Err(ExperimentError::Config("--config is required".into())),
    };
    if config.run.name() != name {
        return Err(ExperimentError::Config(format!(
            "run.command: config describes `{}` but `{name}` was invoked",
            config.run.name()
        )));
    }
    if let Command::Chsh { table: Some(t), .. } = command {
        let cwd = std::env::current_dir().unwrap_or_default();
        config.run = CommandSpec::Chsh { table: Some(cwd.join(t)), counts_per_setting: None };
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.override_trials(trials);
    }
    config.validate()?;
    Ok((config, base_dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, base_dir) = match load(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let (_, common) = cli.command.parts();
    let out_dir = common.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions { out_dir, base_dir, test_mode: common.test_mode, oracle_columns: common.oracle_columns };
    match run_command(&config, &opts) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report["result"]).expect("report serializes"));
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ (ExperimentError::Config(_) | ExperimentError::Parse(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
