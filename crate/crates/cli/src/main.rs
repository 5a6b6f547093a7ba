use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use riscov::runner::{self, ExperimentSpec, Mode};
use riscov::Error;

#[derive(Parser)]
#[command(
    name = "riscov",
    version,
    about = "Coverage and rate of RIS-assisted mmWave networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV and JSON results.
    Run(RunArgs),
    /// Check that a config parses and every sweep point validates.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bundled figure presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a bundled preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// analytic, mc or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as JSON.
    Show {
        name: String,
    },
}

const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(Error::InvalidParams(_) | Error::Config(_) | Error::Json(_) | Error::Scenario(_))
        )
    })
}

fn load(config: Option<&PathBuf>, preset: Option<&str>) -> anyhow::Result<ExperimentSpec> {
    match (config, preset) {
        (Some(path), _) => Ok(ExperimentSpec::from_path(path)?),
        (None, Some(name)) => runner::preset(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                runner::preset_names().join(", ")
            ))
            .into()
        }),
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    }
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut spec = load(args.config.as_ref(), args.preset.as_deref())?;
    if let Some(m) = args.mode {
        spec.mode = m.parse::<Mode>()?;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.trials {
        spec.n_trials = n;
    }
    let out = args
        .out
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let table = runner::run_experiment(&spec)?;
    print!("{table}");
    for p in &table.points {
        if let Some(t) = p.mc_tail_bound_w {
            eprintln!(
                "{}={}: interference beyond simulation disk ≤ {t:.3e} W (mean)",
                table.sweep_param, p.value
            );
        }
    }
    let (csv, json) = table
        .emit(&out)
        .with_context(|| format!("writing results to {}", out.display()))?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    if !table.converged() {
        for p in table.points.iter().filter(|p| !p.converged) {
            eprintln!(
                "quadrature did not converge at {}={}",
                table.sweep_param, p.value
            );
        }
        return Ok(ExitCode::from(EXIT_NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => ExperimentSpec::from_path(&config)
            .and_then(|s| s.resolve())
            .map(|ps| {
                println!("ok: {} sweep points", ps.len());
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
        Command::Presets { action } => match action {
            PresetAction::List => {
                for name in runner::preset_names() {
                    let spec = runner::preset(name).expect("listed preset exists");
                    println!(
                        "{name}\t{:?}\tsweep {} over {} values",
                        spec.metrics,
                        spec.sweep.param.name(),
                        spec.sweep.values.len()
                    );
                }
                Ok(ExitCode::SUCCESS)
            }
            PresetAction::Show { name } => load(None, Some(&name)).and_then(|s| {
                println!("{}", serde_json::to_string_pretty(&s)?);
                Ok(ExitCode::SUCCESS)
            }),
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
