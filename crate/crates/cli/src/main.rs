use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crosspmf::analysis::ExtremaMethod;
use crosspmf_cli::commands;
use crosspmf_cli::config::OutputFormat;
use crosspmf_cli::{CliError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "crosspmf",
    version,
    about = "Cross-aligned PMF entanglement distribution: sweeps, fringes and statistics"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `output.formats`.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Overrides `analysis.method`.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Noiseless mode: expected counts instead of Poisson samples.
    #[arg(long, global = true)]
    expectation: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Pointwise,
    #[value(name = "cosine_fit")]
    CosineFit,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Post-compensation fidelity over (θ, φ), one panel per length mismatch.
    SweepFidelity,
    /// Simulated coincidence fringes for every Alice setting.
    SimulateFringe,
    /// Visibility reports and a summary for fringe files.
    Analyze {
        /// Dataset CSVs (with `.meta.json` sidecars) or dataset JSON files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Stable and unstable runs of two configurations over seeded repetitions.
    Compare {
        config_a: PathBuf,
        config_b: PathBuf,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
    },
}

impl Cli {
    fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.directory = out.display().to_string();
        }
        if let Some(f) = self.format {
            cfg.output.formats = match f {
                FormatArg::Csv => vec![OutputFormat::Csv],
                FormatArg::Json => vec![OutputFormat::Json],
                FormatArg::Both => vec![OutputFormat::Csv, OutputFormat::Json],
            };
        }
        if let Some(m) = self.method {
            cfg.analysis.method = match m {
                MethodArg::Pointwise => ExtremaMethod::Pointwise,
                MethodArg::CosineFit => ExtremaMethod::CosineFit,
            };
        }
        if self.expectation {
            cfg.expectation = true;
        }
        cfg
    }

    fn load(&self, path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
        let cfg = match path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default().resolved(),
        };
        Ok(self.apply(cfg))
    }

    fn run(&self) -> Result<(), CliError> {
        match &self.command {
            Command::SweepFidelity => {
                commands::cmd_sweep_fidelity(&self.load(self.config.as_ref())?)?
            }
            Command::SimulateFringe => {
                commands::cmd_simulate_fringe(&self.load(self.config.as_ref())?)?
            }
            Command::Analyze { paths } => {
                commands::cmd_analyze(&self.load(self.config.as_ref())?, paths)?
            }
            Command::Compare {
                config_a,
                config_b,
                repetitions,
            } => {
                let a = self.load(Some(config_a))?;
                let b = self.load(Some(config_b))?;
                commands::cmd_compare(&a, &b, *repetitions)?
            }
        };
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
