use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spin_cli::config::{DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};
use spin_cli::{commands, report, CliError, Result, RunConfig};
use spin_core::corpus::{SyntheticMode, SyntheticSpec};
use spin_core::perturb::PerturbConfig;

/// Speaker-invariant clustering experiments.
///
/// Outputs default to `$SPIN_OUTPUT_ROOT/<name>` (root `runs`). Exit codes:
/// 0 success, 2 config error, 3 stage failure.
#[derive(Parser)]
#[command(name = "spin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phone-by-speaker corpus.
    GenCorpus {
        /// TOML file with generator settings; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Render waveforms instead of feature frames.
        #[arg(long)]
        audio: bool,
        /// Write every utterance to its own file instead of rendering on load.
        #[arg(long)]
        export: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-voice every utterance of a corpus once.
    Perturb {
        manifest: PathBuf,
        /// TOML file with perturbation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model from a run config, without evaluation.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Purity and PNMI of a checkpoint's units, or of K-means on raw features.
    EvalUnits {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Cluster count for the K-means baseline.
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Within- and across-speaker ABX error.
    EvalAbx {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        per_pair: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear speaker probe per layer.
    Probe {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: corpus, training, evaluation and plots.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate finished runs as CSV and Markdown.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for report.csv and report.md.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn default_out(name: &str) -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
        .join(name)
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::GenCorpus {
            spec,
            seed,
            audio,
            export,
            out,
        } => {
            let mut s: SyntheticSpec = read_toml(spec.as_deref())?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if audio {
                s.mode = SyntheticMode::AudioLevel;
            }
            commands::gen_corpus(&s, &out.unwrap_or_else(|| default_out("corpus")), export)
        }
        Command::Perturb {
            manifest,
            config,
            seed,
            out,
        } => {
            let pc: PerturbConfig = read_toml(config.as_deref())?;
            commands::perturb(&manifest, &pc, seed, &out.unwrap_or_else(|| default_out("perturbed")))
        }
        Command::Train { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir());
            commands::train(&cfg, &out)
        }
        Command::EvalUnits {
            manifest,
            checkpoint,
            k,
            seed,
            out,
        } => commands::eval_units(
            &manifest,
            checkpoint.as_deref(),
            k,
            seed,
            &out.unwrap_or_else(|| default_out("eval-units")),
        ),
        Command::EvalAbx {
            manifest,
            checkpoint,
            per_pair,
            seed,
            out,
        } => commands::eval_abx(
            &manifest,
            checkpoint.as_deref(),
            per_pair,
            seed,
            &out.unwrap_or_else(|| default_out("eval-abx")),
        ),
        Command::Probe {
            manifest,
            checkpoint,
            seed,
            out,
        } => commands::probe(&manifest, checkpoint.as_deref(), seed, &out.unwrap_or_else(|| default_out("probe"))),
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            Ok(spin_cli::run_experiment(&cfg)?.dir)
        }
        Command::Report { runs, out } => {
            let rows = report::write_report(&runs, &out)?;
            print!("{}", report::to_markdown(&rows));
            Ok(out.join("report.csv"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(path) => {
            eprintln!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
