use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corneal_egm::study::{self, Source, Study, StudyConfig};

/// Corneal material identification study driver.
#[derive(Parser, Debug)]
#[command(name = "corneid", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Study configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory of the study.
    #[arg(long, global = true, default_value = "study")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the quarter-eye mesh.
    Generate,
    /// Stress-free geometry and virtual air-puff runs.
    Forward(SetArgs),
    /// Equilibrium gap identification of stored state bundles.
    Identify {
        #[command(flatten)]
        sets: SetArgs,
        #[arg(long, value_enum, default_value = "forward")]
        source: Source,
    },
    /// Rebuild full fields from the forward contours.
    Morph(SetArgs),
    /// Repeated identification under seeded displacement noise.
    NoiseStudy(SetArgs),
    /// Plot-ready CSV tables of a finished study.
    Report,
    /// Write the effective configuration as JSON.
    Config,
}

#[derive(Args, Debug)]
struct SetArgs {
    /// Material set to process (repeatable). All configured sets by default.
    #[arg(long = "set")]
    sets: Vec<String>,
}

fn run(cli: Cli) -> corneal_egm::Result<()> {
    let c = &cli.common;
    rayon::ThreadPoolBuilder::new()
        .num_threads(c.jobs.max(1))
        .build_global()
        .map_err(|e| corneal_egm::Error::Config(format!("thread pool: {e}")))?;
    let config = match &c.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let s = Study::new(config, &c.out, c.seed)?;
    match cli.command {
        Command::Generate => study::cmd_generate(&s).map(|_| ()),
        Command::Forward(a) => study::cmd_forward(&s, &a.sets),
        Command::Identify { sets, source } => study::cmd_identify(&s, source, &sets.sets),
        Command::Morph(a) => study::cmd_morph(&s, &a.sets),
        Command::NoiseStudy(a) => study::cmd_noise_study(&s, &a.sets),
        Command::Report => study::cmd_report(&s),
        Command::Config => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
