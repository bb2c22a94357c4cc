use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use gfscma::airlink::{Association, PreambleSet, ScenarioConfig};
use gfscma::harness::{
    report, run_experiment, snr_sweep, variant_train_seed, write_ader_csv, Detector, ExperimentConfig,
    IndependentPreambles,
};
use gfscma::models::{
    gen_independent_preambles, train, with_association, AudSystem, PreambleKind, TrainConfig, Variant,
};
use gfscma::xcorr::xcorr_report;

#[derive(Parser)]
#[command(name = "gfscma", version, about = "Grant-free SCMA active-user detection laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write its checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
        /// Frozen preamble set for data-aided-independent.
        #[arg(long)]
        frozen: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over an SNR list; prints ader.csv rows.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        snr: Vec<f64>,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-correlation report of a preamble set.
    Xcorr {
        #[arg(long)]
        preambles: PathBuf,
        /// Write the per-preamble CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an independently designed preamble set.
    GenPreambles {
        #[arg(long)]
        kind: PreambleKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        kp: usize,
        #[arg(long, default_value_t = 6)]
        j: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "round-robin")]
        association: AssociationArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the results of a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run a full experiment from a config (or a previous run's manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AssociationArg {
    RoundRobin,
    Block,
}

impl From<AssociationArg> for Association {
    fn from(a: AssociationArg) -> Self {
        match a {
            AssociationArg::RoundRobin => Association::RoundRobin,
            AssociationArg::Block => Association::Block,
        }
    }
}

/// The parts of a config `train` needs; experiment configs qualify.
#[derive(Deserialize)]
struct TrainFile {
    scenario: ScenarioConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    independent_preambles: IndependentPreambles,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_train(config: &Path, variant: Variant, out: &Path, frozen: Option<&Path>) -> Result<()> {
    let file: TrainFile = serde_json::from_str(&read(config)?).context("parsing training config")?;
    let scenario = file.scenario.normalized();
    let tc = TrainConfig {
        seed: variant_train_seed(file.seed, variant),
        ..file.train
    };
    let frozen = match (variant, frozen) {
        (Variant::DataAidedIndependent, Some(path)) => Some(PreambleSet::load(path)?),
        (Variant::DataAidedIndependent, None) => match file.independent_preambles.resolve(&scenario, file.seed) {
            Some(set) => Some(set?),
            None => {
                bail!("data-aided-independent needs --frozen <preambles.json>, e.g. from a preamble-based checkpoint")
            }
        },
        _ => None,
    };
    let sys = train(variant, &scenario, &tc, frozen)?;
    sys.save(out)?;
    eprintln!(
        "{variant}: {} iterations, loss {:.4} -> {:.4}, checkpoint in {}",
        sys.log.losses.len(),
        sys.log.initial().unwrap_or(f64::NAN),
        sys.log.last().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, snr: &[f64], trials: u64, seed: u64) -> Result<()> {
    let sys = AudSystem::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let rows = snr_sweep(&[Detector::System(&sys)], &sys.scenario, snr, trials, seed)?;
    write_ader_csv(&rows, &sys.scenario, std::io::stdout().lock())?;
    Ok(())
}

fn cmd_xcorr(preambles: &Path, out: Option<&Path>) -> Result<()> {
    let set = PreambleSet::load(preambles)?;
    let rep = xcorr_report(&set)?;
    match out {
        Some(path) => rep.write_csv(std::fs::File::create(path)?)?,
        None => rep.write_csv(std::io::stdout().lock())?,
    }
    println!("{}", rep.summary_json()?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            variant,
            out,
            frozen,
        } => cmd_train(&config, variant, &out, frozen.as_deref()),
        Command::Eval {
            checkpoint,
            snr,
            trials,
            seed,
        } => cmd_eval(&checkpoint, &snr, trials, seed),
        Command::Xcorr { preambles, out } => cmd_xcorr(&preambles, out.as_deref()),
        Command::GenPreambles {
            kind,
            n,
            kp,
            j,
            seed,
            association,
            out,
        } => {
            if n % j != 0 {
                bail!("--n {n} must be a multiple of --j {j}");
            }
            let set = with_association(&gen_independent_preambles(n, kp, j, kind, seed)?, association.into())?;
            match out {
                Some(path) => set.save(&path)?,
                None => writeln!(std::io::stdout(), "{}", set.to_json()?)?,
            }
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", report(&dir)?);
            Ok(())
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", report(&outcome.dir)?);
            Ok(())
        }
    }
}
