use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::eval::Detector;
use super::sweep::{point_seed, snr_sweep, write_ader_csv, SweepRow};
use crate::airlink::{PreambleSet, ScenarioConfig};
use crate::error::{Error, Result};
use crate::models::{
    gen_independent_preambles, train, with_association, AudSystem, PreambleKind, TrainConfig, Variant,
};
use crate::rng::derive_seed;
use crate::xcorr::{xcorr_report, XcorrReport};

const TRAIN_SALT: u64 = 0x100;
const EVAL_SALT: u64 = 0x200;
const REFERENCE_SALT: u64 = 0x300;
const INDEPENDENT_SALT: u64 = 0x400;

/// Label of the Gaussian reference set in `xcorr.csv`.
pub const REFERENCE_SET: &str = "gaussian-reference";

/// Where the frozen set of the data-aided-independent system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum IndependentPreambles {
    /// Preambles of the trained preamble-based system.
    PreambleBased,
    /// A generated set; without a seed, one is derived from the master seed.
    Generated {
        kind: PreambleKind,
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

impl Default for IndependentPreambles {
    fn default() -> Self {
        Self::Generated {
            kind: PreambleKind::Gaussian,
            seed: None,
        }
    }
}

impl IndependentPreambles {
    /// The frozen set for `scenario`, when it does not depend on other systems.
    pub fn resolve(&self, scenario: &ScenarioConfig, master: u64) -> Option<Result<PreambleSet>> {
        match self {
            Self::PreambleBased => None,
            Self::Generated { kind, seed } => Some(
                gen_independent_preambles(
                    scenario.users,
                    scenario.preamble_len,
                    scenario.codebooks,
                    *kind,
                    seed.unwrap_or_else(|| independent_seed(master)),
                )
                .and_then(|set| with_association(&set, scenario.association)),
            ),
            Self::File { path } => Some(PreambleSet::load(path)),
        }
    }
}

/// Seed of a generated independent set when the config names none.
pub fn independent_seed(master: u64) -> u64 {
    derive_seed(master, INDEPENDENT_SALT)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub independent_preambles: IndependentPreambles,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    /// Checkpoint directories to load instead of training.
    #[serde(default)]
    pub load: BTreeMap<Variant, PathBuf>,
    /// Also sweep the always-inactive and always-active detectors.
    #[serde(default)]
    pub baselines: bool,
}

impl ExperimentConfig {
    /// Parse a config, or the `config` entry of a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        if value.get("version").is_some() && value.get("seeds").is_some() {
            value = value["config"].take();
        }
        let mut cfg: Self = serde_json::from_value(value)?;
        cfg.scenario = cfg.scenario.normalized();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every violated field, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.scenario.validate() {
            match e {
                Error::Config(list) => problems.extend(list.into_iter().map(|p| format!("scenario: {p}"))),
                other => problems.push(format!("scenario: {other}")),
            }
        }
        problems.extend(self.train.problems());
        if self.variants.is_empty() {
            problems.push("variants must list at least one system".into());
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            problems.push("variants must not repeat".into());
        }
        if self.snr_grid_db.is_empty() {
            problems.push("snr_grid_db must not be empty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            problems.push("snr_grid_db entries must be finite".into());
        }
        if self.trials == 0 {
            problems.push("trials must be at least 1".into());
        }
        for (v, path) in &self.load {
            if !self.variants.contains(v) {
                problems.push(format!("load.{v} names a variant that is not in variants"));
            }
            if !path.join("manifest.json").is_file() {
                problems.push(format!("load.{v}: no checkpoint at {}", path.display()));
            }
        }
        if self.variants.contains(&Variant::DataAidedIndependent) {
            match &self.independent_preambles {
                IndependentPreambles::PreambleBased if !self.variants.contains(&Variant::PreambleBased) => problems
                    .push("independent_preambles: source preamble-based requires the preamble-based variant".into()),
                IndependentPreambles::Generated { .. } if self.scenario.validate().is_ok() => {
                    if let Some(Err(e)) = self.independent_preambles.resolve(&self.scenario, self.seed) {
                        problems.push(format!("independent_preambles: {e}"));
                    }
                }
                IndependentPreambles::File { path } if !path.is_file() => {
                    problems.push(format!("independent_preambles: no file at {}", path.display()))
                }
                _ => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn train_seed(&self, variant: Variant) -> u64 {
        variant_train_seed(self.seed, variant)
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, EVAL_SALT)
    }

    pub fn reference_seed(&self) -> u64 {
        derive_seed(self.seed, REFERENCE_SALT)
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub systems: Vec<AudSystem>,
    pub rows: Vec<SweepRow>,
    /// `(set label, report or failure message)`.
    pub xcorr: Vec<(String, std::result::Result<XcorrReport, String>)>,
}

impl ExperimentOutcome {
    pub fn system(&self, variant: Variant) -> Option<&AudSystem> {
        self.systems.iter().find(|s| s.variant == variant)
    }
}

/// Training seed of `variant` under a master seed.
pub fn variant_train_seed(master: u64, variant: Variant) -> u64 {
    let idx = Variant::ALL.iter().position(|&v| v == variant).expect("listed variant") as u64;
    derive_seed(master, TRAIN_SALT + idx)
}

fn frozen_set(cfg: &ExperimentConfig, systems: &[AudSystem]) -> Result<PreambleSet> {
    cfg.independent_preambles
        .resolve(&cfg.scenario, cfg.seed)
        .unwrap_or_else(|| {
            systems
                .iter()
                .find(|s| s.variant == Variant::PreambleBased)
                .map(|s| s.extract_preambles())
                .ok_or_else(|| Error::InvalidParameter("preamble-based system unavailable".into()))
        })
}

fn obtain(cfg: &ExperimentConfig, variant: Variant, systems: &[AudSystem]) -> Result<AudSystem> {
    if let Some(path) = cfg.load.get(&variant) {
        let sys = AudSystem::load(path)?;
        if sys.variant != variant {
            return Err(Error::InvalidParameter(format!(
                "checkpoint {} holds {}, expected {variant}",
                path.display(),
                sys.variant
            )));
        }
        return Ok(sys);
    }
    let tc = TrainConfig {
        seed: cfg.train_seed(variant),
        ..cfg.train.clone()
    };
    let frozen = match variant {
        Variant::DataAidedIndependent => Some(frozen_set(cfg, systems)?),
        _ => None,
    };
    train(variant, &cfg.scenario, &tc, frozen)
}

#[derive(Serialize)]
struct XcorrCsvRow<'a> {
    set: &'a str,
    n: usize,
    j: usize,
    l: usize,
    avg_xcorr: f64,
    intra: f64,
    inter: f64,
}

/// Train or load each variant, sweep, and write `ader.csv`, `xcorr.csv`,
/// `summary.json`, `manifest.json` and `checkpoints/<variant>/` under
/// `config.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(dir.join("checkpoints"))?;

    let mut order = cfg.variants.clone();
    order.sort();
    let mut systems: Vec<AudSystem> = Vec::with_capacity(order.len());
    for &v in &order {
        let sys = obtain(cfg, v, &systems)?;
        sys.save(&dir.join("checkpoints").join(v.tag()))?;
        systems.push(sys);
    }

    let mut detectors: Vec<Detector<'_>> = systems.iter().map(Detector::System).collect();
    if cfg.baselines {
        detectors.extend([Detector::AlwaysInactive, Detector::AlwaysActive]);
    }
    let rows = snr_sweep(&detectors, &cfg.scenario, &cfg.snr_grid_db, cfg.trials, cfg.eval_seed())?;
    write_ader_csv(&rows, &cfg.scenario, std::fs::File::create(dir.join("ader.csv"))?)?;

    let sc = &cfg.scenario;
    let reference = with_association(
        &gen_independent_preambles(
            sc.users,
            sc.preamble_len,
            sc.codebooks,
            PreambleKind::Gaussian,
            cfg.reference_seed(),
        )?,
        sc.association,
    )?;
    let mut sets: Vec<(String, PreambleSet)> = systems
        .iter()
        .map(|s| (s.variant.tag().to_string(), s.extract_preambles()))
        .collect();
    sets.push((REFERENCE_SET.into(), reference));
    let xcorr: Vec<_> = sets
        .iter()
        .map(|(label, set)| (label.clone(), xcorr_report(set).map_err(|e| e.to_string())))
        .collect();
    let mut w = csv::Writer::from_path(dir.join("xcorr.csv"))?;
    for (label, report) in &xcorr {
        for r in report.iter().flat_map(|rep| &rep.rows) {
            w.serialize(XcorrCsvRow {
                set: label,
                n: r.n,
                j: r.j,
                l: r.l,
                avg_xcorr: r.avg_xcorr,
                intra: r.intra,
                inter: r.inter,
            })?;
        }
    }
    w.flush()?;

    let summary = json!({
        "ader": rows.iter().filter_map(|r| r.point.as_ref().ok().map(|p| json!({
            "variant": r.variant,
            "snr_db": r.snr_db,
            "ader": p.ader,
            "ci_half": p.ci_half,
            "trials": p.trials,
            "misses": p.misses,
            "false_alarms": p.false_alarms,
            "frame_errors": p.frame_errors,
        }))).collect::<Vec<_>>(),
        "failed_rows": rows.iter().filter_map(|r| r.point.as_ref().err().map(|e| json!({
            "variant": r.variant,
            "snr_db": r.snr_db,
            "error": e,
        }))).collect::<Vec<_>>(),
        "xcorr": xcorr.iter().map(|(label, rep)| (label.clone(), match rep {
            Ok(rep) => serde_json::to_value(&rep.summary).expect("plain data"),
            Err(e) => json!({ "error": e }),
        })).collect::<BTreeMap<_, _>>(),
        "training": systems.iter().map(|s| (s.variant.tag().to_string(), json!({
            "loaded": cfg.load.contains_key(&s.variant),
            "iterations": s.log.losses.len(),
            "initial_loss": s.log.initial(),
            "final_loss": s.log.last(),
        }))).collect::<BTreeMap<_, _>>(),
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seeds": {
            "master": cfg.seed,
            "train": order.iter().map(|&v| (v.tag(), cfg.train_seed(v))).collect::<BTreeMap<_, _>>(),
            "eval": cfg.eval_seed(),
            "points": (0..cfg.snr_grid_db.len()).map(|i| point_seed(cfg.eval_seed(), i)).collect::<Vec<_>>(),
            "gaussian_reference": cfg.reference_seed(),
            "independent_preambles": match cfg.independent_preambles {
                IndependentPreambles::Generated { seed, .. } => Some(seed.unwrap_or_else(|| independent_seed(cfg.seed))),
                _ => None,
            },
        },
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    Ok(ExperimentOutcome {
        dir,
        systems,
        rows,
        xcorr,
    })
}

/// Human-readable summary of a finished run directory.
pub fn report(dir: &Path) -> Result<String> {
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    let mut out = String::new();
    let mut rdr = csv::Reader::from_path(dir.join("ader.csv"))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidParameter(format!("ader.csv lacks column {name}")))
    };
    let (variant, snr, ader, half, trials) = (
        col("variant")?,
        col("snr_db")?,
        col("ader")?,
        col("ci_half")?,
        col("trials")?,
    );
    writeln!(
        out,
        "{:<24} {:>8} {:>10} {:>12} {:>10}",
        "variant", "snr_db", "trials", "ader", "ci_half"
    )
    .unwrap();
    for rec in rdr.records() {
        let rec = rec?;
        let shown = |i: usize| {
            if rec[i].is_empty() {
                "failed".to_string()
            } else {
                rec[i].to_string()
            }
        };
        writeln!(
            out,
            "{:<24} {:>8} {:>10} {:>12} {:>10}",
            &rec[variant],
            &rec[snr],
            &rec[trials],
            shown(ader),
            shown(half)
        )
        .unwrap();
    }
    if let Some(sets) = summary.get("xcorr").and_then(Value::as_object) {
        writeln!(
            out,
            "\n{:<24} {:>10} {:>10} {:>10}",
            "preamble set", "R_intra", "R_inter", "gamma"
        )
        .unwrap();
        for (label, s) in sets {
            match s.get("error") {
                Some(e) => writeln!(out, "{label:<24} {e}").unwrap(),
                None => {
                    let num = |k: &str| {
                        s.get(k)
                            .and_then(Value::as_f64)
                            .map_or("-".to_string(), |x| format!("{x:.4}"))
                    };
                    let gamma = match &s["gamma"] {
                        Value::Number(n) => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
                        Value::String(t) => t.clone(),
                        _ => "undefined".into(),
                    };
                    writeln!(
                        out,
                        "{label:<24} {:>10} {:>10} {:>10}",
                        num("R_intra"),
                        num("R_inter"),
                        gamma
                    )
                    .unwrap();
                }
            }
        }
    }
    if let Some(failed) = summary
        .get("failed_rows")
        .and_then(Value::as_array)
        .filter(|f| !f.is_empty())
    {
        writeln!(out, "\nfailed rows: {}", failed.len()).unwrap();
        for f in failed {
            writeln!(out, "  {} @ {} dB: {}", f["variant"], f["snr_db"], f["error"]).unwrap();
        }
    }
    Ok(out)
}
