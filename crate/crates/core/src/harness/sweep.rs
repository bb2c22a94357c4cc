use std::io::Write;

use serde::Serialize;

use super::eval::{eval_ader, AderPoint, Detector};
use crate::airlink::ScenarioConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// One `(detector, SNR)` evaluation. `point` is `Err` with the failure
/// message when that evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: String,
    pub snr_db: f64,
    pub trials: u64,
    pub seed: u64,
    pub point: std::result::Result<AderPoint, String>,
}

/// Seed of grid point `i`; every detector shares it.
pub fn point_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Evaluate every detector at every grid point. A failing evaluation yields
/// a flagged row instead of aborting the sweep.
pub fn snr_sweep(
    detectors: &[Detector<'_>],
    scenario: &ScenarioConfig,
    grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("SNR grid must not be empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(detectors.len() * grid.len());
    for det in detectors {
        for (i, &snr_db) in grid.iter().enumerate() {
            let s = point_seed(seed, i);
            rows.push(SweepRow {
                variant: det.label(),
                snr_db,
                trials,
                seed: s,
                point: eval_ader(*det, scenario, snr_db, trials, s).map_err(|e| e.to_string()),
            });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    variant: &'a str,
    n: usize,
    j_count: usize,
    l_count: usize,
    snr_db: f64,
    trials: u64,
    ader: Option<f64>,
    ci_half: Option<f64>,
    misses: Option<u64>,
    false_alarms: Option<u64>,
    seed: u64,
}

/// Columns `variant, n, j_count, l_count, snr_db, trials, ader, ci_half,
/// misses, false_alarms, seed`; failed rows leave the result fields empty.
pub fn write_ader_csv<W: Write>(rows: &[SweepRow], scenario: &ScenarioConfig, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let ok = r.point.as_ref().ok();
        w.serialize(CsvRow {
            variant: &r.variant,
            n: scenario.users,
            j_count: scenario.codebooks,
            l_count: scenario.per_codebook,
            snr_db: r.snr_db,
            trials: r.trials,
            ader: ok.map(|p| p.ader),
            ci_half: ok.map(|p| p.ci_half),
            misses: ok.map(|p| p.misses),
            false_alarms: ok.map(|p| p.false_alarms),
            seed: r.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}
