use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airlink::{snr_to_noise_std, ActivityVector, ScenarioConfig, TrialDraw};
use crate::error::{Error, Result};
use crate::models::AudSystem;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Trials handled per parallel work item.
const CHUNK: u64 = 256;

/// Anything that maps a trial to an activity estimate.
#[derive(Debug, Clone, Copy)]
pub enum Detector<'a> {
    System(&'a AudSystem),
    /// Returns the true activity vector.
    Genie,
    AlwaysInactive,
    AlwaysActive,
}

impl Detector<'_> {
    pub fn label(&self) -> String {
        match self {
            Detector::System(s) => s.variant.tag().into(),
            Detector::Genie => "genie".into(),
            Detector::AlwaysInactive => "always-inactive".into(),
            Detector::AlwaysActive => "always-active".into(),
        }
    }

    fn check(&self, scenario: &ScenarioConfig) -> Result<()> {
        let Detector::System(sys) = self else {
            return Ok(());
        };
        let have = &sys.scenario;
        for (context, expected, actual) in [
            ("number of users N", have.users, scenario.users),
            ("number of codebooks J", have.codebooks, scenario.codebooks),
            ("preamble length K_p", have.preamble_len, scenario.preamble_len),
            ("data resources K_d", have.resources, scenario.resources),
            ("data blocks N_d", have.data_blocks, scenario.data_blocks),
            ("codebook size M", have.codebook_size, scenario.codebook_size),
        ] {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if have.nonzeros != scenario.nonzeros || have.association != scenario.association {
            return Err(Error::InvalidParameter(
                "system and scenario disagree on codebook sparsity or association".into(),
            ));
        }
        Ok(())
    }

    fn decide(&self, draws: &[TrialDraw], sigma: f64) -> Result<Vec<ActivityVector>> {
        Ok(match self {
            Detector::System(sys) => {
                let frames = draws
                    .iter()
                    .map(|d| d.realize(sys.preamble_set(), sys.codebooks(), sigma))
                    .collect::<Result<Vec<_>>>()?;
                sys.detect_batch(&frames)?
            }
            Detector::Genie => draws.iter().map(|d| d.delta.clone()).collect(),
            Detector::AlwaysInactive => draws.iter().map(|d| ActivityVector::zeros(d.delta.len())).collect(),
            Detector::AlwaysActive => draws.iter().map(|d| ActivityVector(vec![1; d.delta.len()])).collect(),
        })
    }
}

/// ADER estimate at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AderPoint {
    pub snr_db: f64,
    /// Per-user activity-bit error rate.
    pub ader: f64,
    /// Wilson-interval half-width at 95%.
    pub ci_half: f64,
    pub trials: u64,
    pub users: usize,
    /// Active users declared inactive.
    pub misses: u64,
    /// Inactive users declared active.
    pub false_alarms: u64,
    /// Trials with at least one wrong decision.
    pub frame_errors: u64,
}

impl AderPoint {
    pub fn from_counts(
        snr_db: f64,
        trials: u64,
        users: usize,
        misses: u64,
        false_alarms: u64,
        frame_errors: u64,
    ) -> Self {
        let n = trials * users as u64;
        let ader = (misses + false_alarms) as f64 / n as f64;
        Self {
            snr_db,
            ader,
            ci_half: wilson_half_width(ader, n),
            trials,
            users,
            misses,
            false_alarms,
            frame_errors,
        }
    }

    pub fn errors(&self) -> u64 {
        self.misses + self.false_alarms
    }
}

/// Half-width of the 95% Wilson score interval for a rate `p` over `n` outcomes.
pub fn wilson_half_width(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Monte-Carlo ADER. Trial `t` draws from streams keyed by `(seed, t)`, so
/// detectors evaluated with one seed see identical activity, channels, noise
/// and data.
pub fn eval_ader(
    detector: Detector<'_>,
    scenario: &ScenarioConfig,
    snr_db: f64,
    trials: u64,
    seed: u64,
) -> Result<AderPoint> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    scenario.validate()?;
    detector.check(scenario)?;
    let sigma = snr_to_noise_std(snr_db);
    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<[u64; 3]> {
            let range = c * CHUNK..((c + 1) * CHUNK).min(trials);
            let draws: Vec<TrialDraw> = range.map(|t| TrialDraw::sample(scenario, seed, t)).collect();
            let decisions = detector.decide(&draws, sigma)?;
            let mut out = [0u64; 3];
            for (draw, est) in draws.iter().zip(&decisions) {
                let mut wrong = false;
                for (&truth, &guess) in draw.delta.0.iter().zip(&est.0) {
                    match (truth, guess) {
                        (1, 0) => out[0] += 1,
                        (0, 1) => out[1] += 1,
                        _ => continue,
                    }
                    wrong = true;
                }
                out[2] += u64::from(wrong);
            }
            Ok(out)
        })
        .try_reduce(|| [0; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))?;
    Ok(AderPoint::from_counts(
        snr_db,
        trials,
        scenario.users,
        counts[0],
        counts[1],
        counts[2],
    ))
}
