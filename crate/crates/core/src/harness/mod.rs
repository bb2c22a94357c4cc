//! Monte-Carlo ADER evaluation, SNR sweeps and experiment runs.

mod eval;
mod experiment;
mod sweep;

pub use eval::{eval_ader, wilson_half_width, AderPoint, Detector, Z95};
pub use experiment::{
    independent_seed, report, run_experiment, variant_train_seed, ExperimentConfig, ExperimentOutcome,
    IndependentPreambles, REFERENCE_SET,
};
pub use sweep::{point_seed, snr_sweep, write_ader_csv, SweepRow};
