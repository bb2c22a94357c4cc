//! Grant-free SCMA active-user detection laboratory.
//!
//! Builds SCMA codebooks and random-access frames, trains preamble-based and
//! data-aided detectors (optionally designing the preamble set jointly with
//! the receiver), measures activity detection error rates and analyses the
//! cross-correlation structure of preamble sets.

pub mod airlink;
pub mod error;
pub mod harness;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scma;
pub mod xcorr;

pub use error::{Error, Result};
