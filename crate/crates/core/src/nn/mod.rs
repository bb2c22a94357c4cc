//! A small dense-network engine in double precision: forward and reverse
//! passes, binary cross-entropy, Adam, gradient checking and checkpoints.
//!
//! Complex observations enter a network as `[Re; Im]` concatenations, see
//! [`flatten_complex`].

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod loss;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradcheck, GradcheckReport, Objective};
pub use loss::{bce_loss, half_squared_loss, CLAMP};
pub use network::{
    backward, forward, sigmoid, Activation, Dense, ForwardCache, Gradients, LayerSpec, Network, NetworkSpec,
    ParamStore, DEFAULT_HIDDEN_FACTOR,
};

use num_complex::Complex64;

/// Real parts followed by imaginary parts, scaled by `scale`.
pub fn flatten_complex(values: &[Complex64], scale: f64, out: &mut [f64]) {
    let k = values.len();
    assert_eq!(out.len(), 2 * k, "flattened width must be twice the complex length");
    for (i, v) in values.iter().enumerate() {
        out[i] = v.re * scale;
        out[k + i] = v.im * scale;
    }
}
