//! Minimal reverse-mode automatic differentiation over dense `f64`
//! matrices, plus the optimizer, a finite-difference oracle and seeded
//! random streams.

mod adam;
mod check;
mod params;
mod rng;
mod tape;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use check::{finite_diff_grad, max_relative_error, relative_error, DEFAULT_FD_STEP};
pub use params::ParamSet;
pub use rng::{sample_standard_normal, Rng, Stream};
pub use tape::{
    backward, backward_filtered, forward, Bindings, Gradients, LeafKind, NodeId, Op, Tape, Values,
};

pub type Matrix = ndarray::Array2<f64>;

/// Lower clamp for every probability that enters a logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

/// `ln(PROB_FLOOR)`: floor for log-probabilities.
pub const LOG_PROB_FLOOR: f64 = -16.11809565095832;

#[cfg(test)]
mod tests;
