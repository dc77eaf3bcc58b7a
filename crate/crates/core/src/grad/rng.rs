//! Seeded random streams.
//!
//! All randomness flows through [`Rng`], a ChaCha8 generator. A master seed
//! is split into independent [`Stream`]s with ChaCha's 64-bit stream
//! selector, so e.g. the shuffling order never depends on how much noise
//! another component has consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;

pub type Rng = ChaCha8Rng;

/// Independent consumers of a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    EncoderInit = 1,
    ClassifierInit = 2,
    TaskDiscInit = 3,
    PriorDiscInit = 4,
    DomainDiscInit = 5,
    Batches = 6,
    Noise = 7,
    Data = 8,
    Shift = 9,
    Subsample = 10,
    TargetBatches = 11,
    Prior = 12,
}

impl Stream {
    pub fn rng(self, seed: u64) -> Rng {
        let mut rng = Rng::seed_from_u64(seed);
        rng.set_stream(self as u64);
        rng
    }
}

/// `rows × cols` matrix of i.i.d. standard normal draws.
pub fn sample_standard_normal(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}
