//! Seeded random streams.
//!
//! ChaCha20 is counter based: a `(seed, stream)` pair addresses an
//! independent, platform-stable sequence. Every consumer in the crate picks a
//! distinct stream constant so that, e.g., the batch sampler and the weight
//! initializer never share draws.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::numerics::Matrix;

pub type SeededRng = ChaCha20Rng;

pub(crate) const STREAM_BATCH: u64 = 1;
pub(crate) const STREAM_INIT: u64 = 2;
pub(crate) const STREAM_PROJECTOR: u64 = 3;
pub(crate) const STREAM_DROPOUT: u64 = 4;
pub(crate) const STREAM_ENCODER: u64 = 5;

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    // Column-major fill order is part of the reproducibility contract.
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// diagonal of R made positive).
pub fn random_orthogonal(d: usize, rng: &mut SeededRng) -> Matrix {
    let g = normal_matrix(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}
