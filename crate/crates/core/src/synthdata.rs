//! Paired toy batches: isotropic Gaussian inputs plus additive Gaussian
//! augmentation restricted to a contiguous coordinate block.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::csvfmt;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{self, SeededRng};

/// Per-coordinate standard deviation that makes the pairwise-difference
/// second moment `E[(x_i − x_j)(x_i − x_j)ᵀ]` equal to the identity.
pub const DEFAULT_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub dim: usize,
    pub scale: f64,
}

impl DataSpec {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        let spec = Self { dim, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("data dim must be >= 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput("data scale must be positive".into()));
        }
        Ok(())
    }
}

/// Additive noise `η ~ N(0, k²)` on coordinates `block_start..block_start+block_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationSpec {
    pub dim: usize,
    pub block_start: usize,
    pub block_size: usize,
    pub amplitude: f64,
}

impl AugmentationSpec {
    /// The toy layout: the last `block_size` coordinates are augmented.
    pub fn trailing_block(dim: usize, block_size: usize, amplitude: f64) -> Result<Self> {
        if block_size > dim {
            return Err(Error::InvalidInput("block larger than dim".into()));
        }
        let spec = Self {
            dim,
            block_start: dim - block_size,
            block_size,
            amplitude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_start + self.block_size > self.dim {
            return Err(Error::InvalidInput(format!(
                "augmentation block {}..{} exceeds dim {}",
                self.block_start,
                self.block_start + self.block_size,
                self.dim
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidInput("augmentation amplitude must be >= 0".into()));
        }
        Ok(())
    }

    pub fn block(&self) -> std::ops::Range<usize> {
        self.block_start..self.block_start + self.block_size
    }
}

/// Two views of `n` samples stored as `d × n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub xp: Matrix,
    pub seed: u64,
}

impl Batch {
    pub fn new(x: Matrix, xp: Matrix, seed: u64) -> Result<Self> {
        if x.shape() != xp.shape() {
            return Err(Error::InvalidInput(format!(
                "views have different shapes {:?} vs {:?}",
                x.shape(),
                xp.shape()
            )));
        }
        Ok(Self { x, xp, seed })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// One row per sample: `view,index,v_0,...,v_{d-1}` with view 0 for the
    /// first branch and 1 for the second.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut header = String::from("view,index");
        for k in 0..self.dim() {
            header.push_str(&format!(",v{k}"));
        }
        writeln!(out, "{header}")?;
        for (view, m) in [(0, &self.x), (1, &self.xp)] {
            for (i, col) in m.column_iter().enumerate() {
                let mut line = format!("{view},{i}");
                for v in col.iter() {
                    line.push(',');
                    line.push_str(&csvfmt::real(*v));
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

pub fn sample_batch(data: &DataSpec, aug: &AugmentationSpec, n: usize, seed: u64) -> Result<Batch> {
    let mut rng = rng::stream(seed, rng::STREAM_BATCH);
    let mut batch = sample_batch_with(data, aug, n, &mut rng)?;
    batch.seed = seed;
    Ok(batch)
}

/// Draws a batch from an existing stream; used by training loops that
/// resample every step.
pub fn sample_batch_with(
    data: &DataSpec,
    aug: &AugmentationSpec,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Batch> {
    data.validate()?;
    aug.validate()?;
    if aug.dim != data.dim {
        return Err(Error::InvalidInput(format!(
            "augmentation dim {} differs from data dim {}",
            aug.dim, data.dim
        )));
    }
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "a contrastive batch needs at least 2 samples, got {n}"
        )));
    }
    let d = data.dim;
    let mut x = Matrix::zeros(d, n);
    let mut xp = Matrix::zeros(d, n);
    let block = aug.block();
    for i in 0..n {
        for r in 0..d {
            x[(r, i)] = data.scale * rng.sample::<f64, _>(StandardNormal);
        }
        for r in 0..d {
            let noise = if block.contains(&r) {
                aug.amplitude * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            xp[(r, i)] = x[(r, i)] + noise;
        }
    }
    Ok(Batch { x, xp, seed: 0 })
}
