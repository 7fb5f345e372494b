//! Diagnostics over weights and trajectories: alignment, the conserved
//! two-layer gap, effective rank, and their CSV traces.

use std::ops::Range;
use std::path::Path;

use crate::csvfmt::{self, real};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::models::{self, LinearStack};
use crate::numerics::{self, Matrix, SpectrumReport};

/// Default collapse threshold relative to the largest singular value.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Adjacent singular values closer than this (relative to the larger one)
/// are treated as one block when judging alignment.
pub const NEAR_DEGENERATE_RTOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// `A = V₂ᵀ U₁`.
    pub a: Matrix,
    pub abs_diag_min: f64,
    pub offdiag_max: f64,
    /// Index ranges of near-degenerate singular values of `W₁`; singleton
    /// ranges when the spectrum is well separated.
    pub blocks: Vec<Range<usize>>,
    /// Largest `|A_kk'|` with `k`, `k'` in different blocks.
    pub block_offdiag_max: f64,
}

impl AlignmentReport {
    pub fn is_block_level(&self) -> bool {
        self.blocks.iter().any(|b| b.len() > 1)
    }

    pub fn is_aligned(&self, diag_min: f64, off_max: f64) -> bool {
        self.abs_diag_min > diag_min && self.offdiag_max < off_max
    }
}

fn near_degenerate_blocks(s: &[f64]) -> Vec<Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for k in 1..=s.len() {
        if k == s.len() || s[k - 1] - s[k] > NEAR_DEGENERATE_RTOL * s[k - 1] {
            blocks.push(start..k);
            start = k;
        }
    }
    blocks
}

pub fn alignment_matrix(w1: &Matrix, w2: &Matrix) -> Result<AlignmentReport> {
    if w2.ncols() != w1.nrows() {
        return Err(Error::InvalidInput(format!(
            "W2 takes {} inputs but W1 emits {}",
            w2.ncols(),
            w1.nrows()
        )));
    }
    let f1 = numerics::svd(w1)?;
    let f2 = numerics::svd(w2)?;
    let a = f2.v.transpose() * &f1.u;
    let n = a.nrows().min(a.ncols());
    let abs_diag_min = (0..n).map(|k| a[(k, k)].abs()).fold(f64::INFINITY, f64::min);
    let mut offdiag_max: f64 = 0.0;
    let blocks = near_degenerate_blocks(&f1.s);
    let block_of = |k: usize| blocks.iter().position(|b| b.contains(&k));
    let mut block_offdiag_max: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i == j {
                continue;
            }
            let v = a[(i, j)].abs();
            offdiag_max = offdiag_max.max(v);
            if block_of(i) != block_of(j) {
                block_offdiag_max = block_offdiag_max.max(v);
            }
        }
    }
    Ok(AlignmentReport {
        a,
        abs_diag_min,
        offdiag_max,
        blocks,
        block_offdiag_max,
    })
}

/// `W₁W₁ᵀ − W₂ᵀW₂`.
pub fn conserved_quantity(w1: &Matrix, w2: &Matrix) -> Matrix {
    w1 * w1.transpose() - w2.transpose() * w2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationTrace {
    pub steps: Vec<usize>,
    /// `‖C(t) − C(0)‖_F` at each recorded step.
    pub drift: Vec<f64>,
    /// `‖C(0)‖_F`.
    pub baseline_norm: f64,
}

impl ConservationTrace {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_relative_drift(&self) -> f64 {
        self.max_drift() / self.baseline_norm
    }
}

pub fn conserved_gap(traj: &Trajectory) -> Result<ConservationTrace> {
    if traj.final_stack.depth() != 2 || !traj.final_stack.is_linear() {
        return Err(Error::InvalidInput(format!(
            "the conserved gap is defined for linear two-layer stacks, got depth {} ({})",
            traj.final_stack.depth(),
            traj.final_stack.nonlinearity
        )));
    }
    let first = traj.first();
    let baseline = conserved_quantity(&first.layers[0], &first.layers[1]);
    let (steps, drift) = traj
        .snapshots
        .iter()
        .map(|s| (s.step, (conserved_quantity(&s.layers[0], &s.layers[1]) - &baseline).norm()))
        .unzip();
    Ok(ConservationTrace {
        steps,
        drift,
        baseline_norm: baseline.norm(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub effective_rank: usize,
    pub epsilon: f64,
    pub spectrum: SpectrumReport,
}

impl CollapseReport {
    pub fn collapsed(&self) -> usize {
        self.spectrum.source_dim - self.effective_rank
    }
}

/// Counts singular values at or above `epsilon·σ_max`; an all-zero spectrum
/// has rank 0.
pub fn effective_rank(spectrum: &SpectrumReport, epsilon: f64) -> Result<CollapseReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let max = spectrum.max();
    let effective_rank = if max > 0.0 {
        spectrum.singular_values.iter().filter(|s| **s >= epsilon * max).count()
    } else {
        0
    };
    Ok(CollapseReport {
        effective_rank,
        epsilon,
        spectrum: spectrum.clone(),
    })
}

/// `(σ₁ᵏ)² − (σ₂ᵏ)²` per index.
pub fn pairing_gap(s1: &[f64], s2: &[f64]) -> Result<Vec<f64>> {
    if s1.len() != s2.len() {
        return Err(Error::InvalidInput(format!(
            "spectra have lengths {} and {}",
            s1.len(),
            s2.len()
        )));
    }
    Ok(s1.iter().zip(s2).map(|(a, b)| a * a - b * b).collect())
}

/// Spectrum of the covariance of the stack's embeddings of `inputs` (`d × N`).
pub fn embedding_spectrum(stack: &LinearStack, inputs: &Matrix) -> Result<SpectrumReport> {
    let (z, _) = models::forward(stack, inputs)?;
    Ok(numerics::covariance_spectrum(&z)?.1)
}

/// Singular values of every layer at every recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub step: usize,
    pub layer: usize,
    pub index: usize,
    pub sigma: f64,
}

pub fn spectrum_trace(traj: &Trajectory) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::new();
    for snap in &traj.snapshots {
        for (layer, w) in snap.layers.iter().enumerate() {
            for (index, sigma) in numerics::svd(w)?.s.into_iter().enumerate() {
                rows.push(SpectrumRow {
                    step: snap.step,
                    layer,
                    index,
                    sigma,
                });
            }
        }
    }
    Ok(rows)
}

/// `|A|` between the first two layers at every recorded step.
pub fn alignment_trace(traj: &Trajectory) -> Result<Vec<(usize, AlignmentReport)>> {
    if traj.final_stack.depth() < 2 {
        return Err(Error::InvalidInput("alignment needs at least two layers".into()));
    }
    traj.snapshots
        .iter()
        .map(|s| Ok((s.step, alignment_matrix(&s.layers[0], &s.layers[1])?)))
        .collect()
}

pub fn write_spectrum_trace(path: &Path, rows: &[SpectrumRow]) -> Result<()> {
    csvfmt::write_table(
        path,
        "step,layer,index,sigma",
        rows.iter()
            .map(|r| format!("{},{},{},{}", r.step, r.layer, r.index, real(r.sigma))),
    )
}

pub fn write_alignment_trace(path: &Path, trace: &[(usize, AlignmentReport)]) -> Result<()> {
    let mut rows = Vec::new();
    for (step, report) in trace {
        for i in 0..report.a.nrows() {
            for j in 0..report.a.ncols() {
                rows.push(format!("{step},{i},{j},{}", real(report.a[(i, j)].abs())));
            }
        }
    }
    csvfmt::write_table(path, "step,row,col,abs_value", rows)
}

pub fn write_conservation_trace(path: &Path, trace: &ConservationTrace) -> Result<()> {
    csvfmt::write_table(
        path,
        "step,frobenius_drift",
        trace
            .steps
            .iter()
            .zip(&trace.drift)
            .map(|(s, d)| format!("{s},{}", real(*d))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Nonlinearity;

    #[test]
    fn transpose_pair_is_aligned() {
        let w = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, -0.4, 1.0, 0.2, 0.0, 0.5, 0.3]);
        let r = alignment_matrix(&w, &w.transpose()).unwrap();
        assert!((r.abs_diag_min - 1.0).abs() < 1e-12);
        assert!(r.offdiag_max < 1e-12);
        assert!(!r.is_block_level());
    }

    #[test]
    fn degenerate_spectra_form_blocks() {
        let r = alignment_matrix(&numerics::diag(&[2.0, 1.0, 1.0]), &Matrix::identity(3, 3)).unwrap();
        assert_eq!(r.blocks, vec![0..1, 1..3]);
        assert!(r.is_block_level());
        assert!(r.block_offdiag_max < 1e-12);
    }

    #[test]
    fn rank_edge_cases() {
        let identity = SpectrumReport::from_values(vec![1.0; 5]);
        assert_eq!(effective_rank(&identity, 1e-3).unwrap().effective_rank, 5);
        let rank1 = SpectrumReport::from_values(vec![4.0, 0.0, 0.0]);
        assert_eq!(effective_rank(&rank1, 1e-3).unwrap().effective_rank, 1);
        let zero = SpectrumReport::from_values(vec![0.0; 3]);
        assert_eq!(effective_rank(&zero, 0.5).unwrap().effective_rank, 0);
        assert!(effective_rank(&identity, 1.0).is_err());
        assert!(effective_rank(&identity, 0.0).is_err());
    }

    #[test]
    fn pairing_gap_arithmetic() {
        assert_eq!(pairing_gap(&[2.0, 1.0], &[1.0, 1.0]).unwrap(), vec![3.0, 0.0]);
        assert!(pairing_gap(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn conserved_gap_rejects_other_depths() {
        let stack = LinearStack::new(vec![Matrix::identity(2, 2)], Nonlinearity::None).unwrap();
        let traj = Trajectory {
            snapshots: vec![crate::dynamics::Snapshot {
                step: 0,
                layers: stack.layers.clone(),
            }],
            losses: vec![],
            final_stack: stack,
        };
        assert!(matches!(conserved_gap(&traj), Err(Error::InvalidInput(_))));
    }
}
