//! InfoNCE with squared-distance similarities, its exact embedding
//! gradients, the assembled weight gradient `G`, and the contrast matrix `X`.
//!
//! For sample `i` the logits are `−|z_i − z_j|²/2` for every first-branch
//! negative `j ≠ i` and `−|z_i − z'_i|²/2` for the positive. There is no
//! temperature and second-branch embeddings are never used as negatives.

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};
use crate::synthdata::Batch;

/// Unit-norm tolerance for columns of a normalized batch.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Embeddings of both branches, `d × N` each.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub z: Matrix,
    pub zp: Matrix,
    pub normalized: bool,
}

impl EmbeddingBatch {
    pub fn new(z: Matrix, zp: Matrix) -> Result<Self> {
        Self::with_flag(z, zp, false)
    }

    /// Marks the batch normalized after checking every column has unit norm.
    pub fn normalized(z: Matrix, zp: Matrix) -> Result<Self> {
        Self::with_flag(z, zp, true)
    }

    fn with_flag(z: Matrix, zp: Matrix, normalized: bool) -> Result<Self> {
        if z.shape() != zp.shape() {
            return Err(Error::InvalidInput(format!(
                "branch shapes differ: {:?} vs {:?}",
                z.shape(),
                zp.shape()
            )));
        }
        numerics::ensure_finite(&z, "embeddings")?;
        numerics::ensure_finite(&zp, "second-branch embeddings")?;
        if normalized {
            for (which, m) in [("z", &z), ("z'", &zp)] {
                for (i, col) in m.column_iter().enumerate() {
                    let norm = col.norm();
                    if (norm - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(Error::InvalidInput(format!(
                            "{which} column {i} has norm {norm}, expected 1"
                        )));
                    }
                }
            }
        }
        Ok(Self { z, zp, normalized })
    }

    pub fn n(&self) -> usize {
        self.z.ncols()
    }

    fn require_pairs(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::DegenerateInput(format!(
                "InfoNCE needs at least 2 samples, got {}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Row-stochastic softmax weights. `alpha[(i, j)]` for `j ≠ i` weights the
/// negative `z_j`; `alpha[(i, i)]` weights the positive `z'_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxWeights {
    pub alpha: Matrix,
    /// `ln Z_i`; the partition itself can under- or overflow.
    pub log_partition: Vec<f64>,
}

impl SoftmaxWeights {
    pub fn partition(&self) -> Vec<f64> {
        self.log_partition.iter().map(|l| l.exp()).collect()
    }

    /// `Σ_{j≠i} α_ij` per row. Summing the off-diagonal entries keeps full
    /// precision when `α_ii` is close to 1.
    pub fn negative_mass(&self) -> Vec<f64> {
        let n = self.alpha.nrows();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| self.alpha[(i, j)]).sum())
            .collect()
    }

    /// `Σ_{j≠i} α_ji` per column.
    pub fn incoming_mass(&self) -> Vec<f64> {
        let n = self.alpha.nrows();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| self.alpha[(j, i)]).sum())
            .collect()
    }

    /// `alpha` with its diagonal zeroed.
    pub fn off_diagonal(&self) -> Matrix {
        let mut a = self.alpha.clone();
        a.fill_diagonal(0.0);
        a
    }
}

/// Gradients of the loss on each branch's embeddings and, once assembled,
/// the weight-space matrix `G = Σ_i g_{z_i} x_iᵀ + g_{z'_i} x'_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub g_z: Matrix,
    pub g_zp: Matrix,
    pub g: Option<Matrix>,
}

/// `X = Σ̂₀ − Σ̂₁` computed along two independent algebraic routes.
#[derive(Debug, Clone)]
pub struct ContrastDecomposition {
    /// Direct sum over samples.
    pub x: Matrix,
    /// Weighted data covariance `Σ_{i≠j} α_ij (x_i − x_j)(x_i − x_j)ᵀ`.
    pub sigma0: Matrix,
    /// Weighted augmentation covariance `Σ_i (1 − α_ii)(x'_i − x_i)(x'_i − x_i)ᵀ`.
    pub sigma1: Matrix,
}

impl ContrastDecomposition {
    /// Relative Frobenius mismatch between the direct sum and `Σ̂₀ − Σ̂₁`.
    pub fn route_mismatch(&self) -> f64 {
        numerics::rel_frobenius(&self.x, &(&self.sigma0 - &self.sigma1))
    }

    /// Smallest eigenvalue of the symmetrized `X`; negative values mean the
    /// augmentation dominates along some direction.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let sym = (&self.x + self.x.transpose()) * 0.5;
        Ok(numerics::symmetric_eigen(&sym)?.min_value())
    }
}

fn sq_dist(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    a.column(i)
        .iter()
        .zip(b.column(j).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Logits `ℓ_ij` (negatives off the diagonal, positive on it).
fn logits(emb: &EmbeddingBatch) -> Matrix {
    let n = emb.n();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            -0.5 * sq_dist(&emb.z, i, &emb.zp, i)
        } else {
            -0.5 * sq_dist(&emb.z, i, &emb.z, j)
        }
    })
}

pub(crate) fn row_softmax(logits: &Matrix) -> SoftmaxWeights {
    let n = logits.nrows();
    let mut alpha = Matrix::zeros(n, logits.ncols());
    let mut log_partition = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let (argmax, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, l)| if l > acc.1 { (j, l) } else { acc });
        // Summing the non-maximal terms apart keeps log1p accurate near zero loss.
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != argmax)
            .map(|(_, l)| (l - max).exp())
            .sum();
        for (j, l) in row.iter().enumerate() {
            alpha[(i, j)] = (l - max).exp() / (1.0 + rest);
        }
        log_partition.push(max + rest.ln_1p());
    }
    SoftmaxWeights {
        alpha,
        log_partition,
    }
}

pub fn softmax_weights(emb: &EmbeddingBatch) -> Result<SoftmaxWeights> {
    emb.require_pairs()?;
    Ok(row_softmax(&logits(emb)))
}

/// `L = −Σ_i log α_ii`.
pub fn infonce_loss(emb: &EmbeddingBatch) -> Result<f64> {
    emb.require_pairs()?;
    let l = logits(emb);
    let w = row_softmax(&l);
    Ok((0..emb.n()).map(|i| w.log_partition[i] - l[(i, i)]).sum())
}

/// Loss together with the softmax weights it was computed from.
pub fn loss_and_weights(emb: &EmbeddingBatch) -> Result<(f64, SoftmaxWeights)> {
    emb.require_pairs()?;
    let l = logits(emb);
    let w = row_softmax(&l);
    let loss = (0..emb.n()).map(|i| w.log_partition[i] - l[(i, i)]).sum();
    Ok((loss, w))
}

/// Analytic `∂L/∂z_i` and `∂L/∂z'_i`:
///
/// `g_{z_i}  = Σ_{j≠i} α_ij (z_j − z'_i) + Σ_{j≠i} α_ji (z_j − z_i)`
/// `g_{z'_i} = Σ_{j≠i} α_ij (z'_i − z_i)`
pub fn embedding_grads(emb: &EmbeddingBatch) -> Result<GradientBundle> {
    if emb.normalized {
        return Err(Error::UnsupportedMode(
            "squared-distance gradients apply to unnormalized embeddings; use the cosine loss"
                .into(),
        ));
    }
    let w = softmax_weights(emb)?;
    Ok(grads_from_weights(emb, &w))
}

pub(crate) fn grads_from_weights(emb: &EmbeddingBatch, w: &SoftmaxWeights) -> GradientBundle {
    let a = w.off_diagonal();
    let out_mass = w.negative_mass();
    let in_mass = w.incoming_mass();
    let mut g_z = &emb.z * a.transpose() + &emb.z * &a;
    let mut g_zp = &emb.zp - &emb.z;
    for i in 0..emb.n() {
        let mut col = g_z.column_mut(i);
        col.axpy(-out_mass[i], &emb.zp.column(i), 1.0);
        col.axpy(-in_mass[i], &emb.z.column(i), 1.0);
        g_zp.column_mut(i).scale_mut(out_mass[i]);
    }
    GradientBundle {
        g_z,
        g_zp,
        g: None,
    }
}

/// `G = Σ_i (g_{z_i} x_iᵀ + g_{z'_i} x'_iᵀ)`; for `z = W x` this is `∂L/∂W`.
pub fn assemble_g(grads: &GradientBundle, batch: &Batch) -> Result<Matrix> {
    assemble_g_from(grads, &batch.x, &batch.xp)
}

/// As [`assemble_g`], with explicit layer inputs for each branch.
pub fn assemble_g_from(grads: &GradientBundle, input: &Matrix, input_p: &Matrix) -> Result<Matrix> {
    if grads.g_z.ncols() != input.ncols()
        || grads.g_zp.ncols() != input_p.ncols()
        || grads.g_z.shape() != grads.g_zp.shape()
        || input.shape() != input_p.shape()
    {
        return Err(Error::InvalidInput(format!(
            "gradient shape {:?} incompatible with inputs {:?}",
            grads.g_z.shape(),
            input.shape()
        )));
    }
    Ok(&grads.g_z * input.transpose() + &grads.g_zp * input_p.transpose())
}

/// Builds `X` from a batch and the softmax weights of its embeddings.
pub fn build_x(batch: &Batch, weights: &SoftmaxWeights) -> Result<ContrastDecomposition> {
    let n = batch.n();
    if weights.alpha.shape() != (n, n) {
        return Err(Error::InvalidInput(format!(
            "weights are {:?} but batch has {n} samples",
            weights.alpha.shape()
        )));
    }
    let a = weights.off_diagonal();
    let out_mass = weights.negative_mass();
    let in_mass = weights.incoming_mass();
    let x = &batch.x;
    let xp = &batch.xp;

    // Direct route: Σ_i v_i x_iᵀ − Σ_i (1 − α_ii)(x'_i − x_i) x'_iᵀ.
    let mut v = -(x * a.transpose()) - x * &a;
    let mut aug = xp - x;
    for i in 0..n {
        let mut col = v.column_mut(i);
        col.axpy(out_mass[i], &xp.column(i), 1.0);
        col.axpy(in_mass[i], &x.column(i), 1.0);
        aug.column_mut(i).scale_mut(out_mass[i]);
    }
    let direct = &v * x.transpose() - &aug * xp.transpose();

    // Covariance route: Σ̂₀ = X L Xᵀ with the graph Laplacian of α + αᵀ.
    let mut laplacian = -(&a + a.transpose());
    for i in 0..n {
        laplacian[(i, i)] = out_mass[i] + in_mass[i];
    }
    let sigma0 = symmetrize(x * laplacian * x.transpose());
    let eta = xp - x;
    let mut weighted = eta.clone();
    for i in 0..n {
        weighted.column_mut(i).scale_mut(out_mass[i]);
    }
    let sigma1 = symmetrize(weighted * eta.transpose());

    Ok(ContrastDecomposition {
        x: direct,
        sigma0,
        sigma1,
    })
}

fn symmetrize(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}
