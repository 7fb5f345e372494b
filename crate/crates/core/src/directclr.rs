//! Cosine InfoNCE, the sub-vector (DirectCLR) loss, projector variants, and
//! the gradient-rank probe through a residual encoder.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::infonce::{self, EmbeddingBatch, GradientBundle, SoftmaxWeights, UNIT_NORM_TOL};
use crate::models::{self, ResidualEncoder};
use crate::numerics::{self, Matrix};
use crate::rng::{self, SeededRng};
use crate::synthdata::{self, AugmentationSpec, Batch, DataSpec};

/// Gradient entries at or below this magnitude count as zero in the probe.
pub const NONZERO_TOL: f64 = 1e-12;

/// Length `d0` of the leading sub-vector `r[0..d0]` fed to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubvectorSpec {
    pub d0: usize,
}

impl SubvectorSpec {
    pub fn validate(&self, rep_dim: usize) -> Result<()> {
        if self.d0 == 0 || self.d0 > rep_dim {
            return Err(Error::InvalidInput(format!(
                "sub-vector length {} outside 1..={rep_dim}",
                self.d0
            )));
        }
        Ok(())
    }
}

/// Scales every column to unit norm; returns the normalized matrix and the
/// original norms.
pub fn normalize_columns(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.ncols());
    for (i, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Normalization { sample: i });
        }
        col /= norm;
        norms.push(norm);
    }
    Ok((out, norms))
}

fn require_unit(emb: &EmbeddingBatch) -> Result<()> {
    if emb.normalized {
        return Ok(());
    }
    for (which, m) in [("z", &emb.z), ("z'", &emb.zp)] {
        for (i, col) in m.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "cosine InfoNCE needs unit columns; {which} column {i} has norm {norm}"
                )));
            }
        }
    }
    Ok(())
}

fn cosine_weights(emb: &EmbeddingBatch) -> Result<(Matrix, SoftmaxWeights)> {
    require_unit(emb)?;
    if emb.n() < 2 {
        return Err(Error::DegenerateInput(format!(
            "InfoNCE needs at least 2 samples, got {}",
            emb.n()
        )));
    }
    let mut logits = emb.z.transpose() * &emb.z;
    for i in 0..emb.n() {
        logits[(i, i)] = emb.z.column(i).dot(&emb.zp.column(i));
    }
    let w = infonce::row_softmax(&logits);
    Ok((logits, w))
}

/// `L = −Σ_i log[exp(ẑ_i·ẑ'_i) / (exp(ẑ_i·ẑ'_i) + Σ_{j≠i} exp(ẑ_i·ẑ_j))]`.
pub fn cosine_infonce(emb: &EmbeddingBatch) -> Result<f64> {
    let (logits, w) = cosine_weights(emb)?;
    Ok((0..emb.n()).map(|i| w.log_partition[i] - logits[(i, i)]).sum())
}

/// Loss and its gradients with respect to the unit vectors `ẑ`, `ẑ'`.
pub fn cosine_loss_and_grads(emb: &EmbeddingBatch) -> Result<(f64, GradientBundle)> {
    let (logits, w) = cosine_weights(emb)?;
    let loss = (0..emb.n()).map(|i| w.log_partition[i] - logits[(i, i)]).sum();
    let a = w.off_diagonal();
    let miss = w.negative_mass();
    let mut g_z = &emb.z * a.transpose() + &emb.z * &a;
    let mut g_zp = emb.z.clone();
    for i in 0..emb.n() {
        g_z.column_mut(i).axpy(-miss[i], &emb.zp.column(i), 1.0);
        g_zp.column_mut(i).scale_mut(-miss[i]);
    }
    Ok((
        loss,
        GradientBundle {
            g_z,
            g_zp,
            g: None,
        },
    ))
}

/// Pulls a gradient on `ẑ = z/|z|` back to `z`: `(g − ẑ(ẑ·g)) / |z|`.
fn through_normalization(unit: &Matrix, norms: &[f64], g: &Matrix) -> Matrix {
    let mut out = g.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        let u = unit.column(i);
        let radial = u.dot(&col);
        col.axpy(-radial, &u, 1.0);
        col /= norms[i];
    }
    out
}

/// Cosine InfoNCE of raw embeddings (normalized internally) with gradients
/// on the raw embeddings.
pub fn cosine_infonce_raw(z: &Matrix, zp: &Matrix) -> Result<(f64, GradientBundle)> {
    let (uz, nz) = normalize_columns(z)?;
    let (uzp, nzp) = normalize_columns(zp)?;
    let emb = EmbeddingBatch {
        z: uz,
        zp: uzp,
        normalized: true,
    };
    let (loss, g) = cosine_loss_and_grads(&emb)?;
    Ok((
        loss,
        GradientBundle {
            g_z: through_normalization(&emb.z, &nz, &g.g_z),
            g_zp: through_normalization(&emb.zp, &nzp, &g.g_zp),
            g: None,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectClrOutput {
    pub loss: f64,
    pub grad_r: Matrix,
    pub grad_rp: Matrix,
}

/// Cosine InfoNCE on the normalized leading sub-vectors `r[0..d0]`. The
/// gradient rows `d0..` are left at exactly zero.
pub fn directclr_loss(r: &Matrix, rp: &Matrix, spec: &SubvectorSpec) -> Result<DirectClrOutput> {
    if r.shape() != rp.shape() {
        return Err(Error::InvalidInput(format!(
            "representation shapes differ: {:?} vs {:?}",
            r.shape(),
            rp.shape()
        )));
    }
    spec.validate(r.nrows())?;
    let z = r.rows(0, spec.d0).into_owned();
    let zp = rp.rows(0, spec.d0).into_owned();
    let (loss, g) = cosine_infonce_raw(&z, &zp)?;
    let mut grad_r = Matrix::zeros(r.nrows(), r.ncols());
    let mut grad_rp = Matrix::zeros(r.nrows(), r.ncols());
    grad_r.rows_mut(0, spec.d0).copy_from(&g.g_z);
    grad_rp.rows_mut(0, spec.d0).copy_from(&g.g_zp);
    Ok(DirectClrOutput {
        loss,
        grad_r,
        grad_rp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorVariant {
    #[default]
    None,
    TrainableLinear,
    TrainableDiagonal,
    Orthogonal,
    FixedLowrank,
    FixedLowrankDiagonal,
    RandomDropout,
}

impl ProjectorVariant {
    pub const ALL: [ProjectorVariant; 7] = [
        ProjectorVariant::None,
        ProjectorVariant::TrainableLinear,
        ProjectorVariant::TrainableDiagonal,
        ProjectorVariant::Orthogonal,
        ProjectorVariant::FixedLowrank,
        ProjectorVariant::FixedLowrankDiagonal,
        ProjectorVariant::RandomDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProjectorVariant::None => "none",
            ProjectorVariant::TrainableLinear => "trainable_linear",
            ProjectorVariant::TrainableDiagonal => "trainable_diagonal",
            ProjectorVariant::Orthogonal => "orthogonal",
            ProjectorVariant::FixedLowrank => "fixed_lowrank",
            ProjectorVariant::FixedLowrankDiagonal => "fixed_lowrank_diagonal",
            ProjectorVariant::RandomDropout => "random_dropout",
        }
    }

    pub fn is_trainable(self) -> bool {
        matches!(
            self,
            ProjectorVariant::TrainableLinear | ProjectorVariant::TrainableDiagonal | ProjectorVariant::Orthogonal
        )
    }

    fn uses_rank(self) -> bool {
        matches!(
            self,
            ProjectorVariant::FixedLowrank | ProjectorVariant::FixedLowrankDiagonal | ProjectorVariant::RandomDropout
        )
    }
}

impl fmt::Display for ProjectorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectorVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProjectorVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ProjectorVariant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown projector variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSpec {
    pub variant: ProjectorVariant,
    /// Rank of the fixed low-rank variants, subset size for dropout.
    pub rank_or_d0: usize,
    pub seed: u64,
    /// Initial skew-symmetric parameter of the orthogonal variant; zero if absent.
    pub skew_params: Option<Matrix>,
}

impl ProjectorSpec {
    pub fn new(variant: ProjectorVariant, rank_or_d0: usize, seed: u64) -> Self {
        Self {
            variant,
            rank_or_d0,
            seed,
            skew_params: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.variant.uses_rank() && (self.rank_or_d0 == 0 || self.rank_or_d0 > dim) {
            return Err(Error::InvalidInput(format!(
                "{} needs rank in 1..={dim}, got {}",
                self.variant, self.rank_or_d0
            )));
        }
        if let Some(k) = &self.skew_params {
            if self.variant != ProjectorVariant::Orthogonal {
                return Err(Error::InvalidInput(format!("skew parameters given for {}", self.variant)));
            }
            if k.shape() != (dim, dim) {
                return Err(Error::InvalidInput(format!("skew parameters must be {dim}×{dim}")));
            }
            numerics::ensure_finite(k, "skew parameters")?;
            if (k + k.transpose()).amax() > numerics::SYMMETRY_TOL * k.amax().max(1.0) {
                return Err(Error::InvalidInput("skew parameters are not skew-symmetric".into()));
            }
        }
        Ok(())
    }
}

/// A realized projector. `matrix` is what multiplies the representation.
#[derive(Debug, Clone)]
pub struct Projector {
    pub spec: ProjectorSpec,
    pub matrix: Matrix,
    /// Skew parameter `K` with `matrix = exp(K)` for the orthogonal variant.
    skew: Option<Matrix>,
    dropout_rng: Option<SeededRng>,
}

fn truncation(dim: usize, rank: usize) -> Matrix {
    Matrix::from_fn(dim, dim, |i, j| if i == j && i < rank { 1.0 } else { 0.0 })
}

impl Projector {
    pub fn new(spec: &ProjectorSpec, dim: usize) -> Result<Self> {
        spec.validate(dim)?;
        let mut skew = None;
        let mut dropout_rng = None;
        let matrix = match spec.variant {
            ProjectorVariant::None | ProjectorVariant::TrainableLinear | ProjectorVariant::TrainableDiagonal => {
                Matrix::identity(dim, dim)
            }
            ProjectorVariant::Orthogonal => {
                let k = spec.skew_params.clone().unwrap_or_else(|| Matrix::zeros(dim, dim));
                let q = numerics::matrix_exp_skew(&k)?;
                skew = Some(k);
                q
            }
            ProjectorVariant::FixedLowrank => {
                let mut rng = rng::stream(spec.seed, rng::STREAM_PROJECTOR);
                let left = rng::random_orthogonal(dim, &mut rng);
                let right = rng::random_orthogonal(dim, &mut rng);
                left * truncation(dim, spec.rank_or_d0) * right.transpose()
            }
            ProjectorVariant::FixedLowrankDiagonal => truncation(dim, spec.rank_or_d0),
            ProjectorVariant::RandomDropout => {
                dropout_rng = Some(rng::stream(spec.seed, rng::STREAM_DROPOUT));
                Matrix::zeros(dim, dim)
            }
        };
        let mut p = Self {
            spec: spec.clone(),
            matrix,
            skew,
            dropout_rng,
        };
        p.resample();
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Draws a fresh coordinate subset (dropout variant only; a no-op
    /// otherwise). Both branches of a step share the subset.
    pub fn resample(&mut self) {
        let dim = self.dim();
        if let Some(rng) = self.dropout_rng.as_mut() {
            let mut keep = index::sample(rng, dim, self.spec.rank_or_d0).into_vec();
            keep.sort_unstable();
            self.matrix.fill(0.0);
            for k in keep {
                self.matrix[(k, k)] = 1.0;
            }
        }
    }

    pub fn apply(&self, r: &Matrix) -> Result<Matrix> {
        if r.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "projector is {0}×{0} but representation has dim {1}",
                self.dim(),
                r.nrows()
            )));
        }
        Ok(&self.matrix * r)
    }

    /// Gradient step on the projector's own parameters given `∂L/∂P`.
    /// Fixed variants ignore the call.
    pub fn descend(&mut self, grad_p: &Matrix, lr: f64) -> Result<()> {
        match self.spec.variant {
            ProjectorVariant::TrainableLinear => self.matrix -= grad_p * lr,
            ProjectorVariant::TrainableDiagonal => {
                for k in 0..self.dim() {
                    self.matrix[(k, k)] -= lr * grad_p[(k, k)];
                }
            }
            ProjectorVariant::Orthogonal => {
                let k = self.skew.as_mut().expect("orthogonal projector keeps its parameter");
                let g = exp_frechet_adjoint(k, grad_p);
                let step = (&g - g.transpose()) * (0.5 * lr);
                *k -= step;
                self.matrix = numerics::matrix_exp_skew(k)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn skew_params(&self) -> Option<&Matrix> {
        self.skew.as_ref()
    }
}

/// `∂L/∂K` for `Q = exp(K)` given `∂L/∂Q`: the Fréchet derivative of the
/// exponential at `Kᵀ` applied to the upstream gradient, read off the
/// upper-right block of `exp([[Kᵀ, E], [0, Kᵀ]])`.
fn exp_frechet_adjoint(k: &Matrix, upstream: &Matrix) -> Matrix {
    let d = k.nrows();
    let kt = k.transpose();
    let mut block = Matrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&kt);
    block.view_mut((d, d), (d, d)).copy_from(&kt);
    block.view_mut((0, d), (d, d)).copy_from(upstream);
    block.exp().view((0, d), (d, d)).into_owned()
}

pub fn apply_projector(spec: &ProjectorSpec, r: &Matrix) -> Result<Matrix> {
    Projector::new(spec, r.nrows())?.apply(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRankReport {
    pub loss: f64,
    /// Largest `|∂L/∂r|` over rows `d0..` of both branches.
    pub grad_r_beyond_d0: f64,
    /// Rows of `∂L/∂h` (both branches) whose largest entry exceeds [`NONZERO_TOL`].
    pub grad_h_nonzero_fraction: f64,
    /// Entries of `∂L/∂h` exceeding [`NONZERO_TOL`].
    pub grad_h_nonzero_entries: f64,
    pub grad_r: Matrix,
    pub grad_h: Matrix,
    pub grad_rp: Matrix,
    pub grad_hp: Matrix,
}

impl GradientRankReport {
    pub fn masked_exactly(&self) -> bool {
        self.grad_r_beyond_d0 == 0.0
    }
}

/// Runs the sub-vector loss through a residual encoder and reports where
/// the gradient lands on `r` and on the pre-residual activations `h`.
pub fn gradient_rank_probe(encoder: &ResidualEncoder, batch: &Batch, spec: &SubvectorSpec) -> Result<GradientRankReport> {
    let out = models::residual_forward(encoder, &batch.x)?;
    let out_p = models::residual_forward(encoder, &batch.xp)?;
    let dc = directclr_loss(&out.r, &out_p.r, spec)?;
    let g = models::residual_backward(encoder, &out, &dc.grad_r)?;
    let gp = models::residual_backward(encoder, &out_p, &dc.grad_rp)?;

    let d_r = encoder.rep_dim();
    let tail = d_r - spec.d0;
    let beyond = if tail == 0 {
        0.0
    } else {
        dc.grad_r.rows(spec.d0, tail).amax().max(dc.grad_rp.rows(spec.d0, tail).amax())
    };
    let live_rows = (0..d_r)
        .filter(|&j| g.grad_h.row(j).amax().max(gp.grad_h.row(j).amax()) > NONZERO_TOL)
        .count();
    let entries = g.grad_h.len() + gp.grad_h.len();
    let live_entries = g.grad_h.iter().chain(gp.grad_h.iter()).filter(|v| v.abs() > NONZERO_TOL).count();
    Ok(GradientRankReport {
        loss: dc.loss,
        grad_r_beyond_d0: beyond,
        grad_h_nonzero_fraction: live_rows as f64 / d_r as f64,
        grad_h_nonzero_entries: live_entries as f64 / entries as f64,
        grad_r: dc.grad_r,
        grad_h: g.grad_h,
        grad_rp: dc.grad_rp,
        grad_hp: gp.grad_h,
    })
}

/// Plain gradient descent on a linear backbone followed by a projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorTraining {
    pub rep_dim: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ProjectorRun {
    pub variant: ProjectorVariant,
    /// Loss before each update.
    pub losses: Vec<f64>,
    pub backbone: Matrix,
    pub projector: Projector,
}

/// Trains `r = W x`, `z = P r` with cosine InfoNCE on `z`. The backbone
/// starts from Gaussian weights with variance `1 / d`; trainable projectors
/// are updated alongside it.
pub fn train_with_projector(
    spec: &ProjectorSpec,
    data: &DataSpec,
    aug: &AugmentationSpec,
    cfg: &ProjectorTraining,
) -> Result<ProjectorRun> {
    if cfg.steps == 0 || cfg.rep_dim == 0 {
        return Err(Error::InvalidInput("projector training needs steps and a representation".into()));
    }
    let mut projector = Projector::new(spec, cfg.rep_dim)?;
    let mut backbone =
        rng::normal_matrix(cfg.rep_dim, data.dim, &mut rng::stream(cfg.seed, rng::STREAM_ENCODER)) / (data.dim as f64).sqrt();
    let mut batches = rng::stream(cfg.seed, rng::STREAM_BATCH);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = synthdata::sample_batch_with(data, aug, cfg.batch_size, &mut batches)?;
        if step > 0 {
            projector.resample();
        }
        let r = &backbone * &batch.x;
        let rp = &backbone * &batch.xp;
        let (loss, g) = cosine_infonce_raw(&projector.apply(&r)?, &projector.apply(&rp)?)?;
        losses.push(loss);
        let grad_p = &g.g_z * r.transpose() + &g.g_zp * rp.transpose();
        let pt = projector.matrix.transpose();
        let grad_w = &pt * &g.g_z * batch.x.transpose() + &pt * &g.g_zp * batch.xp.transpose();
        backbone -= grad_w * cfg.learning_rate;
        projector.descend(&grad_p, cfg.learning_rate)?;
        if !backbone.iter().chain(projector.matrix.iter()).all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                magnitude: f64::INFINITY,
            });
        }
    }
    Ok(ProjectorRun {
        variant: spec.variant,
        losses,
        backbone,
        projector,
    })
}
