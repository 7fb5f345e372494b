//! Plain gradient descent as explicit-Euler gradient flow, the fixed-`X`
//! closed form, and analytic rates for singular values, singular vectors,
//! and the alignment matrix.

use crate::directclr;
use crate::error::{Error, Result};
use crate::infonce::{self, EmbeddingBatch, GradientBundle};
use crate::models::{self, LinearStack};
use crate::numerics::{self, Matrix, SvdFactors};
use crate::rng;
use crate::synthdata::{self, AugmentationSpec, Batch, DataSpec};

/// Any weight entry beyond this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Rate formulas refuse spectra whose closest singular values are nearer.
pub const DEGENERATE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Fresh batch every step; otherwise one batch for the whole run.
    pub resample: bool,
    pub record_every: usize,
    pub seed: u64,
    /// Cosine InfoNCE on normalized embeddings instead of the squared-distance form.
    pub normalize: bool,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be finite and >= 0".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::DegenerateInput("batch size must be >= 2".into()));
        }
        Ok(())
    }
}

/// Weights of every layer at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub layers: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Step 0, every `record_every`-th step, and the final step.
    pub snapshots: Vec<Snapshot>,
    /// Loss evaluated before each update.
    pub losses: Vec<f64>,
    pub final_stack: LinearStack,
}

impl Trajectory {
    pub fn first(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds at least the initial snapshot")
    }
}

/// Loss and `Ẇ_l = −∂L/∂W_l` for every layer on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub loss: f64,
    pub w_dot: Vec<Matrix>,
    /// Embedding gradients of the batch.
    pub grads: GradientBundle,
}

pub fn velocity(stack: &LinearStack, batch: &Batch, normalize: bool) -> Result<Velocity> {
    let fwd = models::forward_pair(stack, batch)?;
    let (loss, grads) = if normalize {
        directclr::cosine_infonce_raw(&fwd.z, &fwd.zp)?
    } else {
        let emb = EmbeddingBatch::new(fwd.z.clone(), fwd.zp.clone())?;
        let (loss, w) = infonce::loss_and_weights(&emb)?;
        (loss, infonce::grads_from_weights(&emb, &w))
    };
    let w_dot = models::backprop(stack, &fwd, &grads)?
        .into_iter()
        .map(|g| -g)
        .collect();
    Ok(Velocity { loss, w_dot, grads })
}

/// One Euler step `W ← W − lr·∂L/∂W`; returns the pre-step loss.
pub fn euler_step(stack: &mut LinearStack, batch: &Batch, lr: f64, normalize: bool) -> Result<f64> {
    let v = velocity(stack, batch, normalize)?;
    for (w, dw) in stack.layers.iter_mut().zip(&v.w_dot) {
        *w += dw * lr;
    }
    Ok(v.loss)
}

/// Trains `stack` on batches from `data`/`aug`. Deterministic in `cfg.seed`.
pub fn train(stack: &LinearStack, data: &DataSpec, aug: &AugmentationSpec, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::STREAM_BATCH);
    let mut batch = synthdata::sample_batch_with(data, aug, cfg.batch_size, &mut rng)?;
    batch.seed = cfg.seed;
    train_with(stack, cfg, |step| {
        if cfg.resample && step > 0 {
            batch = synthdata::sample_batch_with(data, aug, cfg.batch_size, &mut rng)?;
            batch.seed = cfg.seed;
        }
        Ok(batch.clone())
    })
}

/// Trains on a single fixed batch.
pub fn train_on_batch(stack: &LinearStack, batch: &Batch, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    train_with(stack, cfg, |_| Ok(batch.clone()))
}

fn train_with(
    stack: &LinearStack,
    cfg: &FlowConfig,
    mut next_batch: impl FnMut(usize) -> Result<Batch>,
) -> Result<Trajectory> {
    let mut stack = stack.clone();
    let mut snapshots = vec![Snapshot {
        step: 0,
        layers: stack.layers.clone(),
    }];
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = next_batch(step)?;
        losses.push(euler_step(&mut stack, &batch, cfg.learning_rate, cfg.normalize)?);
        let done = step + 1;
        let magnitude = stack.max_abs_entry();
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: done, magnitude });
        }
        if done % cfg.record_every == 0 || done == cfg.steps {
            snapshots.push(Snapshot {
                step: done,
                layers: stack.layers.clone(),
            });
        }
    }
    Ok(Trajectory {
        snapshots,
        losses,
        final_stack: stack,
    })
}

/// `W(t) = W(0)·exp(X t)`, the solution of `Ẇ = W X` for fixed symmetric `X`.
pub fn closed_form_flow(w0: &Matrix, x: &Matrix, t: f64) -> Result<Matrix> {
    numerics::ensure_symmetric(x, "X")?;
    if w0.ncols() != x.nrows() {
        return Err(Error::InvalidInput(format!(
            "W has {} columns but X is {}×{}",
            w0.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(w0 * numerics::matrix_exp_symmetric(&(x * t))?)
}

/// Euler integration of `Ẇ = W X` with `X` held fixed.
pub fn frozen_flow_euler(w0: &Matrix, x: &Matrix, lr: f64, steps: usize) -> Result<Matrix> {
    if w0.ncols() != x.nrows() || !x.is_square() {
        return Err(Error::InvalidInput("W and X do not compose".into()));
    }
    let step = Matrix::identity(x.nrows(), x.ncols()) + x * lr;
    let mut w = w0.clone();
    for _ in 0..steps {
        w = &w * &step;
    }
    Ok(w)
}

fn nondegenerate_svd(w: &Matrix) -> Result<SvdFactors> {
    let f = numerics::svd(w)?;
    if !w.is_square() {
        return Err(Error::InvalidInput("rate formulas need square matrices".into()));
    }
    let gap = f.min_gap();
    if gap < DEGENERATE_GAP {
        return Err(Error::DegenerateSpectrum {
            gap,
            threshold: DEGENERATE_GAP,
        });
    }
    Ok(f)
}

/// `H_kk' = 1/(σ_k² − σ_k'²)` off the diagonal, zero on it.
pub fn h_matrix(s: &[f64]) -> Matrix {
    let d = s.len();
    Matrix::from_fn(d, d, |k, j| {
        if k == j {
            0.0
        } else {
            1.0 / (s[k] * s[k] - s[j] * s[j])
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sigma_rates: Vec<f64>,
    pub u_rate: Matrix,
    pub v_rate: Matrix,
    pub h: Matrix,
}

/// `σ̇_k = u_kᵀ Ẇ v_k`.
pub fn singular_value_rates(w: &Matrix, w_dot: &Matrix) -> Result<Vec<f64>> {
    let f = nondegenerate_svd(w)?;
    Ok(sigma_rates(&f, w_dot))
}

fn sigma_rates(f: &SvdFactors, w_dot: &Matrix) -> Vec<f64> {
    let m = f.u.transpose() * w_dot * &f.v;
    (0..f.s.len()).map(|k| m[(k, k)]).collect()
}

/// Singular-vector velocities of `W = U S Vᵀ`:
///
/// `U̇ = −U (H ∘ (UᵀẆV S + S VᵀẆᵀU))`, `V̇ = −V (H ∘ (VᵀẆᵀU S + S UᵀẆV))`.
pub fn singular_vector_rates(w: &Matrix, w_dot: &Matrix) -> Result<RateReport> {
    if w.shape() != w_dot.shape() {
        return Err(Error::InvalidInput("W and Ẇ differ in shape".into()));
    }
    let f = nondegenerate_svd(w)?;
    let s = numerics::diag(&f.s);
    let h = h_matrix(&f.s);
    let m = f.u.transpose() * w_dot * &f.v;
    let omega_u = -h.component_mul(&(&m * &s + &s * m.transpose()));
    let omega_v = -h.component_mul(&(m.transpose() * &s + &s * &m));
    Ok(RateReport {
        sigma_rates: sigma_rates(&f, w_dot),
        u_rate: &f.u * omega_u,
        v_rate: &f.v * omega_v,
        h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRateReport {
    pub a_rate: Matrix,
    /// `F = S₂ U₂ᵀ G V₁ S₁`.
    pub f: Matrix,
}

/// Velocity of `A = V₂ᵀU₁` under `Ẇ₁ = −W₂ᵀG`, `Ẇ₂ = −G W₁ᵀ`:
///
/// `Ȧ = A (H₁ ∘ (AᵀF + FᵀA)) − (H₂ ∘ (A Fᵀ + F Aᵀ)) A`.
pub fn alignment_rate(w1: &Matrix, w2: &Matrix, g: &Matrix) -> Result<AlignmentRateReport> {
    check_pair(w1, w2, g)?;
    let f1 = nondegenerate_svd(w1)?;
    let f2 = nondegenerate_svd(w2)?;
    let a = f2.v.transpose() * &f1.u;
    let f = numerics::diag(&f2.s) * f2.u.transpose() * g * &f1.v * numerics::diag(&f1.s);
    let h1 = h_matrix(&f1.s);
    let h2 = h_matrix(&f2.s);
    let a_rate = &a * h1.component_mul(&(a.transpose() * &f + f.transpose() * &a))
        - h2.component_mul(&(&a * f.transpose() + &f * a.transpose())) * &a;
    Ok(AlignmentRateReport { a_rate, f })
}

fn check_pair(w1: &Matrix, w2: &Matrix, g: &Matrix) -> Result<()> {
    if w2.ncols() != w1.nrows() || g.nrows() != w2.nrows() || g.ncols() != w1.ncols() {
        return Err(Error::InvalidInput(format!(
            "W1 {:?}, W2 {:?}, G {:?} do not compose",
            w1.shape(),
            w2.shape(),
            g.shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRates {
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Two-layer singular value rates without any alignment assumption:
///
/// `σ̇₁ᵏ = −Σ_k' (v₂^k'ᵀ u₁ᵏ) σ₂^k' (u₂^k'ᵀ G v₁ᵏ)`,
/// `σ̇₂ᵏ = −Σ_k' (u₂ᵏᵀ G v₁^k') σ₁^k' (u₁^k'ᵀ v₂ᵏ)`.
pub fn paired_rates_full(w1: &Matrix, w2: &Matrix, g: &Matrix) -> Result<PairedRates> {
    check_pair(w1, w2, g)?;
    let f1 = nondegenerate_svd(w1)?;
    let f2 = nondegenerate_svd(w2)?;
    let overlap = f2.v.transpose() * &f1.u; // (k', k) = v₂^k'ᵀ u₁ᵏ
    let coupling = f2.u.transpose() * g * &f1.v; // (k', k) = u₂^k'ᵀ G v₁ᵏ
    let d1 = f1.s.len();
    let d2 = f2.s.len();
    let sigma1 = (0..d1)
        .map(|k| -(0..d2).map(|j| overlap[(j, k)] * f2.s[j] * coupling[(j, k)]).sum::<f64>())
        .collect();
    let sigma2 = (0..d2)
        .map(|k| -(0..d1).map(|j| coupling[(k, j)] * f1.s[j] * overlap[(k, j)]).sum::<f64>())
        .collect();
    Ok(PairedRates { sigma1, sigma2 })
}

/// Rates for perfectly aligned layers:
/// `σ̇₁ᵏ = σ₁ᵏ (σ₂ᵏ)² (v₁ᵏᵀ X v₁ᵏ)`, `σ̇₂ᵏ = σ₂ᵏ (σ₁ᵏ)² (v₁ᵏᵀ X v₁ᵏ)`.
pub fn paired_rates_aligned(s1: &[f64], s2: &[f64], v1: &Matrix, x: &Matrix) -> Result<PairedRates> {
    numerics::ensure_symmetric(x, "X")?;
    if s1.len() != s2.len() || v1.ncols() < s1.len() || v1.nrows() != x.nrows() {
        return Err(Error::InvalidInput("aligned rates need matching s1, s2, V1, X".into()));
    }
    let q: Vec<f64> = (0..s1.len())
        .map(|k| {
            let v = v1.column(k);
            v.dot(&(x * v))
        })
        .collect();
    Ok(PairedRates {
        sigma1: (0..s1.len()).map(|k| s1[k] * s2[k] * s2[k] * q[k]).collect(),
        sigma2: (0..s1.len()).map(|k| s2[k] * s1[k] * s1[k] * q[k]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{InitMode, InitSpec, Nonlinearity};
    use crate::numerics::rel_frobenius;

    fn cfg(lr: f64, steps: usize) -> FlowConfig {
        FlowConfig {
            learning_rate: lr,
            steps,
            batch_size: 8,
            resample: true,
            record_every: 5,
            seed: 1,
            normalize: false,
        }
    }

    fn setup(depth: usize) -> (LinearStack, DataSpec, AugmentationSpec) {
        let init = InitSpec {
            seed: 3,
            sv_min: 0.1,
            sv_max: 1.0,
            mode: InitMode::DistinctSingularValues,
        };
        (
            models::init_stack(6, depth, &init, Nonlinearity::None).unwrap(),
            DataSpec::new(6, synthdata::DEFAULT_SCALE).unwrap(),
            AugmentationSpec::trailing_block(6, 3, 1.0).unwrap(),
        )
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let (s, d, a) = setup(2);
        let t = train(&s, &d, &a, &cfg(0.0, 12)).unwrap();
        assert_eq!(t.snapshots.len(), 4);
        assert!(t.snapshots.iter().all(|snap| snap.layers == s.layers));
        assert_eq!(t.losses.len(), 12);
    }

    #[test]
    fn training_is_deterministic() {
        let (s, d, a) = setup(1);
        assert_eq!(train(&s, &d, &a, &cfg(0.01, 10)).unwrap(), train(&s, &d, &a, &cfg(0.01, 10)).unwrap());
    }

    #[test]
    fn divergence_names_step() {
        let (s, d, a) = setup(1);
        let scaled = LinearStack::new(vec![&s.layers[0] * 1e6], Nonlinearity::None).unwrap();
        let err = train(&scaled, &d, &a, &cfg(1e4, 100)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn closed_form_diagonal() {
        let x = numerics::diag(&[1.0, -1.0]);
        let w = closed_form_flow(&Matrix::identity(2, 2), &x, 1.0).unwrap();
        let expected = numerics::diag(&[1f64.exp(), (-1f64).exp()]);
        assert!(rel_frobenius(&w, &expected) < 1e-14);
        assert_eq!(closed_form_flow(&expected, &x, 0.0).unwrap(), expected);
        let bad = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(closed_form_flow(&expected, &bad, 1.0).is_err());
    }

    #[test]
    fn diagonal_rates() {
        let w = numerics::diag(&[2.0, 1.0]);
        let rates = singular_value_rates(&w, &numerics::diag(&[0.3, -0.7])).unwrap();
        assert!((rates[0] - 0.3).abs() < 1e-15 && (rates[1] + 0.7).abs() < 1e-15);
        let r = singular_vector_rates(&w, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(r.u_rate.amax(), 0.0);
        assert_eq!(r.h[(0, 0)], 0.0);
        assert_eq!(r.h[(0, 1)], -r.h[(1, 0)]);
    }

    #[test]
    fn degenerate_spectrum_refused() {
        let err = singular_value_rates(&Matrix::identity(3, 3), &Matrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { .. }));
    }

    #[test]
    fn aligned_rates_vanish_at_zero() {
        let x = numerics::diag(&[1.0, 2.0]);
        let r = paired_rates_aligned(&[0.0, 1.0], &[1.0, 1.0], &Matrix::identity(2, 2), &x).unwrap();
        assert_eq!(r.sigma1[0], 0.0);
        assert_eq!(r.sigma1[1], 2.0);
    }
}
