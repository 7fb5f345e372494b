//! Bias-free weight stacks, the toy residual encoder, and exact backprop.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::csvfmt;
use crate::error::{Error, Result};
use crate::infonce::GradientBundle;
use crate::numerics::{self, Matrix};
use crate::rng::{self, SeededRng};
use crate::synthdata::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    #[default]
    None,
    /// Rectifier between layers, never after the last.
    Relu,
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::None => "none",
            Nonlinearity::Relu => "relu",
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" | "linear" => Ok(Nonlinearity::None),
            "relu" | "rectifier" => Ok(Nonlinearity::Relu),
            other => Err(format!("unknown nonlinearity `{other}` (expected none|relu)")),
        }
    }
}

/// `z = W_L σ(… σ(W_1 x))`, `σ` the identity or a rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStack {
    pub layers: Vec<Matrix>,
    pub nonlinearity: Nonlinearity,
}

impl LinearStack {
    pub fn new(layers: Vec<Matrix>, nonlinearity: Nonlinearity) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("a stack needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::InvalidInput(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    l + 1,
                    pair[0].nrows(),
                    l + 2,
                    pair[1].ncols()
                )));
            }
        }
        for w in &layers {
            numerics::ensure_finite(w, "layer weights")?;
        }
        Ok(Self {
            layers,
            nonlinearity,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.depth() - 1].nrows()
    }

    /// End-to-end matrix `W_L ⋯ W_1` (meaningful in linear mode).
    pub fn product(&self) -> Matrix {
        let mut p = self.layers[0].clone();
        for w in &self.layers[1..] {
            p = w * p;
        }
        p
    }

    pub fn is_linear(&self) -> bool {
        self.nonlinearity == Nonlinearity::None
    }

    fn activates_after(&self, layer: usize) -> bool {
        self.nonlinearity == Nonlinearity::Relu && layer + 1 < self.depth()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.layers.iter().map(|w| w.amax()).fold(0.0, f64::max)
    }
}

/// Per-layer values kept from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input seen by each layer.
    pub inputs: Vec<Matrix>,
    /// Output of each layer before any rectifier.
    pub pre_activations: Vec<Matrix>,
}

pub fn forward(stack: &LinearStack, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    if x.nrows() != stack.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input has dim {} but the stack expects {}",
            x.nrows(),
            stack.input_dim()
        )));
    }
    let mut inputs = Vec::with_capacity(stack.depth());
    let mut pre_activations = Vec::with_capacity(stack.depth());
    let mut h = x.clone();
    for (l, w) in stack.layers.iter().enumerate() {
        let a = w * &h;
        inputs.push(h);
        h = if stack.activates_after(l) {
            a.map(|v| v.max(0.0))
        } else {
            a.clone()
        };
        pre_activations.push(a);
    }
    Ok((
        h,
        ForwardTrace {
            inputs,
            pre_activations,
        },
    ))
}

/// Forward pass of both views of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairForward {
    pub z: Matrix,
    pub zp: Matrix,
    pub trace: ForwardTrace,
    pub trace_p: ForwardTrace,
}

pub fn forward_pair(stack: &LinearStack, batch: &Batch) -> Result<PairForward> {
    let (z, trace) = forward(stack, &batch.x)?;
    let (zp, trace_p) = forward(stack, &batch.xp)?;
    Ok(PairForward {
        z,
        zp,
        trace,
        trace_p,
    })
}

fn backprop_branch(
    stack: &LinearStack,
    trace: &ForwardTrace,
    grad_out: &Matrix,
    grads: &mut [Matrix],
) -> Matrix {
    let mut g = grad_out.clone();
    for l in (0..stack.depth()).rev() {
        if stack.activates_after(l) {
            let pre = &trace.pre_activations[l];
            g.zip_apply(pre, |gv, p| {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            });
        }
        grads[l] += &g * trace.inputs[l].transpose();
        g = stack.layers[l].transpose() * g;
    }
    g
}

/// Chain-rule gradients `∂L/∂W_l` for every layer, given the embedding
/// gradients of both branches.
pub fn backprop(stack: &LinearStack, fwd: &PairForward, grads: &GradientBundle) -> Result<Vec<Matrix>> {
    backprop_with_input_grads(stack, fwd, grads).map(|(g, _, _)| g)
}

/// As [`backprop`], additionally returning the gradients on both inputs.
pub fn backprop_with_input_grads(
    stack: &LinearStack,
    fwd: &PairForward,
    grads: &GradientBundle,
) -> Result<(Vec<Matrix>, Matrix, Matrix)> {
    for t in [&fwd.trace, &fwd.trace_p] {
        if t.inputs.len() != stack.depth() || t.pre_activations.len() != stack.depth() {
            return Err(Error::State(format!(
                "forward trace holds {} layers but the stack has {}",
                t.inputs.len(),
                stack.depth()
            )));
        }
    }
    if grads.g_z.shape() != fwd.z.shape() || grads.g_zp.shape() != fwd.zp.shape() {
        return Err(Error::InvalidInput("embedding gradients do not match the forward pass".into()));
    }
    let mut out: Vec<Matrix> = stack
        .layers
        .iter()
        .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
        .collect();
    let gx = backprop_branch(stack, &fwd.trace, &grads.g_z, &mut out);
    let gxp = backprop_branch(stack, &fwd.trace_p, &grads.g_zp, &mut out);
    Ok((out, gx, gxp))
}

/// Two-layer linear closed forms `(∂L/∂W_1, ∂L/∂W_2) = (W_2ᵀ G, G W_1ᵀ)`.
pub fn two_layer_closed_form(stack: &LinearStack, g: &Matrix) -> Result<(Matrix, Matrix)> {
    if stack.depth() != 2 || !stack.is_linear() {
        return Err(Error::InvalidInput("closed forms need a linear two-layer stack".into()));
    }
    let w1 = &stack.layers[0];
    let w2 = &stack.layers[1];
    Ok((w2.transpose() * g, g * w1.transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// `W = Q diag(s) Pᵀ` with `s` equally spaced in `[sv_min, sv_max]`.
    #[default]
    DistinctSingularValues,
    /// i.i.d. Gaussian entries with standard deviation `sv_max / √d`.
    Gaussian,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::DistinctSingularValues => "distinct_singular_values",
            InitMode::Gaussian => "gaussian",
        })
    }
}

impl FromStr for InitMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "distinct_singular_values" => Ok(InitMode::DistinctSingularValues),
            "gaussian" => Ok(InitMode::Gaussian),
            other => Err(format!(
                "unknown init mode `{other}` (expected distinct_singular_values|gaussian)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub seed: u64,
    pub sv_min: f64,
    pub sv_max: f64,
    pub mode: InitMode,
}

impl InitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sv_min > 0.0 && self.sv_min < self.sv_max && self.sv_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 < sv_min < sv_max, got [{}, {}]",
                self.sv_min, self.sv_max
            )));
        }
        Ok(())
    }

    /// Equally spaced, strictly decreasing target singular values.
    pub fn singular_values(&self, d: usize) -> Vec<f64> {
        if d == 1 {
            return vec![self.sv_max];
        }
        let step = (self.sv_max - self.sv_min) / (d - 1) as f64;
        (0..d).map(|k| self.sv_max - step * k as f64).collect()
    }
}

pub fn init_stack(d: usize, depth: usize, spec: &InitSpec, nonlinearity: Nonlinearity) -> Result<LinearStack> {
    if d < 2 {
        return Err(Error::InvalidInput("stack width must be >= 2".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("stack depth must be >= 1".into()));
    }
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::STREAM_INIT);
    let layers = (0..depth)
        .map(|_| init_layer(d, spec, &mut rng))
        .collect();
    LinearStack::new(layers, nonlinearity)
}

fn init_layer(d: usize, spec: &InitSpec, rng: &mut SeededRng) -> Matrix {
    match spec.mode {
        InitMode::DistinctSingularValues => {
            let q = rng::random_orthogonal(d, rng);
            let p = rng::random_orthogonal(d, rng);
            q * numerics::diag(&spec.singular_values(d)) * p.transpose()
        }
        InitMode::Gaussian => rng::normal_matrix(d, d, rng) * (spec.sv_max / (d as f64).sqrt()),
    }
}

/// Toy backbone ending in a residual block:
/// `h = base(x)`, `r = h + B_out · relu(B_in · h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEncoder {
    pub base: LinearStack,
    pub block_in: Matrix,
    pub block_out: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub r: Matrix,
    pub h: Matrix,
    /// `B_in · h` before the rectifier.
    pub block_pre: Matrix,
    pub base_trace: ForwardTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrads {
    pub grad_h: Matrix,
    pub base: Vec<Matrix>,
    pub block_in: Matrix,
    pub block_out: Matrix,
}

impl ResidualEncoder {
    pub fn new(base: LinearStack, block_in: Matrix, block_out: Matrix) -> Result<Self> {
        let d_r = base.output_dim();
        if block_in.ncols() != d_r || block_out.nrows() != d_r || block_out.ncols() != block_in.nrows() {
            return Err(Error::InvalidInput(format!(
                "residual block {:?}/{:?} does not fit representation dim {d_r}",
                block_in.shape(),
                block_out.shape()
            )));
        }
        Ok(Self {
            base,
            block_in,
            block_out,
        })
    }

    /// One linear base layer `d_in → d_r` and a `d_r → hidden → d_r` block,
    /// all Gaussian with variance `1 / fan_in`.
    pub fn random(d_in: usize, d_r: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, rng::STREAM_ENCODER);
        let base = rng::normal_matrix(d_r, d_in, &mut rng) / (d_in as f64).sqrt();
        let block_in = rng::normal_matrix(hidden, d_r, &mut rng) / (d_r as f64).sqrt();
        let block_out = rng::normal_matrix(d_r, hidden, &mut rng) / (hidden as f64).sqrt();
        Self::new(LinearStack::new(vec![base], Nonlinearity::None)?, block_in, block_out)
    }

    pub fn rep_dim(&self) -> usize {
        self.base.output_dim()
    }

    pub fn params_finite(&self) -> bool {
        self.base.layers.iter().chain([&self.block_in, &self.block_out]).all(|m| m.iter().all(|v| v.is_finite()))
    }
}

pub fn residual_forward(encoder: &ResidualEncoder, x: &Matrix) -> Result<EncoderOutput> {
    let (h, base_trace) = forward(&encoder.base, x)?;
    let block_pre = &encoder.block_in * &h;
    let r = &h + &encoder.block_out * block_pre.map(|v| v.max(0.0));
    Ok(EncoderOutput {
        r,
        h,
        block_pre,
        base_trace,
    })
}

/// Gradients on `h` and on every parameter given `∂L/∂r`.
pub fn residual_backward(encoder: &ResidualEncoder, out: &EncoderOutput, grad_r: &Matrix) -> Result<ResidualGrads> {
    if grad_r.shape() != out.r.shape() {
        return Err(Error::InvalidInput("gradient shape does not match representation".into()));
    }
    let act = out.block_pre.map(|v| v.max(0.0));
    let block_out = grad_r * act.transpose();
    let mut g_pre = encoder.block_out.transpose() * grad_r;
    g_pre.zip_apply(&out.block_pre, |g, p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    let block_in = &g_pre * out.h.transpose();
    let grad_h = grad_r + encoder.block_in.transpose() * &g_pre;

    let mut base: Vec<Matrix> = encoder
        .base
        .layers
        .iter()
        .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
        .collect();
    backprop_branch(&encoder.base, &out.base_trace, &grad_h, &mut base);
    Ok(ResidualGrads {
        grad_h,
        base,
        block_in,
        block_out,
    })
}

const STACK_MANIFEST: &str = "stack_manifest.txt";

/// Writes `layer_<l>.csv` (row-major, one matrix row per line) for every
/// layer and a `stack_manifest.txt` with `d`, `layers`, `nonlinearity`, `seed`.
pub fn write_checkpoint(stack: &LinearStack, dir: &Path, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (l, w) in stack.layers.iter().enumerate() {
        let path = dir.join(format!("layer_{l}.csv"));
        let mut text = String::new();
        for row in w.row_iter() {
            let line: Vec<String> = row.iter().map(|v| csvfmt::real(*v)).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(STACK_MANIFEST);
    let manifest = format!(
        "d = {}\nlayers = {}\nnonlinearity = {}\nseed = {}\n",
        stack.output_dim(),
        stack.depth(),
        stack.nonlinearity,
        seed
    );
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Reads a checkpoint written by [`write_checkpoint`]; returns the stack and
/// its recorded seed.
pub fn read_checkpoint(dir: &Path) -> Result<(LinearStack, u64)> {
    let path = dir.join(STACK_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut depth = None;
    let mut nonlinearity = Nonlinearity::None;
    let mut seed = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("bad manifest line `{line}`")))?;
        let v = v.trim();
        let bad = |what: &str| Error::InvalidInput(format!("bad {what} `{v}` in stack manifest"));
        match k.trim() {
            "layers" => depth = Some(v.parse::<usize>().map_err(|_| bad("layers"))?),
            "nonlinearity" => nonlinearity = v.parse().map_err(|_| bad("nonlinearity"))?,
            "seed" => seed = v.parse().map_err(|_| bad("seed"))?,
            _ => {}
        }
    }
    let depth = depth.ok_or_else(|| Error::InvalidInput("stack manifest lacks `layers`".into()))?;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let path = dir.join(format!("layer_{l}.csv"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput(format!("{}: ragged rows", path.display())));
        }
        layers.push(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]));
    }
    Ok((LinearStack::new(layers, nonlinearity)?, seed))
}
