//! Dense linear-algebra substrate.
//!
//! Everything runs in `f64`. Matrices are [`nalgebra::DMatrix`]; the helpers
//! here add the conventions the rest of the crate relies on: singular values
//! sorted descending, a deterministic sign for every singular pair, and
//! explicit symmetry checks before symmetric-only algorithms run.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Floor applied before taking `log10` of a spectrum.
pub const LOG10_FLOOR: f64 = 1e-12;

/// Absolute symmetry tolerance, scaled by `max(1, max |m_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Thin singular value decomposition `M = U diag(S) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (k, sigma) in self.s.iter().enumerate() {
            us.column_mut(k).scale_mut(*sigma);
        }
        us * self.v.transpose()
    }

    /// Smallest gap between consecutive singular values.
    pub fn min_gap(&self) -> f64 {
        self.s
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }
}

/// Singular values of a covariance matrix in descending order, plus their
/// floored base-10 logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub log10_values: Vec<f64>,
    pub source_dim: usize,
}

impl SpectrumReport {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let log10_values = values.iter().map(|v| v.max(LOG10_FLOOR).log10()).collect();
        Self {
            source_dim: values.len(),
            singular_values: values,
            log10_values,
        }
    }

    pub fn max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what} has an empty dimension")));
    }
    if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contains non-finite entry {bad}")));
    }
    Ok(())
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_symmetric(m: &Matrix, what: &str) -> Result<()> {
    ensure_finite(m, what)?;
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute error when `b = 0`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let diff = (a - b).norm();
    let denom = b.norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Sorted, sign-fixed thin SVD.
///
/// Singular values are non-increasing. For every left singular vector the
/// entry of largest magnitude (first one on ties) is made positive, and the
/// matching right singular vector is flipped with it.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    ensure_finite(m, "matrix")?;
    let raw = m.clone().svd(true, true);
    let u_raw = raw.u.expect("left singular vectors requested");
    let vt_raw = raw.v_t.expect("right singular vectors requested");
    let s_raw = raw.singular_values;

    let r = s_raw.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));

    let mut u = Matrix::zeros(m.nrows(), r);
    let mut v = Matrix::zeros(m.ncols(), r);
    let mut s = Vec::with_capacity(r);
    for (k, &src) in order.iter().enumerate() {
        let mut uc = u_raw.column(src).clone_owned();
        let mut vc = vt_raw.row(src).transpose();
        if leading_sign(uc.as_slice()) < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(k, &uc);
        v.set_column(k, &vc);
        s.push(s_raw[src].max(0.0));
    }
    Ok(SvdFactors { u, s, v })
}

fn leading_sign(col: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in col {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Eigendecomposition of a symmetric matrix (eigenvalues descending,
/// eigenvectors sign-fixed like [`svd`]).
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    ensure_symmetric(m, "matrix")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if leading_sign(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
        values.push(eig.eigenvalues[src]);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// `exp(M) = U exp(Λ) Uᵀ` for symmetric `M`.
pub fn matrix_exp_symmetric(m: &Matrix) -> Result<Matrix> {
    let eig = symmetric_eigen(m)?;
    Ok(spectral_map(&eig, f64::exp))
}

/// `U f(Λ) Uᵀ`.
pub fn spectral_map(eig: &SymmetricEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let mut scaled = eig.vectors.clone();
    for (k, lambda) in eig.values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(f(*lambda));
    }
    scaled * eig.vectors.transpose()
}

/// Matrix exponential of a skew-symmetric matrix; the result is orthogonal.
pub fn matrix_exp_skew(k: &Matrix) -> Result<Matrix> {
    ensure_finite(k, "skew generator")?;
    if !k.is_square() {
        return Err(Error::InvalidInput("skew generator must be square".into()));
    }
    let sym_part = k + k.transpose();
    if sym_part.amax() > SYMMETRY_TOL * k.amax().max(1.0) {
        return Err(Error::InvalidInput("generator is not skew-symmetric".into()));
    }
    let skew = (k - k.transpose()) * 0.5;
    Ok(skew.exp())
}

/// Covariance `C = (1/N) Σ (z_i − z̄)(z_i − z̄)ᵀ` of the columns of `samples`
/// (a `d × N` matrix) and its singular value spectrum.
///
/// Columns are put into a canonical order before accumulation, so the result
/// is bitwise independent of the order in which samples are supplied.
pub fn covariance_spectrum(samples: &Matrix) -> Result<(Matrix, SpectrumReport)> {
    ensure_finite(samples, "samples")?;
    let n = samples.ncols();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "covariance needs at least 2 vectors, got {n}"
        )));
    }
    let d = samples.nrows();
    let mut cols: Vec<Vec<f64>> = samples
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    cols.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut mean = vec![0.0; d];
    for c in &cols {
        for (m, x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    for c in &cols {
        let centered: Vec<f64> = c.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let report = SpectrumReport::from_values(svd(&cov)?.s);
    Ok((cov, report))
}

/// Covariance spectrum of vectors supplied one per row (the embedding dump
/// layout).
pub fn covariance_spectrum_rows(rows: &[Vec<f64>]) -> Result<(Matrix, SpectrumReport)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::DegenerateInput("no vectors supplied".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("vectors have inconsistent dimensions".into()));
    }
    let samples = Matrix::from_fn(d, n, |i, j| rows[j][i]);
    covariance_spectrum(&samples)
}

pub fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(values))
}
