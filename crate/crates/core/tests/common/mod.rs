//! Independent reference computations shared by the integration tests.
//! Nothing here calls the library's loss or gradient code.

#![allow(dead_code)]

use dimcollapse::rng;
use dimcollapse::Matrix;

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    rng::normal_matrix(rows, cols, &mut rng::stream(seed, 77))
}

fn sq(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    (0..a.nrows()).map(|r| (a[(r, i)] - b[(r, j)]).powi(2)).sum()
}

/// Term-by-term squared-distance InfoNCE with first-branch negatives,
/// each term written as `ln(1 + Σ_{j≠i} exp(ℓ_ij − ℓ_ii))` so that tiny
/// losses keep their digits.
pub fn literal_infonce(z: &Matrix, zp: &Matrix) -> f64 {
    let n = z.ncols();
    let mut loss = 0.0;
    for i in 0..n {
        let pos = -sq(z, i, zp, i) / 2.0;
        let mut rest = 0.0;
        for j in 0..n {
            if j != i {
                rest += (-sq(z, i, z, j) / 2.0 - pos).exp();
            }
        }
        loss += rest.ln_1p();
    }
    loss
}

fn unit(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    out
}

/// Term-by-term cosine InfoNCE; normalizes its inputs itself.
pub fn literal_cosine(z: &Matrix, zp: &Matrix) -> f64 {
    let z = unit(z);
    let zp = unit(zp);
    let n = z.ncols();
    let dot = |a: &Matrix, i: usize, b: &Matrix, j: usize| (0..a.nrows()).map(|r| a[(r, i)] * b[(r, j)]).sum::<f64>();
    let mut loss = 0.0;
    for i in 0..n {
        let pos = dot(&z, i, &zp, i).exp();
        let mut denom = pos;
        for j in 0..n {
            if j != i {
                denom += dot(&z, i, &z, j).exp();
            }
        }
        loss -= (pos / denom).ln();
    }
    loss
}

/// Central differences of `f` at `m`, entry by entry.
pub fn central_diff(m: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    let mut probe = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            out[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Softmax weights written out with explicit loops; `alpha[(i, i)]` is the
/// positive weight.
pub fn literal_alpha(z: &Matrix, zp: &Matrix) -> Matrix {
    let n = z.ncols();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let mut row = vec![0.0; n];
        for (j, r) in row.iter_mut().enumerate() {
            *r = if j == i { -sq(z, i, zp, i) / 2.0 } else { -sq(z, i, z, j) / 2.0 };
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|l| (l - max).exp()).sum();
        for j in 0..n {
            a[(i, j)] = (row[j] - max).exp() / total;
        }
    }
    a
}

fn outer(u: &[f64], v: &[f64]) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

fn col(m: &Matrix, i: usize) -> Vec<f64> {
    m.column(i).iter().copied().collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// The contrast matrix as the double sum
/// `Σ_i (Σ_{j≠i} α_ij (x'_i − x_j) + Σ_{j≠i} α_ji (x_i − x_j)) x_iᵀ − Σ_i (1 − α_ii)(x'_i − x_i) x'_iᵀ`.
pub fn literal_x(x: &Matrix, xp: &Matrix, alpha: &Matrix) -> Matrix {
    let (d, n) = x.shape();
    let mut out = Matrix::zeros(d, d);
    for i in 0..n {
        let xi = col(x, i);
        let xpi = col(xp, i);
        let mut v = vec![0.0; d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = col(x, j);
            for r in 0..d {
                v[r] += alpha[(i, j)] * (xpi[r] - xj[r]) + alpha[(j, i)] * (xi[r] - xj[r]);
            }
        }
        out += outer(&v, &xi);
        out -= outer(&sub(&xpi, &xi), &xpi) * (1.0 - alpha[(i, i)]);
    }
    out
}

/// `Σ_{i,j≠i} α_ij (x_i − x_j)(x_i − x_j)ᵀ` and `Σ_i (1 − α_ii)(x'_i − x_i)(x'_i − x_i)ᵀ`.
pub fn literal_sigmas(x: &Matrix, xp: &Matrix, alpha: &Matrix) -> (Matrix, Matrix) {
    let (d, n) = x.shape();
    let mut s0 = Matrix::zeros(d, d);
    let mut s1 = Matrix::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            if j != i {
                let diff = sub(&col(x, i), &col(x, j));
                s0 += outer(&diff, &diff) * alpha[(i, j)];
            }
        }
        let eta = sub(&col(xp, i), &col(x, i));
        s1 += outer(&eta, &eta) * (1.0 - alpha[(i, i)]);
    }
    (s0, s1)
}

/// `exp(m)` by scaling and squaring of a truncated Taylor series.
pub fn taylor_exp(m: &Matrix) -> Matrix {
    let norm = m.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let a = m / 2f64.powi(squarings as i32);
    let d = m.nrows();
    let mut term = Matrix::identity(d, d);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Symmetric matrix with prescribed eigenvalues and a seeded eigenbasis.
pub fn symmetric_with_eigenvalues(values: &[f64], seed: u64) -> (Matrix, Matrix) {
    let q = rng::random_orthogonal(values.len(), &mut rng::stream(seed, 78));
    let m = &q * dimcollapse::numerics::diag(values) * q.transpose();
    ((&m + m.transpose()) * 0.5, q)
}
