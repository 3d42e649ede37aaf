//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Builds a matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = a.lp_norm(1).max(a.transpose().lp_norm(1));
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite matrix passed to expm".into()));
    }
    // Scale so the series converges fast: ||A / 2^s|| <= 1/2.
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * scale;
    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() <= f64::EPSILON * result.amax() * 1e-2 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    if !is_finite(&result) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(result)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_sym_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Solves `X = Aᵀ X A + Q` for Schur-stable `A` by the doubling (Smith)
/// iteration.
pub fn discrete_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    if spectral_radius(a) >= 1.0 {
        return Err(Error::Numeric("Lyapunov equation needs a Schur-stable matrix".into()));
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let next = &x + ak.transpose() * &x * &ak;
        ak = &ak * &ak;
        let delta = (&next - &x).amax();
        x = next;
        if delta <= 1e-15 * x.amax().max(1.0) || ak.amax() < 1e-300 {
            break;
        }
    }
    if !is_finite(&x) {
        return Err(Error::Numeric("Lyapunov iteration diverged".into()));
    }
    Ok(symmetrize(&x))
}
