//! Small dense linear-algebra helpers shared by the forward and backward passes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Number of Tikhonov retries attempted after the first factorization fails.
pub const DAMPING_RETRIES: usize = 3;

/// Tikhonov damping `M + alpha I`.
pub fn damp(m: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    assert!(m.is_square(), "damping needs a square matrix");
    let mut out = m.clone();
    if alpha != 0.0 {
        for i in 0..out.nrows() {
            out[(i, i)] += alpha;
        }
    }
    out
}

/// A Cholesky factorization of `M + alpha I` together with the damping that made it succeed.
#[derive(Clone, Debug)]
pub struct DampedCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub alpha: f64,
}

impl DampedCholesky {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }
}

/// Factor `M + alpha I`; when that fails, retry with damping `base`, `10 base`, `100 base`
/// where `base = retry` if positive, otherwise a small multiple of the largest diagonal entry.
pub fn factor_with_damping(m: &DMatrix<f64>, alpha: f64, retry: f64) -> Result<DampedCholesky> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "normal matrix has non-finite entries".into(),
        ));
    }
    let scale = m.diagonal().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let base = if retry > 0.0 { retry } else { 1e-12 * scale };
    let attempts =
        std::iter::once(alpha).chain((0..DAMPING_RETRIES).map(|i| base * 10f64.powi(i as i32)));
    for a in attempts {
        if let Some(factor) = Cholesky::new(damp(m, a)) {
            if factor
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && *d > 0.0)
            {
                return Ok(DampedCholesky { factor, alpha: a });
            }
        }
    }
    Err(Error::NumericalFailure(format!(
        "normal matrix not positive definite after {DAMPING_RETRIES} damping retries"
    )))
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Cosine similarity; two (numerically) zero vectors are considered identical.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 && nb < 1e-12 {
        return 1.0;
    }
    if na < 1e-300 || nb < 1e-300 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Convert row-major nested vectors into a dense matrix with `cols` columns.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Structural(format!(
                "row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
