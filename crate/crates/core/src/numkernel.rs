//! Dense linear algebra for small symmetric positive definite matrices.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. Dimensions in this
//! crate stay small (scatter matrices of at most a few hundred rows), so
//! everything is a straightforward unblocked loop.

use crate::error::{Error, Result};

/// Symmetric `d×d` matrix intended to hold a positive definite scatter matrix.
///
/// Construction symmetrizes the input as `(m + mᵀ)/2`, so consumers never see
/// an asymmetric scatter. Positive definiteness is established by
/// [`cholesky`]; every operation that needs it reports
/// [`Error::NotPositiveDefinite`] otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SpdMatrix {
    pub fn new(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            data[i * dim + i] = v;
        }
        Self { dim, data }
    }

    /// Wraps an already-symmetric buffer produced inside the crate.
    pub(crate) fn from_symmetric_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * lambda).collect(),
        }
    }

    /// `self + eps·I`.
    pub fn shifted(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += eps;
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.data[i * d + j] * v[j]).sum())
            .collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `m = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major lower triangle (upper entries are zero).
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> SpdMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                data[i * d + j] = s;
                data[j * d + i] = s;
            }
        }
        SpdMatrix::from_symmetric_unchecked(d, data)
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / self.lower[i * d + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        let d = self.dim;
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= self.lower[k * d + i] * y[k];
            }
            y[i] = s / self.lower[i * d + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim).map(|j| self.get(j, j).ln()).sum::<f64>()
    }

    /// `vᵀ m⁻¹ v` via one forward substitution. `scratch` must have length `dim`.
    #[inline]
    pub fn quad_form_with(&self, v: &[f64], scratch: &mut [f64]) -> f64 {
        scratch.copy_from_slice(v);
        self.forward_in_place(scratch);
        scratch.iter().map(|y| y * y).sum()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim];
        self.quad_form_with(v, &mut scratch)
    }
}

/// Cholesky factorization. A pivot `≤ 1e-14·trace(m)/d` is rejected.
pub fn cholesky(m: &SpdMatrix) -> Result<CholeskyFactor> {
    let d = m.dim;
    let tol = 1e-14 * m.trace() / d as f64;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > tol) || diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    Ok(CholeskyFactor { dim: d, lower: l })
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Squared Mahalanobis distance `(x−μ)ᵀ m⁻¹ (x−μ)`.
pub fn mahalanobis(x: &[f64], mu: &[f64], m: &SpdMatrix) -> Result<f64> {
    check_len(m.dim, x.len())?;
    check_len(m.dim, mu.len())?;
    let chol = cholesky(m)?;
    let diff: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    Ok(chol.quad_form(&diff))
}

/// `log|m|`.
pub fn logdet(m: &SpdMatrix) -> Result<f64> {
    Ok(cholesky(m)?.logdet())
}

/// Solves `m y = b`.
pub fn solve_spd(m: &SpdMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len(m.dim, b.len())?;
    Ok(cholesky(m)?.solve(b))
}
