use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numkernel::{cholesky, SpdMatrix};

/// Linear restoration of a noisy patch `p` from the fitted `(μ̂, Σ̂)`:
/// `p̂ = μ̂ + (Σ̂ − ν/(ν−2) σ² I)₊ Σ̂⁻¹ (p − μ̂)` for `ν > 2`, and `p̂ = μ̂` otherwise.
///
/// `(·)₊` clamps negative eigenvalues to zero.
pub fn blue_restore(p: &[f64], mu_hat: &[f64], sigma_hat: &SpdMatrix, nu: f64, sigma_noise: f64) -> Result<Vec<f64>> {
    let d = sigma_hat.dim();
    for len in [p.len(), mu_hat.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    if !(sigma_noise >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise scale {sigma_noise} must be nonnegative")));
    }
    if !(nu >= 0.0) {
        return Err(Error::InvalidNu(nu));
    }
    let chol = cholesky(sigma_hat)?;
    if nu <= 2.0 {
        return Ok(mu_hat.to_vec());
    }
    let diff: Vec<f64> = p.iter().zip(mu_hat).map(|(a, b)| a - b).collect();
    let y = DVector::from_vec(chol.solve(&diff));

    let noise_var = nu / (nu - 2.0) * sigma_noise * sigma_noise;
    let mut m = DMatrix::from_row_slice(d, d, sigma_hat.as_slice());
    for i in 0..d {
        m[(i, i)] -= noise_var;
    }
    let eig = SymmetricEigen::new(m);
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let shrink = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    let out = shrink * y;
    Ok(mu_hat.iter().zip(out.iter()).map(|(m, v)| m + v).collect())
}
