//! Student-t, projected normal and wrapped Cauchy distributions.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::estimators::SampleSet;
use crate::numkernel::{cholesky, SpdMatrix};
use crate::rng;

/// Reduces an angle to the canonical representative in `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// Location `mu`, scatter `sigma` and degrees of freedom `nu` of a
/// `d`-variate Student-t law. `nu = 0` denotes the projected normal limit.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTParams {
    pub mu: Vec<f64>,
    pub sigma: SpdMatrix,
    pub nu: f64,
}

impl StudentTParams {
    pub fn new(mu: Vec<f64>, sigma: SpdMatrix, nu: f64) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                got: mu.len(),
            });
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidNu(nu));
        }
        Ok(Self { mu, sigma, nu })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Wrapped Cauchy parameters: circular location `a ∈ [−π, π)` and
/// concentration `rho = e^{−γ} ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedCauchyParams {
    a: f64,
    rho: f64,
}

impl WrappedCauchyParams {
    /// `a` is reduced into `[−π, π)`.
    pub fn new(a: f64, rho: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("location a = {a} is not finite")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1)")));
        }
        Ok(Self {
            a: wrap_angle(a),
            rho,
        })
    }

    pub fn from_gamma(a: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        Self::new(a, (-gamma).exp())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Scale of the unwrapped Cauchy law, `−log ρ` (infinite for `ρ = 0`).
    pub fn gamma(&self) -> f64 {
        -self.rho.ln()
    }
}

/// `log f_ν(x | μ, Σ)`.
pub fn student_t_logpdf(x: &[f64], p: &StudentTParams) -> Result<f64> {
    if !(p.nu > 0.0) {
        return Err(Error::InvalidNu(p.nu));
    }
    let d = p.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let chol = cholesky(&p.sigma)?;
    let diff: Vec<f64> = x.iter().zip(&p.mu).map(|(a, b)| a - b).collect();
    let delta = chol.quad_form(&diff);
    let (df, nu) = (d as f64, p.nu);
    Ok(ln_gamma(0.5 * (df + nu)) - ln_gamma(0.5 * nu)
        - 0.5 * df * (PI * nu).ln()
        - 0.5 * chol.logdet()
        - 0.5 * (df + nu) * (delta / nu).ln_1p())
}

/// `log f₀(x | Σ)` of the centered projected normal law on the unit sphere.
pub fn projected_normal_logpdf(x: &[f64], sigma: &SpdMatrix) -> Result<f64> {
    let d = sigma.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if d < 2 {
        return Err(Error::InvalidParameter("projected normal needs d >= 2".into()));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotUnitVector(norm));
    }
    let chol = cholesky(sigma)?;
    let delta = chol.quad_form(x);
    let df = d as f64;
    Ok(ln_gamma(0.5 * df) - (2.0 * PI.powf(0.5 * df)).ln() - 0.5 * chol.logdet() - 0.5 * df * delta.ln())
}

pub fn wrapped_cauchy_pdf(theta: f64, p: &WrappedCauchyParams) -> f64 {
    let rho = p.rho;
    (1.0 - rho * rho) / (TAU * (1.0 + rho * rho - 2.0 * rho * (theta - p.a).cos()))
}

/// Draws `n` samples `X = μ + L z / √y` with `z ~ N(0, I)`, `L Lᵀ = Σ` and
/// `y ~ Γ(ν/2, rate ν/2)`.
pub fn sample_student_t(p: &StudentTParams, n: usize, seed: u64) -> Result<SampleSet> {
    if !(p.nu > 0.0) {
        return Err(Error::InvalidNu(p.nu));
    }
    let d = p.dim();
    let chol = cholesky(&p.sigma)?;
    let gamma = Gamma::new(0.5 * p.nu, 2.0 / p.nu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let mut z = vec![0.0; d];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let y: f64 = gamma.sample(&mut rng);
        let scale = 1.0 / y.sqrt();
        for i in 0..d {
            let lz: f64 = (0..=i).map(|k| chol.get(i, k) * z[k]).sum();
            data.push(p.mu[i] + lz * scale);
        }
    }
    SampleSet::new(d, data)
}

/// Draws `n` wrapped Cauchy angles `(a + γ·tan(π(U − ½))) mod 2π` in `[−π, π)`.
///
/// For `ρ = 0` the law is uniform on the circle and uniform angles are emitted.
pub fn sample_wrapped_cauchy(p: &WrappedCauchyParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    if p.rho == 0.0 {
        return (0..n).map(|_| wrap_angle(rng.random::<f64>() * TAU - PI)).collect();
    }
    let gamma = p.gamma();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            wrap_angle(p.a + gamma * (PI * (u - 0.5)).tan())
        })
        .collect()
}

/// Maps a 2×2 projected normal scatter to the wrapped Cauchy law of the
/// doubled angle.
///
/// The location is `atan2(2σ₁₂, σ₁₁ − σ₂₂)` reduced to `[−π, π)`; in the
/// isotropic case (`σ₁₁ = σ₂₂`, `σ₁₂ = 0`, hence `ρ = 0`) it is `−π` by
/// convention.
pub fn pn_to_wc(sigma: &SpdMatrix) -> Result<WrappedCauchyParams> {
    if sigma.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: sigma.dim(),
        });
    }
    cholesky(sigma)?;
    let (s11, s12, s22) = (sigma.get(0, 0), sigma.get(0, 1), sigma.get(1, 1));
    let tr = s11 + s22;
    let sqrt_det = (s11 * s22 - s12 * s12).max(0.0).sqrt();
    // tr − 2√|Σ| = ((σ₁₁−σ₂₂)² + 4σ₁₂²)/(tr + 2√|Σ|), free of cancellation.
    let diff = s11 - s22;
    let num = (diff * diff + 4.0 * s12 * s12) / (tr + 2.0 * sqrt_det);
    let rho = (num / (tr + 2.0 * sqrt_det)).sqrt().min(1.0 - f64::EPSILON);
    let a = if diff == 0.0 && s12 == 0.0 {
        -PI
    } else {
        wrap_angle((2.0 * s12).atan2(diff))
    };
    WrappedCauchyParams::new(a, rho)
}

/// Trace-one projected normal scatter representing `p`.
pub fn wc_to_pn(p: &WrappedCauchyParams) -> SpdMatrix {
    let c = p.rho / (1.0 + p.rho * p.rho);
    let (s, co) = p.a.sin_cos();
    SpdMatrix::from_symmetric_unchecked(2, vec![0.5 + c * co, c * s, c * s, 0.5 - c * co])
}
