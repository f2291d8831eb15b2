use std::f64::consts::PI;

use super::{check_weights, EstimatorOptions, SampleSet, WeightVector};
use crate::distributions::{wrap_angle, WrappedCauchyParams};
use crate::error::{Error, Result};
use crate::summation::Kahan;

const DAMPING: f64 = 1.0 - 1e-9;

/// Wrapped Cauchy fit with iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedCauchyEstimate {
    pub params: WrappedCauchyParams,
    /// `2ρ/(1+ρ²) · (cos a, sin a)`
    pub zeta: [f64; 2],
    pub iterations: usize,
    pub final_step: f64,
    /// Negative log-likelihood at the start and after every update.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Updates pulled back inside the unit disc.
    pub damped_steps: usize,
    /// The fit is the uniform distribution; `a` carries no information.
    pub rho_zero: bool,
}

/// `−Σ wᵢ log f(θᵢ | a, ρ)`.
pub fn wrapped_cauchy_nll(angles: &[f64], w: &WeightVector, p: &WrappedCauchyParams) -> Result<f64> {
    if angles.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: angles.len(),
            got: w.len(),
        });
    }
    let rho = p.rho();
    let s = 2.0 * rho / (1.0 + rho * rho);
    Ok(nll_zeta(angles, w.as_slice(), [s * p.a().cos(), s * p.a().sin()]))
}

fn nll_zeta(angles: &[f64], w: &[f64], zeta: [f64; 2]) -> f64 {
    let r2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
    let mut acc = Kahan::default();
    for (&t, &wi) in angles.iter().zip(w) {
        acc.add(wi * (1.0 - zeta[0] * t.cos() - zeta[1] * t.sin()).ln());
    }
    (2.0 * PI).ln() - 0.5 * (-r2).ln_1p() + acc.value()
}

/// Sorted distinct angles with merged weights.
fn merge_duplicates(angles: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = angles.iter().map(|&t| wrap_angle(t)).zip(w.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut ts: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut ws: Vec<Kahan> = Vec::with_capacity(pairs.len());
    for (t, wi) in pairs {
        if ts.last() == Some(&t) {
            ws.last_mut().unwrap().add(wi);
        } else {
            ts.push(t);
            let mut k = Kahan::default();
            k.add(wi);
            ws.push(k);
        }
    }
    (ts, ws.into_iter().map(|k| k.value()).collect())
}

/// Maximum-likelihood fit of a wrapped Cauchy distribution.
///
/// Iterates from `ζ = 0`
///
/// `ζ₁ ← Σ wᵢ cos θᵢ/Dᵢ / Σ wᵢ/Dᵢ`, `ζ₂ ← Σ wᵢ sin θᵢ/Dᵢ / Σ wᵢ/Dᵢ`,
/// `Dᵢ = 1 − ζ₁ cos θᵢ − ζ₂ sin θᵢ`
///
/// until `‖Δζ‖/max(‖ζ‖, 1e-12) < tol`, then maps `ζ` to `(a, ρ)`.
/// Repeated angles are merged first. At least three distinct angles, none
/// carrying half of the total weight, are required.
pub fn wrapped_cauchy_estimate(angles: &[f64], w: &WeightVector, opts: &EstimatorOptions) -> Result<WrappedCauchyEstimate> {
    opts.validate()?;
    let samples = SampleSet::from_scalars(angles)?;
    check_weights(&samples, w)?;
    let (ts, ws) = merge_duplicates(angles, w.as_slice());
    if ts.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "{} distinct angle(s); at least 3 are required",
            ts.len()
        )));
    }
    let w_max = ws.iter().copied().fold(0.0, f64::max);
    if w_max >= 0.5 {
        return Err(Error::DegenerateData(format!(
            "one angle carries weight {w_max}, must be below 1/2"
        )));
    }

    let cs: Vec<f64> = ts.iter().map(|t| t.cos()).collect();
    let sn: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
    let mut zeta = [0.0, 0.0];
    let mut objective_trace = vec![nll_zeta(&ts, &ws, zeta)];
    let mut iterations = 0;
    let mut damped_steps = 0;
    let mut final_step = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iter {
        let (mut num1, mut num2, mut den) = (Kahan::default(), Kahan::default(), Kahan::default());
        for i in 0..ts.len() {
            let c = ws[i] / (1.0 - zeta[0] * cs[i] - zeta[1] * sn[i]);
            num1.add(c * cs[i]);
            num2.add(c * sn[i]);
            den.add(c);
        }
        let mut next = [num1.value() / den.value(), num2.value() / den.value()];
        let norm = next[0].hypot(next[1]);
        if norm >= 1.0 {
            next = [next[0] * DAMPING / norm, next[1] * DAMPING / norm];
            damped_steps += 1;
        }
        let step = (next[0] - zeta[0]).hypot(next[1] - zeta[1]);
        final_step = step / zeta[0].hypot(zeta[1]).max(1e-12);
        iterations += 1;
        zeta = next;
        objective_trace.push(nll_zeta(&ts, &ws, zeta));
        if final_step < opts.tol {
            converged = true;
            break;
        }
    }

    // Rounding residue of an exactly balanced configuration.
    let r = zeta[0].hypot(zeta[1]);
    let rho_zero = r <= 16.0 * ts.len() as f64 * f64::EPSILON;
    let params = if rho_zero {
        zeta = [0.0, 0.0];
        WrappedCauchyParams::new(-PI, 0.0)?
    } else {
        let rho = r / (1.0 + (1.0 - r * r).sqrt());
        WrappedCauchyParams::new(zeta[1].atan2(zeta[0]), rho)?
    };
    Ok(WrappedCauchyEstimate {
        params,
        zeta,
        iterations,
        final_step,
        objective_trace,
        converged,
        damped_steps,
        rho_zero,
    })
}
