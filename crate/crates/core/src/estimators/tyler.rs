use super::gmmf::{EstimateResult, Residuals};
use super::{canonical_order, check_assumptions, check_weights, reorder, EstimatorOptions, Mode, SampleSet, WeightVector};
use crate::distributions::StudentTParams;
use crate::error::{Error, Result};
use crate::numkernel::{cholesky, SpdMatrix};
use crate::summation::{kahan_sum, Kahan, KahanVec};

fn unit_rows(samples: &SampleSet) -> Result<SampleSet> {
    let mut data = Vec::with_capacity(samples.as_slice().len());
    for (i, r) in samples.rows().enumerate() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroSample(i));
        }
        data.extend(r.iter().map(|v| v / norm));
    }
    SampleSet::new(samples.d(), data)
}

/// `wᵢ/δᵢ` and `L₀ = d Σ wᵢ log δᵢ + log|Σ|`.
fn evaluate(xs: &SampleSet, w: &[f64], sigma: &SpdMatrix) -> Result<(Vec<f64>, f64)> {
    let chol = cholesky(sigma)?;
    let mut scratch = vec![0.0; xs.d()];
    let mut acc = Kahan::default();
    let mut coef = Vec::with_capacity(w.len());
    for (x, &wi) in xs.rows().zip(w) {
        let delta = chol.quad_form_with(x, &mut scratch);
        acc.add(wi * delta.ln());
        coef.push(wi / delta);
    }
    Ok((coef, xs.d() as f64 * acc.value() + chol.logdet()))
}

fn outer_sum(xs: &SampleSet, coef: &[f64], scale: f64) -> SpdMatrix {
    let d = xs.d();
    let mut acc = KahanVec::zeros(d * d);
    for (x, &c) in xs.rows().zip(coef) {
        acc.add_outer_upper(c, x);
    }
    let mut m = acc.into_symmetric(d);
    m.iter_mut().for_each(|v| *v *= scale);
    SpdMatrix::from_symmetric_unchecked(d, m)
}

fn trace_normalized(m: &SpdMatrix) -> SpdMatrix {
    m.scaled(1.0 / m.trace())
}

fn relative_residual(xs: &SampleSet, coef: &[f64], sigma: &SpdMatrix) -> f64 {
    let target = outer_sum(xs, coef, xs.d() as f64);
    let diff: f64 = target
        .as_slice()
        .iter()
        .zip(sigma.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    diff.sqrt() / sigma.frobenius_norm()
}

/// Tyler's scatter estimator: the `ν = 0`, `μ = 0` fixed point
/// `Σ = d Σ wᵢ xᵢxᵢᵀ / (xᵢᵀΣ⁻¹xᵢ)` on sphere-normalized samples.
///
/// Every iterate is rescaled to trace one. Samples are normalized
/// internally; a zero sample is rejected. The returned parameters carry
/// `μ = 0` and `ν = 0`.
pub fn tyler_estimate(samples: &SampleSet, w: &WeightVector, opts: &EstimatorOptions) -> Result<EstimateResult> {
    opts.validate()?;
    check_weights(samples, w)?;
    let d = samples.d();
    if d < 2 {
        return Err(Error::InvalidParameter("Tyler estimation needs d >= 2".into()));
    }
    let unit = unit_rows(samples)?;
    if !opts.skip_checks {
        let report = check_assumptions(&unit, w, 0.0, &Mode::Tyler);
        if !report.is_ok() {
            return Err(Error::AssumptionViolation(report.describe()));
        }
    }
    let order = canonical_order(&unit, w);
    let (xs, ws) = reorder(&unit, w, &order);
    let wv = ws.as_slice();

    let mut sigma = trace_normalized(&xs.scatter_about(&vec![0.0; d]));
    let mut init_regularized = false;
    if cholesky(&sigma).is_err() {
        sigma = trace_normalized(&sigma.shifted(1e-8 / d as f64));
        cholesky(&sigma).map_err(|e| Error::DegenerateInit(e.to_string()))?;
        init_regularized = true;
    }

    let (mut coef, obj) = evaluate(&xs, wv, &sigma)?;
    let mut objective_trace = vec![obj];
    let mut normalizer_trace = Vec::new();
    let mut iterations = 0;
    let mut final_step = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iter {
        let normalizer = kahan_sum(coef.iter().copied());
        normalizer_trace.push(normalizer);
        let next = trace_normalized(&outer_sum(&xs, &coef, 1.0 / normalizer));
        let num: f64 = next
            .as_slice()
            .iter()
            .zip(sigma.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        final_step = num.sqrt() / sigma.frobenius_norm();
        iterations += 1;
        sigma = next;
        let (c, obj) = evaluate(&xs, wv, &sigma)?;
        coef = c;
        objective_trace.push(obj);
        if final_step < opts.tol {
            converged = true;
            break;
        }
    }

    let residuals = Residuals {
        location: 0.0,
        scatter: relative_residual(&xs, &coef, &sigma),
        trace: (d as f64 * kahan_sum(coef.iter().copied()) - 1.0).abs(),
    };
    Ok(EstimateResult {
        params: StudentTParams {
            mu: vec![0.0; d],
            sigma,
            nu: 0.0,
        },
        iterations,
        final_step,
        objective_trace,
        normalizer_trace,
        converged,
        checks_bypassed: opts.skip_checks,
        init_regularized,
        residuals,
    })
}

/// Relative Frobenius residual of `Σ = d Σ wᵢ xᵢxᵢᵀ/δᵢ` after normalizing the samples.
/// Invariant under `Σ ↦ λΣ`.
pub fn tyler_residual(samples: &SampleSet, w: &WeightVector, sigma: &SpdMatrix) -> Result<f64> {
    check_weights(samples, w)?;
    if sigma.dim() != samples.d() {
        return Err(Error::DimensionMismatch {
            expected: samples.d(),
            got: sigma.dim(),
        });
    }
    let unit = unit_rows(samples)?;
    let (coef, _) = evaluate(&unit, w.as_slice(), sigma)?;
    Ok(relative_residual(&unit, &coef, sigma))
}
