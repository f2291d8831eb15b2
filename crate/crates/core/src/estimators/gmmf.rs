use super::{canonical_order, check_assumptions, check_weights, reorder, EstimatorOptions, Mode, SampleSet, WeightVector};
use crate::distributions::StudentTParams;
use crate::error::{Error, Result};
use crate::numkernel::{cholesky, CholeskyFactor, SpdMatrix};
use crate::summation::{Kahan, KahanVec};

/// Converged (or last) parameters with iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub params: StudentTParams,
    /// Number of updates performed.
    pub iterations: usize,
    /// Relative step of the last update.
    pub final_step: f64,
    /// Objective at the initial point and after every update.
    pub objective_trace: Vec<f64>,
    /// `Σ wᵢ/(ν + δᵢ)` at the start of every update.
    pub normalizer_trace: Vec<f64>,
    pub converged: bool,
    pub checks_bypassed: bool,
    /// The initial scatter was singular and received a small ridge.
    pub init_regularized: bool,
    pub residuals: Residuals,
}

/// Residuals of the critical-point equations at the returned parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `‖Σ wᵢ (xᵢ − μ)/(ν + δᵢ)‖₂`; zero when the location is frozen.
    pub location: f64,
    /// `‖Σ − (d+ν) Σ wᵢ (xᵢ−μ)(xᵢ−μ)ᵀ/(ν+δᵢ)‖_F / ‖Σ‖_F`.
    pub scatter: f64,
    /// `|(d+ν) Σ wᵢ/(ν + δᵢ) − 1|`.
    pub trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Update {
    /// Normalized scatter update about the current location.
    Gmmf,
    /// `(ν+d)`-scaled scatter update about the new location.
    Em,
}

/// Per-iterate quantities shared by the objective and the next update.
struct Evaluation {
    chol: CholeskyFactor,
    /// `wᵢ/(ν + δᵢ)`
    coef: Vec<f64>,
    objective: f64,
}

fn evaluate(samples: &SampleSet, w: &[f64], nu: f64, mu: &[f64], sigma: &SpdMatrix) -> Result<Evaluation> {
    let d = samples.d();
    let chol = cholesky(sigma)?;
    let mut diff = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut log_acc = Kahan::default();
    let mut coef = Vec::with_capacity(w.len());
    for (x, &wi) in samples.rows().zip(w) {
        for j in 0..d {
            diff[j] = x[j] - mu[j];
        }
        let denom = nu + chol.quad_form_with(&diff, &mut scratch);
        log_acc.add(wi * denom.ln());
        coef.push(wi / denom);
    }
    let objective = (d as f64 + nu) * log_acc.value() + chol.logdet();
    Ok(Evaluation { chol, coef, objective })
}

fn weighted_location(samples: &SampleSet, coef: &[f64], normalizer: f64) -> Vec<f64> {
    let mut acc = KahanVec::zeros(samples.d());
    for (x, &c) in samples.rows().zip(coef) {
        acc.add_scaled(c, x);
    }
    acc.into_vec().into_iter().map(|v| v / normalizer).collect()
}

fn weighted_scatter(samples: &SampleSet, coef: &[f64], center: &[f64], scale: f64) -> SpdMatrix {
    let d = samples.d();
    let mut acc = KahanVec::zeros(d * d);
    let mut diff = vec![0.0; d];
    for (x, &c) in samples.rows().zip(coef) {
        for j in 0..d {
            diff[j] = x[j] - center[j];
        }
        acc.add_outer_upper(c, &diff);
    }
    let mut m = acc.into_symmetric(d);
    m.iter_mut().for_each(|v| *v *= scale);
    SpdMatrix::from_symmetric_unchecked(d, m)
}

fn relative_step(mu: &[f64], sigma: &SpdMatrix, mu_new: &[f64], sigma_new: &SpdMatrix) -> f64 {
    let num: f64 = mu.iter().zip(mu_new).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        + sigma
            .as_slice()
            .iter()
            .zip(sigma_new.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    let den: f64 = mu.iter().map(|v| v * v).sum::<f64>() + sigma.as_slice().iter().map(|v| v * v).sum::<f64>();
    let den = den.sqrt();
    if den < 1e-300 {
        num.sqrt()
    } else {
        num.sqrt() / den
    }
}

/// One GMMF update from `(μᵣ, Σᵣ)`.
///
/// With `δᵢ = (xᵢ−μᵣ)ᵀΣᵣ⁻¹(xᵢ−μᵣ)` and `cᵢ = wᵢ/(ν+δᵢ)`:
/// `μᵣ₊₁ = Σ cᵢ xᵢ / Σ cᵢ` and `Σᵣ₊₁ = Σ cᵢ (xᵢ−μᵣ)(xᵢ−μᵣ)ᵀ / Σ cᵢ`.
/// The scatter update is taken about `μᵣ`, not `μᵣ₊₁`. With
/// `update_location = false` the location stays at `μᵣ`.
pub fn gmmf_step(
    mu: &[f64],
    sigma: &SpdMatrix,
    samples: &SampleSet,
    w: &WeightVector,
    nu: f64,
    update_location: bool,
) -> Result<(Vec<f64>, SpdMatrix)> {
    if !(nu >= 0.0) {
        return Err(Error::InvalidNu(nu));
    }
    check_weights(samples, w)?;
    let eval = evaluate(samples, w.as_slice(), nu, mu, sigma)?;
    let normalizer = crate::summation::kahan_sum(eval.coef.iter().copied());
    let mu_new = if update_location {
        weighted_location(samples, &eval.coef, normalizer)
    } else {
        mu.to_vec()
    };
    let sigma_new = weighted_scatter(samples, &eval.coef, mu, 1.0 / normalizer);
    cholesky(&sigma_new)?;
    Ok((mu_new, sigma_new))
}

/// Generalized multivariate myriad filter.
///
/// Starts from the sample mean and sample covariance (or the frozen location
/// in [`Mode::ScatterOnly`]) and iterates [`gmmf_step`] until the relative
/// step `√(‖Δμ‖² + ‖ΔΣ‖²_F) / √(‖μᵣ‖² + ‖Σᵣ‖²_F)` falls below `opts.tol`.
/// Exhausting `max_iter` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn gmmf_estimate(samples: &SampleSet, w: &WeightVector, nu: f64, opts: &EstimatorOptions) -> Result<EstimateResult> {
    run(samples, w, nu, opts, Update::Gmmf)
}

/// EM baseline: same location update, scatter update
/// `Σᵣ₊₁ = (ν+d) Σ wᵢ (xᵢ−μᵣ₊₁)(xᵢ−μᵣ₊₁)ᵀ/(ν+δᵢ,ᵣ)`. Same start and stopping rule.
pub fn em_estimate(samples: &SampleSet, w: &WeightVector, nu: f64, opts: &EstimatorOptions) -> Result<EstimateResult> {
    run(samples, w, nu, opts, Update::Em)
}

fn run(samples: &SampleSet, w: &WeightVector, nu: f64, opts: &EstimatorOptions, update: Update) -> Result<EstimateResult> {
    opts.validate()?;
    check_weights(samples, w)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidNu(nu));
    }
    let d = samples.d();
    let fixed_mu = match &opts.mode {
        Mode::Joint => None,
        Mode::ScatterOnly { mu } => {
            if mu.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: mu.len(),
                });
            }
            Some(mu.clone())
        }
        Mode::Tyler => {
            return Err(Error::InvalidParameter(
                "Tyler mode is handled by tyler_estimate".into(),
            ))
        }
    };

    if !opts.skip_checks {
        if fixed_mu.is_none() && nu < 1.0 {
            return Err(Error::AssumptionViolation(format!(
                "joint estimation requires nu >= 1, got {nu}"
            )));
        }
        let report = check_assumptions(samples, w, nu, &opts.mode);
        if !report.is_ok() {
            return Err(Error::AssumptionViolation(report.describe()));
        }
    }

    let order = canonical_order(samples, w);
    let (xs, ws) = reorder(samples, w, &order);
    let wv = ws.as_slice();

    let mut mu = fixed_mu.clone().unwrap_or_else(|| xs.mean());
    let mut sigma = xs.scatter_about(&mu);
    let mut init_regularized = false;
    if cholesky(&sigma).is_err() {
        let eps = 1e-8 * sigma.trace() / d as f64;
        if !(eps > 0.0) {
            return Err(Error::DegenerateInit("initial scatter is zero".into()));
        }
        sigma = sigma.shifted(eps);
        cholesky(&sigma).map_err(|e| Error::DegenerateInit(e.to_string()))?;
        init_regularized = true;
    }

    let df = d as f64;
    let mut eval = evaluate(&xs, wv, nu, &mu, &sigma)?;
    let mut objective_trace = vec![eval.objective];
    let mut normalizer_trace = Vec::new();
    let mut iterations = 0;
    let mut final_step = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iter {
        let normalizer = crate::summation::kahan_sum(eval.coef.iter().copied());
        normalizer_trace.push(normalizer);
        let mu_new = match fixed_mu {
            Some(_) => mu.clone(),
            None => weighted_location(&xs, &eval.coef, normalizer),
        };
        let sigma_new = match update {
            Update::Gmmf => weighted_scatter(&xs, &eval.coef, &mu, 1.0 / normalizer),
            Update::Em => weighted_scatter(&xs, &eval.coef, &mu_new, df + nu),
        };
        final_step = relative_step(&mu, &sigma, &mu_new, &sigma_new);
        iterations += 1;
        mu = mu_new;
        sigma = sigma_new;
        eval = evaluate(&xs, wv, nu, &mu, &sigma)?;
        objective_trace.push(eval.objective);
        if final_step < opts.tol {
            converged = true;
            break;
        }
    }

    let residuals = residuals_from(&xs, nu, &mu, &sigma, &eval.coef, fixed_mu.is_none());
    let _ = &eval.chol;
    Ok(EstimateResult {
        params: StudentTParams { mu, sigma, nu },
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

fn residuals_from(xs: &SampleSet, nu: f64, mu: &[f64], sigma: &SpdMatrix, coef: &[f64], with_location: bool) -> Residuals {
    let d = xs.d();
    let df = d as f64;
    let location = if with_location {
        let mut acc = KahanVec::zeros(d);
        let mut diff = vec![0.0; d];
        for (x, &c) in xs.rows().zip(coef) {
            for j in 0..d {
                diff[j] = x[j] - mu[j];
            }
            acc.add_scaled(c, &diff);
        }
        acc.into_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        0.0
    };
    let target = weighted_scatter(xs, coef, mu, df + nu);
    let scatter = target
        .as_slice()
        .iter()
        .zip(sigma.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / sigma.frobenius_norm();
    let trace = ((df + nu) * crate::summation::kahan_sum(coef.iter().copied()) - 1.0).abs();
    Residuals { location, scatter, trace }
}

/// Critical-point residuals of `L` at `p`, for any candidate parameters.
pub fn fixed_point_residuals(samples: &SampleSet, w: &WeightVector, p: &StudentTParams) -> Result<Residuals> {
    check_weights(samples, w)?;
    if !(p.nu > 0.0) {
        return Err(Error::InvalidNu(p.nu));
    }
    let eval = evaluate(samples, w.as_slice(), p.nu, &p.mu, &p.sigma)?;
    Ok(residuals_from(samples, p.nu, &p.mu, &p.sigma, &eval.coef, true))
}
