mod common;

use common::{instance, instance_grid, max_abs_diff, random_spd, rel_diff};
use myriadkit::distributions::{sample_wrapped_cauchy, student_t_logpdf};
use myriadkit::estimators::{
    em_estimate, fixed_point_residuals, gmmf_estimate, neg_loglik, tyler_estimate, tyler_residual,
    wrapped_cauchy_estimate, wrapped_cauchy_nll,
};
use myriadkit::numkernel::mahalanobis;
use myriadkit::{EstimatorOptions, Mode, SampleSet, SpdMatrix, StudentTParams, WeightVector, WrappedCauchyParams};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

fn tight() -> EstimatorOptions {
    EstimatorOptions::default().with_tol(1e-10)
}

/// `L` rebuilt from the log-density: `L = −2 Σ wᵢ log f(xᵢ) + (d+ν) log ν + 2 log c_{d,ν}`.
fn objective_from_pdf(samples: &SampleSet, w: &WeightVector, p: &StudentTParams) -> f64 {
    let d = samples.d() as f64;
    let nu = p.nu;
    let log_c = ln_gamma(0.5 * (d + nu)) - ln_gamma(0.5 * nu) - 0.5 * d * (nu * std::f64::consts::PI).ln();
    let ll: f64 = samples
        .rows()
        .zip(w.as_slice())
        .map(|(x, wi)| wi * student_t_logpdf(x, p).unwrap())
        .sum();
    -2.0 * ll + (d + nu) * nu.ln() + 2.0 * log_c
}

#[test]
fn objective_matches_density() {
    for inst in instance_grid().iter().take(20) {
        let d = inst.samples.d();
        let p = StudentTParams::new(vec![0.3; d], random_spd(d, 5), inst.nu).unwrap();
        let a = neg_loglik(&inst.samples, &inst.w, &p).unwrap();
        let b = objective_from_pdf(&inst.samples, &inst.w, &p);
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn gmmf_objective_never_increases() {
    for (i, inst) in instance_grid().iter().enumerate() {
        let r = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &tight()).unwrap();
        assert!(r.converged, "instance {i}");
        assert_eq!(r.objective_trace.len(), r.iterations + 1);
        for (k, pair) in r.objective_trace.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] + 1e-10 * (1.0 + pair[0].abs()),
                "instance {i}, step {k}: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        let last = *r.objective_trace.last().unwrap();
        let recomputed = objective_from_pdf(&inst.samples, &inst.w, &r.params);
        assert!((last - recomputed).abs() <= 1e-8 * (1.0 + last.abs()));
    }
}

/// Residuals of the critical-point equations computed from scratch.
fn independent_residuals(samples: &SampleSet, w: &WeightVector, p: &StudentTParams) -> (f64, f64, f64) {
    let d = samples.d();
    let df = d as f64;
    let mut loc = vec![0.0; d];
    let mut scat = vec![0.0; d * d];
    let mut tr = 0.0;
    for (x, &wi) in samples.rows().zip(w.as_slice()) {
        let c = wi / (p.nu + mahalanobis(x, &p.mu, &p.sigma).unwrap());
        tr += c;
        for j in 0..d {
            loc[j] += c * (x[j] - p.mu[j]);
            for k in 0..d {
                scat[j * d + k] += c * (x[j] - p.mu[j]) * (x[k] - p.mu[k]);
            }
        }
    }
    let s = p.sigma.as_slice();
    let num: f64 = scat.iter().zip(s).map(|(a, b)| ((df + p.nu) * a - b).powi(2)).sum();
    let den: f64 = s.iter().map(|v| v * v).sum();
    (
        loc.iter().map(|v| v * v).sum::<f64>().sqrt(),
        (num / den).sqrt(),
        ((df + p.nu) * tr - 1.0).abs(),
    )
}

#[test]
fn converged_estimates_solve_the_critical_point_equations() {
    for (i, inst) in instance_grid().iter().enumerate() {
        let r = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &tight()).unwrap();
        let (loc, scat, tr) = independent_residuals(&inst.samples, &inst.w, &r.params);
        assert!(loc <= 1e-5 && scat <= 1e-5 && tr <= 1e-5, "instance {i}: {loc} {scat} {tr}");
        let own = fixed_point_residuals(&inst.samples, &inst.w, &r.params).unwrap();
        assert!((own.location - loc).abs() < 1e-9);
        assert!((own.scatter - scat).abs() < 1e-9);
        assert!((own.trace - tr).abs() < 1e-9);
        assert!((own.location - r.residuals.location).abs() < 1e-12);
        assert!((own.trace - r.residuals.trace).abs() < 1e-12);
    }
}

#[test]
fn gmmf_and_em_share_the_limit() {
    for (i, inst) in instance_grid().iter().enumerate() {
        let g = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &tight()).unwrap();
        let e = em_estimate(&inst.samples, &inst.w, inst.nu, &tight()).unwrap();
        assert!(g.converged && e.converged);
        assert!(rel_diff(&g.params.mu, &e.params.mu) <= 1e-5 || max_abs_diff(&g.params.mu, &e.params.mu) <= 1e-7, "instance {i}");
        assert!(rel_diff(g.params.sigma.as_slice(), e.params.sigma.as_slice()) <= 1e-5, "instance {i}");
    }
}

#[test]
fn large_nu_recovers_sample_moments() {
    for i in 0..20u64 {
        let inst = instance([1, 2, 3, 5][i as usize % 4], 5.0, 900 + i);
        let w = WeightVector::uniform(inst.samples.n());
        let r = gmmf_estimate(&inst.samples, &w, 1e6, &EstimatorOptions::default()).unwrap();
        let mean = inst.samples.mean();
        let cov = inst.samples.covariance();
        let scale = mean.iter().map(|v| v * v).sum::<f64>().sqrt().max(cov.trace().sqrt());
        assert!(max_abs_diff(&r.params.mu, &mean) <= 1e-3 * scale, "instance {i}");
        assert!(rel_diff(r.params.sigma.as_slice(), cov.as_slice()) <= 1e-3, "instance {i}");
    }
}

#[test]
fn scatter_only_matches_joint_at_the_joint_location() {
    let inst = instance(3, 5.0, 77);
    let joint = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &EstimatorOptions::default().with_tol(1e-12)).unwrap();
    let opts = EstimatorOptions::default()
        .with_tol(1e-12)
        .with_mode(Mode::ScatterOnly { mu: joint.params.mu.clone() });
    let fixed = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &opts).unwrap();
    assert_eq!(fixed.params.mu, joint.params.mu);
    assert!(rel_diff(fixed.params.sigma.as_slice(), joint.params.sigma.as_slice()) < 1e-8);
}

fn transform(samples: &SampleSet, a: &[f64], b: &[f64]) -> SampleSet {
    let d = samples.d();
    samples
        .map_rows(|x| (0..d).map(|i| b[i] + (0..d).map(|k| a[i * d + k] * x[k]).sum::<f64>()).collect())
        .unwrap()
}

fn conjugate(a: &[f64], s: &SpdMatrix) -> Vec<f64> {
    let d = s.dim();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d)
                .flat_map(|k| (0..d).map(move |l| (k, l)))
                .map(|(k, l)| a[i * d + k] * s.get(k, l) * a[j * d + l])
                .sum();
        }
    }
    out
}

/// Rotation in the `(p, q)` coordinate plane of `ℝᵈ`.
fn givens(d: usize, p: usize, q: usize, t: f64) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        g[i * d + i] = 1.0;
    }
    let (s, c) = t.sin_cos();
    g[p * d + p] = c;
    g[q * d + q] = c;
    g[p * d + q] = -s;
    g[q * d + p] = s;
    g
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    (0..d * d)
        .map(|ij| (0..d).map(|k| a[(ij / d) * d + k] * b[k * d + ij % d]).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimates_ignore_sample_order(seed in 0u64..1000, d in 1usize..4, perm_seed in any::<u64>()) {
        let inst = instance(d, 2.0, seed);
        let n = inst.samples.n();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = myriadkit::rng::seeded(perm_seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let rows: Vec<&[f64]> = order.iter().map(|&i| inst.samples.row(i)).collect();
        let ws: Vec<f64> = order.iter().map(|&i| inst.w.as_slice()[i]).collect();
        let shuffled = SampleSet::from_rows(&rows).unwrap();
        let w2 = WeightVector::new(ws).unwrap();
        let a = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &EstimatorOptions::default()).unwrap();
        let b = gmmf_estimate(&shuffled, &w2, inst.nu, &EstimatorOptions::default()).unwrap();
        prop_assert_eq!(a.params, b.params);
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn gmmf_is_affine_equivariant(seed in 0u64..1000, d in 1usize..4, shift in -5.0f64..5.0) {
        let inst = instance(d, 5.0, seed);
        let a = random_spd(d, seed ^ 0xABCD).into_vec();
        let b: Vec<f64> = (0..d).map(|i| shift * (i as f64 + 1.0)).collect();
        let moved = transform(&inst.samples, &a, &b);
        let opts = EstimatorOptions::default().with_tol(1e-12);
        let base = gmmf_estimate(&inst.samples, &inst.w, inst.nu, &opts).unwrap();
        let img = gmmf_estimate(&moved, &inst.w, inst.nu, &opts).unwrap();
        let mu_expect: Vec<f64> = (0..d)
            .map(|i| b[i] + (0..d).map(|k| a[i * d + k] * base.params.mu[k]).sum::<f64>())
            .collect();
        let scale = img.params.sigma.trace().sqrt() + mu_expect.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&img.params.mu, &mu_expect) <= 1e-6 * scale);
        let s_expect = conjugate(&a, &base.params.sigma);
        prop_assert!(rel_diff(img.params.sigma.as_slice(), &s_expect) <= 1e-6);
    }

    #[test]
    fn tyler_is_rotation_equivariant(seed in 0u64..1000, t in -3.0f64..3.0, d in 2usize..5) {
        let inst = instance(d, 1.0, seed);
        let centered = inst.samples.map_rows(|x| {
            let m = inst.samples.mean();
            x.iter().zip(&m).map(|(a, b)| a - b).collect()
        }).unwrap();
        let mut q = givens(d, 0, 1, t);
        if d > 2 {
            q = matmul(&q, &givens(d, 1, d - 1, 0.7 * t + 0.3), d);
        }
        let rotated = transform(&centered, &q, &vec![0.0; d]);
        let opts = EstimatorOptions::default().with_tol(1e-14).with_max_iter(100_000);
        let base = tyler_estimate(&centered, &inst.w, &opts).unwrap();
        let rot = tyler_estimate(&rotated, &inst.w, &opts).unwrap();
        prop_assert!(base.converged && rot.converged);
        let expect = conjugate(&q, &base.params.sigma);
        prop_assert!(max_abs_diff(rot.params.sigma.as_slice(), &expect) <= 1e-8);
        prop_assert!((rot.params.sigma.trace() - 1.0).abs() <= 4.0 * f64::EPSILON);
        prop_assert!(tyler_residual(&rotated, &inst.w, &rot.params.sigma).unwrap() <= 1e-5);
        prop_assert!(tyler_residual(&rotated, &inst.w, &rot.params.sigma.scaled(3.7)).unwrap() <= 1e-5);
    }

    #[test]
    fn wrapped_cauchy_fit_is_a_local_minimum(a in -3.0f64..3.0, rho in 0.2f64..0.95, seed in any::<u64>()) {
        let p = WrappedCauchyParams::new(a, rho).unwrap();
        let angles = sample_wrapped_cauchy(&p, 200, seed);
        let w = WeightVector::uniform(angles.len());
        let r = wrapped_cauchy_estimate(&angles, &w, &EstimatorOptions::default().with_tol(1e-12)).unwrap();
        prop_assert!(r.converged);
        for pair in r.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()));
        }
        let best = wrapped_cauchy_nll(&angles, &w, &r.params).unwrap();
        for (da, dr) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            let q = WrappedCauchyParams::new(r.params.a() + da, r.params.rho() + dr).unwrap();
            prop_assert!(wrapped_cauchy_nll(&angles, &w, &q).unwrap() >= best - 1e-12);
        }
    }
}

#[test]
fn wrapped_cauchy_recovers_parameters() {
    let truth = WrappedCauchyParams::new(1.0, 0.8).unwrap();
    for seed in [1u64, 2, 3] {
        let angles = sample_wrapped_cauchy(&truth, 10_000, seed);
        let r = wrapped_cauchy_estimate(&angles, &WeightVector::uniform(angles.len()), &EstimatorOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.params.a() - 1.0).abs() <= 0.05, "a = {}", r.params.a());
        assert!((r.params.rho() - 0.8).abs() <= 0.05, "rho = {}", r.params.rho());
    }
}

#[test]
fn tyler_four_point_configuration() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = SampleSet::from_rows(&[[1.0, 0.0], [0.0, 1.0], [h, h], [-h, h]]).unwrap();
    let w = WeightVector::uniform(4);
    let r = tyler_estimate(&s, &w, &EstimatorOptions::default()).unwrap();
    assert!(max_abs_diff(r.params.sigma.as_slice(), &[0.5, 0.0, 0.0, 0.5]) <= 1e-8);
    assert_eq!(r.params.sigma.trace(), 1.0);
    assert!(tyler_residual(&s, &w, &r.params.sigma).unwrap() <= 1e-5);
}
