//! Monte-Carlo comparison of GMMF and EM iteration counts.
//!
//! Each trial draws `n` samples from `T_ν(μ, Σ)`, runs both estimators from
//! the sample mean and covariance with the same tolerance, and records how
//! many updates each needed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use myriadkit::distributions::sample_student_t;
use myriadkit::estimators::{em_estimate, gmmf_estimate};
use myriadkit::rng::split_seed;
use myriadkit::{Error, EstimatorOptions, Result, SpdMatrix, StudentTParams, WeightVector};
use rayon::prelude::*;
use serde::Deserialize;

pub const CSV_HEADER: &str = "nu,sigma,mean_gmmf,std_gmmf,mean_em,std_em,failures";

/// A labelled scatter matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SigmaSpec {
    pub label: String,
    pub rows: Vec<Vec<f64>>,
}

impl SigmaSpec {
    /// `λ·I` in dimension `d`, labelled `"λI"` (`"I"` for `λ = 1`).
    pub fn scaled_identity(lambda: f64, d: usize) -> Self {
        let label = if lambda == 1.0 { "I".to_string() } else { format!("{lambda}I") };
        let rows = (0..d).map(|i| (0..d).map(|j| if i == j { lambda } else { 0.0 }).collect()).collect();
        SigmaSpec { label, rows }
    }

    pub fn matrix(&self) -> Result<SpdMatrix> {
        SpdMatrix::from_rows(&self.rows)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub d: usize,
    pub n: usize,
    pub trials: usize,
    pub nus: Vec<f64>,
    pub sigmas: Vec<SigmaSpec>,
    /// Location; empty means the origin.
    pub mu: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            d: 2,
            n: 100,
            trials: 1000,
            nus: vec![1.0, 2.0, 5.0, 10.0, 100.0],
            sigmas: vec![SigmaSpec::scaled_identity(1.0, 2)],
            mu: Vec::new(),
            tol: 1e-6,
            max_iter: 10_000,
            seed: 2019,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d == 0 || self.n == 0 || self.trials == 0 {
            return bad("d, n and trials must be positive".into());
        }
        if self.nus.is_empty() || self.sigmas.is_empty() {
            return bad("at least one nu and one sigma are required".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol must be positive and max_iter at least 1".into());
        }
        if !self.mu.is_empty() && self.mu.len() != self.d {
            return bad(format!("mu has {} entries, expected {}", self.mu.len(), self.d));
        }
        let df = self.d as f64;
        for &nu in &self.nus {
            if !(nu >= 1.0) || !nu.is_finite() {
                return bad(format!("nu = {nu} must be at least 1 for joint estimation"));
            }
            // uniform weights: d/n < (ν + d − 1)/(ν + d)
            if df / self.n as f64 >= (nu + df - 1.0) / (nu + df) {
                return bad(format!("n = {} is too small for d = {} and nu = {nu}", self.n, self.d));
            }
        }
        for s in &self.sigmas {
            let m = s.matrix()?;
            if m.dim() != self.d {
                return bad(format!("sigma {:?} has dimension {}, expected {}", s.label, m.dim(), self.d));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub nu: f64,
    pub sigma: String,
    pub mean_iter_gmmf: f64,
    pub std_iter_gmmf: f64,
    pub mean_iter_em: f64,
    pub std_iter_em: f64,
    /// Trials where either estimator returned an error or did not converge.
    pub failures: usize,
}

/// Iteration counts of one trial, or `None` when either run failed.
pub fn run_trial(params: &StudentTParams, n: usize, tol: f64, max_iter: usize, seed: u64) -> Option<(usize, usize)> {
    let samples = sample_student_t(params, n, seed).ok()?;
    let w = WeightVector::uniform(n);
    let opts = EstimatorOptions::default().with_tol(tol).with_max_iter(max_iter);
    let g = gmmf_estimate(&samples, &w, params.nu, &opts).ok()?;
    let e = em_estimate(&samples, &w, params.nu, &opts).ok()?;
    (g.converged && e.converged).then_some((g.iterations, e.iterations))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every `(ν, Σ)` combination. Trial `t` of combination `c` uses seed
/// `split_seed(split_seed(seed, c), t)`, so rows do not depend on the
/// number of worker threads or on the other combinations.
pub fn run_table1(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mu = if cfg.mu.is_empty() { vec![0.0; cfg.d] } else { cfg.mu.clone() };
    let mut rows = Vec::new();
    let mut combo = 0u64;
    for spec in &cfg.sigmas {
        let sigma = spec.matrix()?;
        for &nu in &cfg.nus {
            let params = StudentTParams::new(mu.clone(), sigma.clone(), nu)?;
            let base = split_seed(cfg.seed, combo);
            combo += 1;
            let results: Vec<Option<(usize, usize)>> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&params, cfg.n, cfg.tol, cfg.max_iter, split_seed(base, t)))
                .collect();
            let ok: Vec<(usize, usize)> = results.iter().flatten().copied().collect();
            let (mg, sg) = mean_std(&ok.iter().map(|p| p.0 as f64).collect::<Vec<_>>());
            let (me, se) = mean_std(&ok.iter().map(|p| p.1 as f64).collect::<Vec<_>>());
            rows.push(BenchRow {
                nu,
                sigma: spec.label.clone(),
                mean_iter_gmmf: mg,
                std_iter_gmmf: sg,
                mean_iter_em: me,
                std_iter_em: se,
                failures: results.len() - ok.len(),
            });
        }
    }
    Ok(rows)
}

/// CSV text, rows ordered by `(ν, sigma label)`.
pub fn csv_string(rows: &[BenchRow]) -> String {
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.nu.total_cmp(&b.nu).then_with(|| a.sigma.cmp(&b.sigma)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{}",
            r.nu,
            csv_field(&r.sigma),
            r.mean_iter_gmmf,
            r.std_iter_gmmf,
            r.mean_iter_em,
            r.std_iter_em,
            r.failures
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_string(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
