use itertools::Itertools;
use rand::seq::index::sample as sample_indices;

use super::{Mode, SampleSet, WeightVector};
use crate::rng;

/// Above this many subsets the independence check switches from exhaustive
/// enumeration to all pairs plus random subsets plus a full-rank check.
const EXHAUSTIVE_BUDGET: usize = 20_000;
const RANDOM_SUBSETS: usize = 2_000;
const RANK_TOL: f64 = 1e-10;

/// Outcome of the existence/uniqueness pre-conditions for one estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Affine (joint) or linear (scatter-only, Tyler) independence of small subsets.
    pub independence_ok: bool,
    pub weight_bound_ok: bool,
    pub worst_weight: f64,
    /// `w_max` must stay strictly below this value.
    pub required_bound: f64,
    pub violating_subset: Option<Vec<usize>>,
    /// False when the independence check sampled subsets instead of enumerating them.
    pub exhaustive: bool,
    pub subsets_checked: usize,
}

impl FeasibilityReport {
    pub fn is_ok(&self) -> bool {
        self.independence_ok && self.weight_bound_ok
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.independence_ok {
            parts.push(match &self.violating_subset {
                Some(s) => format!("samples {s:?} are not in general position"),
                None => "samples are not in general position".to_string(),
            });
        }
        if !self.weight_bound_ok {
            parts.push(format!(
                "max weight {} must be below {}",
                self.worst_weight, self.required_bound
            ));
        }
        if parts.is_empty() {
            "ok".into()
        } else {
            parts.join("; ")
        }
    }
}

/// Checks the sample-position and weight conditions under which the
/// weighted likelihood has a unique minimizer.
///
/// - joint: any `≤ d+1` samples affinely independent and `d·w_max < (ν+d−1)/(ν+d)`,
/// - scatter-only: any `≤ d` centered samples linearly independent and
///   `(d−1)·w_max < (ν+d−1)/(ν+d)`,
/// - Tyler: any `≤ d` samples linearly independent (pairwise non-collinear
///   for `d = 2`) and `w_max < 1/d`.
pub fn check_assumptions(samples: &SampleSet, w: &WeightVector, nu: f64, mode: &Mode) -> FeasibilityReport {
    let d = samples.d();
    let df = d as f64;
    let w_max = w.max();

    let (weight_bound_ok, required_bound) = match mode {
        Mode::Joint => {
            let rhs = (nu + df - 1.0) / (nu + df);
            (df * w_max < rhs, rhs / df)
        }
        Mode::ScatterOnly { .. } => {
            let rhs = (nu + df - 1.0) / (nu + df);
            if d == 1 {
                (rhs > 0.0, f64::INFINITY)
            } else {
                ((df - 1.0) * w_max < rhs, rhs / (df - 1.0))
            }
        }
        Mode::Tyler => (df * w_max < 1.0, 1.0 / df),
    };

    let vectors: Vec<Vec<f64>> = match mode {
        Mode::Joint => lifted_affine(samples),
        Mode::ScatterOnly { mu } => samples
            .rows()
            .map(|r| r.iter().zip(mu).map(|(x, m)| x - m).collect())
            .collect(),
        Mode::Tyler => samples.rows().map(<[f64]>::to_vec).collect(),
    };
    let subset = match mode {
        Mode::Joint => d + 1,
        _ => d,
    }
    .min(samples.n());

    let indep = independence(&vectors, subset);
    FeasibilityReport {
        independence_ok: indep.violating.is_none(),
        weight_bound_ok,
        worst_weight: w_max,
        required_bound,
        violating_subset: indep.violating,
        exhaustive: indep.exhaustive,
        subsets_checked: indep.checked,
    }
}

/// `(x̃ᵢ, 1)` where `x̃` is the standardized data; affine independence of
/// the samples is linear independence of the lifted vectors.
fn lifted_affine(samples: &SampleSet) -> Vec<Vec<f64>> {
    let mean = samples.mean();
    let rms = {
        let ss: f64 = samples
            .rows()
            .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)))
            .sum();
        (ss / (samples.n() * samples.d()) as f64).sqrt()
    };
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    samples
        .rows()
        .map(|r| {
            let mut v: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| (x - m) * scale).collect();
            v.push(1.0);
            v
        })
        .collect()
}

struct Independence {
    violating: Option<Vec<usize>>,
    exhaustive: bool,
    checked: usize,
}

fn independence(vectors: &[Vec<f64>], k: usize) -> Independence {
    let n = vectors.len();
    let unit: Vec<Option<Vec<f64>>> = vectors.iter().map(|v| normalized(v)).collect();
    if let Some(i) = unit.iter().position(Option::is_none) {
        return Independence {
            violating: Some(vec![i]),
            exhaustive: true,
            checked: 0,
        };
    }
    let unit: Vec<Vec<f64>> = unit.into_iter().flatten().collect();
    let mut checked = 0;

    let total = binomial(n, k);
    if total <= EXHAUSTIVE_BUDGET {
        for subset in (0..n).combinations(k) {
            checked += 1;
            if !linearly_independent(&unit, &subset) {
                return Independence {
                    violating: Some(subset),
                    exhaustive: true,
                    checked,
                };
            }
        }
        return Independence {
            violating: None,
            exhaustive: true,
            checked,
        };
    }

    // All pairs first: repeated or collinear samples are the common failure.
    if k >= 2 {
        for pair in (0..n).combinations(2) {
            checked += 1;
            if !linearly_independent(&unit, &pair) {
                return Independence {
                    violating: Some(pair),
                    exhaustive: false,
                    checked,
                };
            }
        }
    }
    let mut rng = rng::seeded(0x5EED_FEA5);
    for _ in 0..RANDOM_SUBSETS {
        let mut subset = sample_indices(&mut rng, n, k).into_vec();
        subset.sort_unstable();
        checked += 1;
        if !linearly_independent(&unit, &subset) {
            return Independence {
                violating: Some(subset),
                exhaustive: false,
                checked,
            };
        }
    }
    // The whole set must span k dimensions.
    let all: Vec<usize> = (0..n).collect();
    checked += 1;
    if rank(&unit, &all) < k {
        return Independence {
            violating: Some(all),
            exhaustive: false,
            checked,
        };
    }
    Independence {
        violating: None,
        exhaustive: false,
        checked,
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn linearly_independent(unit: &[Vec<f64>], subset: &[usize]) -> bool {
    rank(unit, subset) == subset.len()
}

/// Numerical rank by modified Gram–Schmidt over unit vectors.
fn rank(unit: &[Vec<f64>], subset: &[usize]) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in subset {
        let mut v = unit[i].clone();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > RANK_TOL {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            if basis.len() == v_len(unit) {
                break;
            }
        }
    }
    basis.len()
}

fn v_len(unit: &[Vec<f64>]) -> usize {
    unit.first().map_or(0, Vec::len)
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc: usize = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
        if acc > EXHAUSTIVE_BUDGET.saturating_mul(1000) {
            return usize::MAX;
        }
    }
    acc
}
