#![allow(dead_code)]

use myriadkit::distributions::sample_student_t;
use myriadkit::estimators::check_assumptions;
use myriadkit::rng::{seeded, split_seed};
use myriadkit::{Mode, SampleSet, SpdMatrix, StudentTParams, WeightVector};
use rand::Rng;

pub struct Instance {
    pub samples: SampleSet,
    pub w: WeightVector,
    pub nu: f64,
}

/// Random SPD matrix `A Aᵀ + 0.5 I` with entries of `A` in `[−1, 1]`.
pub fn random_spd(d: usize, seed: u64) -> SpdMatrix {
    let mut rng = seeded(seed);
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>();
        }
        m[i * d + i] += 0.5;
    }
    SpdMatrix::new(d, m).unwrap()
}

/// A feasible weighted estimation problem with the given dimension and `ν`.
pub fn instance(d: usize, nu: f64, seed: u64) -> Instance {
    for attempt in 0.. {
        let s = split_seed(seed, attempt);
        let mut rng = seeded(split_seed(s, 1));
        let n = 4 * d + 8 + rng.random_range(0..20);
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let params = StudentTParams::new(mu, random_spd(d, split_seed(s, 2)), nu).unwrap();
        let samples = sample_student_t(&params, n, split_seed(s, 3)).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let w = WeightVector::normalized(&raw).unwrap();
        if check_assumptions(&samples, &w, nu, &Mode::Joint).is_ok() {
            return Instance { samples, w, nu };
        }
    }
    unreachable!()
}

/// The 100 instances cycling through `d ∈ {1,2,3,5}` and `ν ∈ {1,2,5,100}`.
pub fn instance_grid() -> Vec<Instance> {
    let ds = [1, 2, 3, 5];
    let nus = [1.0, 2.0, 5.0, 100.0];
    (0..100u64)
        .map(|i| instance(ds[i as usize % 4], nus[(i as usize / 4) % 4], split_seed(2024, i)))
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    max_abs_diff(a, b) / scale
}
