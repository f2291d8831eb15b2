//! Nonlocal patch-based denoising of real- and circle-valued images.
//!
//! For every pixel the `k` patches most similar to the reference patch are
//! collected from a `w×w` search window, using the generalized likelihood
//! ratio distance of the noise model. The pixel (or the whole reference
//! patch) is then restored by maximum-likelihood estimation on that set.

use std::cmp::Ordering;
use rayon::prelude::*;

use crate::distributions::wrap_angle;
use crate::error::{Error, Result};
use crate::estimators::{blue_restore, gmmf_estimate, wrapped_cauchy_estimate, EstimatorOptions, SampleSet, WeightVector};
use crate::imaging::{circular_distance, Image, S1Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiseMode {
    /// Location of the `k` similar center values.
    Pixelwise,
    /// Joint patch estimate, linear restoration of the reference patch, averaging.
    Patchwise,
    /// Patchwise where the similar center values have low variance, pixelwise elsewhere.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Patch side `s` (odd).
    pub patch_size: usize,
    /// Search window side `w` (odd, `w ≥ s`).
    pub window: usize,
    /// Number of similar patches.
    pub k: usize,
    pub nu: f64,
    /// Noise scale; the Cauchy scale `γ` for circle-valued images.
    pub sigma: f64,
    pub mode: DenoiseMode,
    /// Adaptive homogeneity cut; `None` selects the calibrated default.
    pub var_threshold: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl DenoiseConfig {
    /// Defaults: window `4s + 1` (21 for 5×5 patches, 13 for 3×3), `k = 50`,
    /// pixelwise mode.
    pub fn new(patch_size: usize, nu: f64, sigma: f64) -> Self {
        Self {
            patch_size,
            window: 4 * patch_size + 1,
            k: 50,
            nu,
            sigma,
            mode: DenoiseMode::Pixelwise,
            var_threshold: None,
            tol: 1e-6,
            max_iter: 10_000,
            threads: None,
        }
    }

    pub fn with_mode(mut self, mode: DenoiseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_var_threshold(mut self, t: f64) -> Self {
        self.var_threshold = Some(t);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Smallest `k` with `s²/k < (ν + s² − 1)/(ν + s²)`.
    pub fn minimal_k(&self) -> usize {
        let d = self.dim() as f64;
        let bound = d * (self.nu + d) / (self.nu + d - 1.0);
        (bound.floor() as usize + 1).max(2)
    }

    /// Structural checks shared by both image kinds.
    pub fn validate(&self) -> Result<()> {
        let s = self.patch_size;
        if s == 0 || s.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("patch size {s} must be odd")));
        }
        if self.window.is_multiple_of(2) || self.window < s {
            return Err(Error::InvalidConfig(format!(
                "window {} must be odd and at least the patch size {s}",
                self.window
            )));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k = {} must be at least 2", self.k)));
        }
        if self.k > self.window * self.window {
            return Err(Error::InsufficientCandidates {
                requested: self.k,
                available: self.window * self.window,
            });
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma {} must be positive", self.sigma)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("tol must be positive and max_iter at least 1".into()));
        }
        if let Some(t) = self.var_threshold {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig(format!("var threshold {t} must be nonnegative")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks for real-valued denoising.
    pub fn validate_real(&self) -> Result<()> {
        self.validate()?;
        if !(self.nu >= 1.0) || !self.nu.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "nu = {} must be at least 1 for joint location/scale estimation",
                self.nu
            )));
        }
        if self.mode != DenoiseMode::Pixelwise && self.k < self.minimal_k() {
            return Err(Error::InvalidConfig(format!(
                "k = {} violates the weight bound for {}x{} patches; need k >= {}",
                self.k,
                self.patch_size,
                self.patch_size,
                self.minimal_k()
            )));
        }
        Ok(())
    }

    /// Homogeneity cut for adaptive mode: the explicit value, or
    /// `(1.5σ)²·c_ν` with `c_ν` the variance factor of the noise.
    pub fn effective_var_threshold(&self) -> f64 {
        self.var_threshold
            .unwrap_or_else(|| (1.5 * self.sigma).powi(2) * noise_variance_factor(self.nu))
    }

    fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions::default()
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
            .unchecked()
    }
}

/// Variance of unit-scale Student-t noise, `ν/(ν−2)`, with `ν` clipped
/// below at 3 where the variance is infinite or very large.
pub fn noise_variance_factor(nu: f64) -> f64 {
    let nu = nu.max(3.0);
    nu / (nu - 2.0)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// `s×s` block of values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub side: usize,
    pub values: Vec<f64>,
}

/// Borrowed view of either raster kind.
#[derive(Debug, Clone, Copy)]
pub struct GridRef<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a [f64],
}

impl<'a> From<&'a Image> for GridRef<'a> {
    fn from(img: &'a Image) -> Self {
        GridRef {
            width: img.width(),
            height: img.height(),
            values: img.pixels(),
        }
    }
}

impl<'a> From<&'a S1Image> for GridRef<'a> {
    fn from(img: &'a S1Image) -> Self {
        GridRef {
            width: img.width(),
            height: img.height(),
            values: img.angles(),
        }
    }
}

/// The `s×s` block centered at `(row, col)`; positions outside the image
/// are reflected without repeating the edge pixel.
pub fn extract_patch<'a>(img: impl Into<GridRef<'a>>, center: (usize, usize), s: usize) -> Patch {
    let g = img.into();
    let h = (s / 2) as isize;
    let (r0, c0) = (center.0 as isize, center.1 as isize);
    let mut values = Vec::with_capacity(s * s);
    for dr in -h..=h {
        let r = crate::imaging::mirror_index(r0 + dr, g.height);
        for dc in -h..=h {
            let c = crate::imaging::mirror_index(c0 + dc, g.width);
            values.push(g.values[r * g.width + c]);
        }
    }
    Patch { side: s, values }
}

/// `Σᵢ log(ν + ((pᵢ − qᵢ)/(2σ))²)`
pub fn dist_student(p: &Patch, q: &Patch, nu: f64, sigma: f64) -> f64 {
    let k = 0.5 / sigma;
    sum_ln(p.values.iter().zip(&q.values).map(|(a, b)| student_term(*a, *b, nu, k)))
}

/// `Σᵢ log(1 + ρ² − 2ρ cos(wrap(pᵢ − qᵢ)/2))`
pub fn dist_wrapped_cauchy(p: &Patch, q: &Patch, rho: f64) -> f64 {
    let half = |v: &f64| (0.5 * v).sin_cos();
    sum_ln(
        p.values
            .iter()
            .map(half)
            .zip(q.values.iter().map(half))
            .map(|(a, b)| wc_term(a, b, rho)),
    )
}

#[inline]
fn student_term(a: f64, b: f64, nu: f64, inv_two_sigma: f64) -> f64 {
    let t = (a - b) * inv_two_sigma;
    nu + t * t
}

/// Uses `cos(wrap(α − β)/2) = |cos(α/2)cos(β/2) + sin(α/2)sin(β/2)|` on
/// precomputed half-angle `(sin, cos)` pairs.
#[inline]
fn wc_term(a: (f64, f64), b: (f64, f64), rho: f64) -> f64 {
    let cos_half = (a.1 * b.1 + a.0 * b.0).abs();
    1.0 + rho * rho - 2.0 * rho * cos_half
}

/// `Σ log tᵢ` with one logarithm per group of four positive terms.
#[inline]
fn sum_ln(terms: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut buf = [0.0; 4];
    let mut n = 0;
    for t in terms {
        buf[n] = t;
        n += 1;
        if n == 4 {
            total += ln_group(&buf);
            n = 0;
        }
    }
    if n > 0 {
        total += ln_group(&buf[..n]);
    }
    total
}

#[inline]
fn ln_group(ts: &[f64]) -> f64 {
    let p: f64 = ts.iter().product();
    if p.is_normal() {
        p.ln()
    } else {
        ts.iter().map(|t| t.ln()).sum()
    }
}

/// Patch distance of a noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    StudentT { nu: f64, sigma: f64 },
    WrappedCauchy { rho: f64 },
}

impl Metric {
    /// Distance of a patch with `t` entries to itself.
    pub fn self_distance(&self, t: usize) -> f64 {
        match *self {
            Metric::StudentT { nu, .. } => t as f64 * nu.ln(),
            Metric::WrappedCauchy { rho } => t as f64 * ((1.0 - rho) * (1.0 - rho)).ln(),
        }
    }
}

/// The `k` most similar patch centers for one reference pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySet {
    pub center: (usize, usize),
    /// Ascending distance; the reference pixel comes first.
    pub members: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

/// Image extended by `h` mirrored pixels on every side, so that every
/// patch centered inside the image is a contiguous block.
struct Padded {
    width: usize,
    side: usize,
    data: Vec<f64>,
    /// `(sin, cos)` of half the value, filled for the wrapped Cauchy metric.
    half: Vec<(f64, f64)>,
}

impl Padded {
    fn new(g: GridRef<'_>, s: usize, metric: Metric) -> Self {
        let h = s / 2;
        let width = g.width + 2 * h;
        let height = g.height + 2 * h;
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            let sr = crate::imaging::mirror_index(r as isize - h as isize, g.height);
            for c in 0..width {
                let sc = crate::imaging::mirror_index(c as isize - h as isize, g.width);
                data.push(g.values[sr * g.width + sc]);
            }
        }
        let half = match metric {
            Metric::WrappedCauchy { .. } => data.iter().map(|v| (0.5 * v).sin_cos()).collect(),
            Metric::StudentT { .. } => Vec::new(),
        };
        Padded {
            width,
            side: s,
            data,
            half,
        }
    }

    /// Row-major offsets of the patch at `a` and the patch at `b`.
    fn offsets(&self, a: (usize, usize), b: (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (s, w) = (self.side, self.width);
        (0..s).flat_map(move |i| {
            let ra = (a.0 + i) * w + a.1;
            let rb = (b.0 + i) * w + b.1;
            (0..s).map(move |j| (ra + j, rb + j))
        })
    }

    /// Same value as the public distance on the two extracted patches.
    fn distance(&self, a: (usize, usize), b: (usize, usize), metric: Metric) -> f64 {
        match metric {
            Metric::StudentT { nu, sigma } => {
                let k = 0.5 / sigma;
                sum_ln(self.offsets(a, b).map(|(i, j)| student_term(self.data[i], self.data[j], nu, k)))
            }
            Metric::WrappedCauchy { rho } => {
                sum_ln(self.offsets(a, b).map(|(i, j)| wc_term(self.half[i], self.half[j], rho)))
            }
        }
    }

    fn patch(&self, center: (usize, usize)) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.side * self.side);
        for i in 0..self.side {
            let start = (center.0 + i) * self.width + center.1;
            v.extend_from_slice(&self.data[start..start + self.side]);
        }
        v
    }
}

/// Top-left corner and extent of the search window, shifted to lie inside the image.
fn window_bounds(center: usize, w: usize, n: usize) -> (usize, usize) {
    let w = w.min(n);
    let start = center.saturating_sub(w / 2).min(n - w);
    (start, w)
}

fn select_in(pad: &Padded, g: GridRef<'_>, center: (usize, usize), window: usize, k: usize, metric: Metric) -> Result<SimilaritySet> {
    let (r0, wh) = window_bounds(center.0, window, g.height);
    let (c0, ww) = window_bounds(center.1, window, g.width);
    if k > wh * ww {
        return Err(Error::InsufficientCandidates {
            requested: k,
            available: wh * ww,
        });
    }
    // Every distance is at least the self-distance; flooring removes rounding below it.
    let floor = metric.self_distance(pad.side * pad.side);
    let mut cands: Vec<(f64, bool, (usize, usize))> = Vec::with_capacity(wh * ww);
    for r in r0..r0 + wh {
        for c in c0..c0 + ww {
            let is_ref = (r, c) == center;
            let d = if is_ref {
                floor
            } else {
                pad.distance(center, (r, c), metric).max(floor)
            };
            cands.push((d, !is_ref, (r, c)));
        }
    }
    // Stable sort keeps row-major scan order among equal distances.
    let order = |a: &(f64, bool, (usize, usize)), b: &(f64, bool, (usize, usize))| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, |a, b| order(a, b).then(a.2.cmp(&b.2)));
        cands.truncate(k);
    }
    cands.sort_by(|a, b| order(a, b).then(a.2.cmp(&b.2)));
    Ok(SimilaritySet {
        center,
        members: cands.iter().map(|c| c.2).collect(),
        distances: cands.iter().map(|c| c.0).collect(),
    })
}

/// Scans the `w×w` window around `center` and keeps the `k` patches closest
/// to the reference patch. The window is shifted inward at the image border;
/// candidate patches that overhang the border are mirrored. Ties keep
/// row-major scan order, with the reference itself always first.
pub fn select_similar<'a>(img: impl Into<GridRef<'a>>, center: (usize, usize), cfg: &DenoiseConfig, metric: Metric) -> Result<SimilaritySet> {
    cfg.validate()?;
    let g = img.into();
    if center.0 >= g.height || center.1 >= g.width {
        return Err(Error::InvalidParameter(format!("center {center:?} outside the image")));
    }
    let pad = Padded::new(g, cfg.patch_size, metric);
    select_in(&pad, g, center, cfg.window, cfg.k, metric)
}

/// Fallback and diagnostic counters of one denoising run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DenoiseReport {
    pub pixels: usize,
    /// Sample sets whose values were all equal.
    pub constant_sets: usize,
    /// Sets where repeated values broke the weight bound; the most frequent value was used.
    pub duplicate_fallbacks: usize,
    /// Estimator errors answered with a median.
    pub estimator_failures: usize,
    /// Estimations that hit `max_iter`; the last iterate was used.
    pub not_converged: usize,
    /// Circle-valued sets answered with the circular median.
    pub circular_median_fallbacks: usize,
    /// Pixels taken from the patchwise result.
    pub patchwise_pixels: usize,
    /// Restored patches covering each pixel (patchwise and adaptive modes).
    pub contributions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised<T> {
    pub image: T,
    pub report: DenoiseReport,
}

#[derive(Debug, Clone, Copy, Default)]
struct Flags {
    constant: bool,
    duplicate: bool,
    failure: bool,
    not_converged: bool,
    median: bool,
}

impl DenoiseReport {
    fn record(&mut self, f: Flags) {
        self.constant_sets += usize::from(f.constant);
        self.duplicate_fallbacks += usize::from(f.duplicate);
        self.estimator_failures += usize::from(f.failure);
        self.not_converged += usize::from(f.not_converged);
        self.circular_median_fallbacks += usize::from(f.median);
    }
}

fn run_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Distinct values (sorted) with their relative frequencies.
fn merge_scalars(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut xs: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for x in v {
        if xs.last() == Some(&x) {
            *counts.last_mut().unwrap() += 1;
        } else {
            xs.push(x);
            counts.push(1);
        }
    }
    (xs, counts.into_iter().map(|c| c as f64 / n).collect())
}

fn most_frequent(ws: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..ws.len() {
        if ws[i] > ws[best] {
            best = i;
        }
    }
    best
}

/// Joint location/scale fit of scalar values; returns the location.
fn pixel_estimate(values: &[f64], cfg: &DenoiseConfig) -> (f64, Flags) {
    let mut flags = Flags::default();
    // Centering keeps the relative stopping rule independent of the gray level.
    let m = lower_median(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let (xs, ws) = merge_scalars(&centered);
    if xs.len() == 1 {
        flags.constant = true;
        return (values[0], flags);
    }
    let best = most_frequent(&ws);
    if ws[best] >= cfg.nu / (cfg.nu + 1.0) {
        flags.duplicate = true;
        return (xs[best] + m, flags);
    }
    let fit = SampleSet::from_scalars(&xs)
        .and_then(|s| Ok((s, WeightVector::new(ws)?)))
        .and_then(|(s, w)| gmmf_estimate(&s, &w, cfg.nu, &cfg.estimator_options()));
    match fit {
        Ok(r) => {
            flags.not_converged = !r.converged;
            (r.params.mu[0] + m, flags)
        }
        Err(_) => {
            flags.failure = true;
            (m, flags)
        }
    }
}

/// Joint fit of the similar patches and linear restoration of the reference (row 0).
fn patch_estimate(patches: &[Vec<f64>], shift: f64, cfg: &DenoiseConfig) -> (Vec<f64>, Flags) {
    let mut flags = Flags::default();
    let d = cfg.dim();
    let centered: Vec<Vec<f64>> = patches.iter().map(|p| p.iter().map(|v| v - shift).collect()).collect();

    let mut order: Vec<usize> = (0..centered.len()).collect();
    order.sort_by(|&a, &b| {
        centered[a]
            .iter()
            .zip(&centered[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut rows: Vec<&Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in &order {
        if rows.last().is_some_and(|r| **r == centered[i]) {
            *counts.last_mut().unwrap() += 1;
        } else {
            rows.push(&centered[i]);
            counts.push(1);
        }
    }
    if rows.len() == 1 {
        flags.constant = true;
        return (patches[0].clone(), flags);
    }
    let n = centered.len() as f64;
    let ws: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let df = d as f64;
    let best = most_frequent(&ws);
    if df * ws[best] >= (cfg.nu + df - 1.0) / (cfg.nu + df) {
        flags.duplicate = true;
        return (rows[best].iter().map(|v| v + shift).collect(), flags);
    }

    let coordinate_median = |flags: &mut Flags| {
        flags.failure = true;
        (0..d)
            .map(|j| lower_median(&patches.iter().map(|p| p[j]).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    };
    let fit = SampleSet::from_rows(&rows)
        .and_then(|s| Ok((s, WeightVector::new(ws)?)))
        .and_then(|(s, w)| gmmf_estimate(&s, &w, cfg.nu, &cfg.estimator_options()));
    let r = match fit {
        Ok(r) => r,
        Err(_) => return (coordinate_median(&mut flags), flags),
    };
    flags.not_converged = !r.converged;
    match blue_restore(&centered[0], &r.params.mu, &r.params.sigma, cfg.nu, cfg.sigma) {
        Ok(p) => (p.into_iter().map(|v| v + shift).collect(), flags),
        Err(_) => (coordinate_median(&mut flags), flags),
    }
}

/// Denoises a real-valued image under Student-t noise with known `(ν, σ)`.
///
/// Pixelwise mode fits location and scale to the `k` similar center values
/// and keeps the location. Patchwise mode fits the `k` similar patches
/// jointly, restores the reference patch linearly and averages overlapping
/// restorations. Adaptive mode takes the patchwise value wherever the
/// similar center values have sample variance below the threshold.
/// Output does not depend on the number of worker threads.
pub fn denoise_image(noisy: &Image, cfg: &DenoiseConfig) -> Result<Denoised<Image>> {
    cfg.validate_real()?;
    run_pool(cfg.threads, || denoise_real(noisy, cfg))?
}

struct PixelResult {
    members: Vec<(usize, usize)>,
    value: f64,
    variance: f64,
    flags: Flags,
}

fn denoise_real(noisy: &Image, cfg: &DenoiseConfig) -> Result<Denoised<Image>> {
    let g = GridRef::from(noisy);
    let (w, h) = (g.width, g.height);
    let metric = Metric::StudentT {
        nu: cfg.nu,
        sigma: cfg.sigma,
    };
    let pad = Padded::new(g, cfg.patch_size, metric);
    let need_pixelwise = cfg.mode != DenoiseMode::Patchwise;
    let threshold = match cfg.mode {
        DenoiseMode::Pixelwise => 0.0,
        DenoiseMode::Patchwise => f64::INFINITY,
        DenoiseMode::Adaptive => cfg.effective_var_threshold(),
    };

    let per_pixel: Vec<PixelResult> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let center = (idx / w, idx % w);
            let set = select_in(&pad, g, center, cfg.window, cfg.k, metric)?;
            let values: Vec<f64> = set.members.iter().map(|&(r, c)| g.values[r * w + c]).collect();
            let variance = sample_variance(&values);
            let (value, flags) = if need_pixelwise {
                pixel_estimate(&values, cfg)
            } else {
                (g.values[idx], Flags::default())
            };
            Ok(PixelResult {
                members: set.members,
                value,
                variance,
                flags,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = DenoiseReport {
        pixels: w * h,
        ..Default::default()
    };
    for p in &per_pixel {
        report.record(p.flags);
    }
    let use_patch: Vec<bool> = per_pixel.iter().map(|p| p.variance < threshold).collect();
    let mut out: Vec<f64> = per_pixel.iter().map(|p| p.value).collect();
    if !use_patch.iter().any(|&b| b) {
        return Ok(Denoised {
            image: noisy.with_pixels(out)?,
            report,
        });
    }

    // Reference patches that cover at least one pixel taking the patchwise value.
    let half = cfg.patch_size / 2;
    let needed: Vec<usize> = (0..w * h)
        .filter(|&idx| {
            let (r, c) = (idx / w, idx % w);
            (r.saturating_sub(half)..(r + half + 1).min(h))
                .any(|rr| (c.saturating_sub(half)..(c + half + 1).min(w)).any(|cc| use_patch[rr * w + cc]))
        })
        .collect();
    let restored: Vec<(Vec<f64>, Flags)> = needed
        .par_iter()
        .map(|&idx| {
            let members = &per_pixel[idx].members;
            let patches: Vec<Vec<f64>> = members.iter().map(|&m| pad.patch(m)).collect();
            let centers: Vec<f64> = members.iter().map(|&(r, c)| g.values[r * w + c]).collect();
            patch_estimate(&patches, lower_median(&centers), cfg)
        })
        .collect();

    // Sequential aggregation in raster order of the reference pixels.
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    let mut lo = vec![f64::INFINITY; w * h];
    let mut hi = vec![f64::NEG_INFINITY; w * h];
    for (&idx, (patch, flags)) in needed.iter().zip(&restored) {
        report.record(*flags);
        let (r, c) = (idx / w, idx % w);
        for i in 0..cfg.patch_size {
            let Some(rr) = (r + i).checked_sub(half).filter(|&v| v < h) else {
                continue;
            };
            for j in 0..cfg.patch_size {
                let Some(cc) = (c + j).checked_sub(half).filter(|&v| v < w) else {
                    continue;
                };
                let v = patch[i * cfg.patch_size + j];
                let t = rr * w + cc;
                sum[t] += v;
                count[t] += 1;
                lo[t] = lo[t].min(v);
                hi[t] = hi[t].max(v);
            }
        }
    }
    for t in 0..w * h {
        if use_patch[t] {
            report.patchwise_pixels += 1;
            out[t] = if lo[t] == hi[t] { lo[t] } else { sum[t] / f64::from(count[t]) };
        }
    }
    report.contributions = count;
    Ok(Denoised {
        image: noisy.with_pixels(out)?,
        report,
    })
}

/// Sample angle minimizing the weighted sum of geodesic distances.
pub fn circular_median(angles: &[f64]) -> f64 {
    let mut sorted = angles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cost = |a: f64| angles.iter().map(|&b| circular_distance(a, b)).sum::<f64>();
    let mut best = sorted[0];
    let mut best_cost = cost(best);
    for &a in &sorted[1..] {
        let c = cost(a);
        if c < best_cost {
            best = a;
            best_cost = c;
        }
    }
    best
}

fn angle_estimate(values: &[f64], cfg: &DenoiseConfig) -> (f64, Flags) {
    let mut flags = Flags::default();
    if values.iter().all(|&v| v == values[0]) {
        flags.constant = true;
        return (values[0], flags);
    }
    let opts = EstimatorOptions::default().with_tol(cfg.tol).with_max_iter(cfg.max_iter);
    match wrapped_cauchy_estimate(values, &WeightVector::uniform(values.len()), &opts) {
        Ok(r) if !r.rho_zero => {
            flags.not_converged = !r.converged;
            (r.params.a(), flags)
        }
        _ => {
            flags.median = true;
            (circular_median(values), flags)
        }
    }
}

/// Denoises a circle-valued image under wrapped Cauchy noise with scale
/// `γ = cfg.sigma`. Each pixel becomes the fitted location of the center
/// angles of its `k` most similar patches.
pub fn denoise_s1_image(noisy: &S1Image, cfg: &DenoiseConfig) -> Result<Denoised<S1Image>> {
    cfg.validate()?;
    run_pool(cfg.threads, || {
        let g = GridRef::from(noisy);
        let w = g.width;
        let metric = Metric::WrappedCauchy {
            rho: (-cfg.sigma).exp(),
        };
        let pad = Padded::new(g, cfg.patch_size, metric);
        let results: Vec<(f64, Flags)> = (0..w * g.height)
            .into_par_iter()
            .map(|idx| {
                let set = select_in(&pad, g, (idx / w, idx % w), cfg.window, cfg.k, metric)?;
                let values: Vec<f64> = set.members.iter().map(|&(r, c)| g.values[r * w + c]).collect();
                Ok(angle_estimate(&values, cfg))
            })
            .collect::<Result<_>>()?;
        let mut report = DenoiseReport {
            pixels: results.len(),
            ..Default::default()
        };
        for (_, f) in &results {
            report.record(*f);
        }
        let angles = results.into_iter().map(|(a, _)| wrap_angle(a)).collect();
        Ok(Denoised {
            image: S1Image::new(w, g.height, angles)?,
            report,
        })
    })?
}
