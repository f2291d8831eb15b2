//! Raster containers, file formats, noise synthesis and quality metrics.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::distributions::wrap_angle;
use crate::error::{Error, Result};
use crate::rng;

/// Real-valued raster, row-major, with a nominal dynamic range `[0, peak]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    peak: f64,
}

impl Image {
    pub const DEFAULT_PEAK: f64 = 255.0;

    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_shape(width, height, pixels.len())?;
        if let Some(pos) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / width,
                col: pos % width,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            peak: Self::DEFAULT_PEAK,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self::new(width, height, pixels)
    }

    pub fn with_peak(mut self, peak: f64) -> Result<Self> {
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::InvalidParameter(format!("peak {peak} must be positive")));
        }
        self.peak = peak;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Value at a possibly out-of-range position, reflected at the borders.
    #[inline]
    pub fn get_mirrored(&self, row: isize, col: isize) -> f64 {
        self.get(mirror_index(row, self.height), mirror_index(col, self.width))
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Same shape and peak, new pixel values.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Image::new(self.width, self.height, pixels)?.with_peak(self.peak)
    }

    /// Clamps to `[0, peak]`, returning the number of changed pixels.
    pub fn clipped(&self) -> (Image, usize) {
        let mut count = 0;
        let pixels = self
            .pixels
            .iter()
            .map(|&v| {
                let c = v.clamp(0.0, self.peak);
                count += usize::from(c != v);
                c
            })
            .collect();
        (
            Image {
                pixels,
                ..self.clone()
            },
            count,
        )
    }
}

/// Circle-valued raster with angles in `[−π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct S1Image {
    width: usize,
    height: usize,
    angles: Vec<f64>,
}

impl S1Image {
    pub fn new(width: usize, height: usize, angles: Vec<f64>) -> Result<Self> {
        check_shape(width, height, angles.len())?;
        for (pos, &v) in angles.iter().enumerate() {
            let (row, col) = (pos / width, pos % width);
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            if !(-PI..PI).contains(&v) {
                return Err(Error::AngleOutOfRange { row, col, value: v });
            }
        }
        Ok(Self { width, height, angles })
    }

    /// Wraps arbitrary finite angles into `[−π, π)`.
    pub fn from_wrapped(width: usize, height: usize, angles: Vec<f64>) -> Result<Self> {
        Self::new(width, height, angles.into_iter().map(wrap_angle).collect())
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let angles = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self::from_wrapped(width, height, angles)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.angles[row * self.width + col]
    }

    #[inline]
    pub fn get_mirrored(&self, row: isize, col: isize) -> f64 {
        self.get(mirror_index(row, self.height), mirror_index(col, self.width))
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn into_angles(self) -> Vec<f64> {
        self.angles
    }

    /// `(θ + c)` wrapped, pixelwise.
    pub fn rotated(&self, c: f64) -> S1Image {
        S1Image {
            angles: self.angles.iter().map(|&t| wrap_angle(t + c)).collect(),
            ..self.clone()
        }
    }
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!("image shape {width}x{height} is empty")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidParameter(format!(
            "{len} values do not fill a {width}x{height} image"
        )));
    }
    Ok(())
}

/// Reflects `i` into `0..n` without repeating the edge sample:
/// `−1 ↦ 1`, `n ↦ n − 2`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

// --- noise ----------------------------------------------------------------

/// `fᵢ = uᵢ + σ zᵢ/√yᵢ` with `zᵢ ~ N(0,1)`, `yᵢ ~ Γ(ν/2, rate ν/2)`. No clipping.
pub fn add_student_t_noise(u: &Image, nu: f64, sigma: f64, seed: u64) -> Result<Image> {
    if !(nu >= 1.0) || !nu.is_finite() {
        return Err(Error::InvalidNu(nu));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("noise scale {sigma} must be positive")));
    }
    let gamma = Gamma::new(nu / 2.0, 2.0 / nu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let pixels = u
        .pixels
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = gamma.sample(&mut rng);
            v + sigma * z / y.sqrt()
        })
        .collect();
    u.with_pixels(pixels)
}

/// `fᵢ = wrap(uᵢ + ηᵢ)` with `ηᵢ ~ C(0, γ)`, so the perturbation is wrapped
/// Cauchy with `ρ = e^{−γ}`.
pub fn add_wrapped_cauchy_noise(u: &S1Image, gamma: f64, seed: u64) -> Result<S1Image> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
    }
    let mut rng = rng::seeded(seed);
    let angles = u
        .angles
        .iter()
        .map(|&t| {
            let v: f64 = rng.random();
            wrap_angle(t + gamma * (PI * (v - 0.5)).tan())
        })
        .collect();
    Ok(S1Image { angles, ..u.clone() })
}

// --- metrics --------------------------------------------------------------

fn same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(a, b));
    }
    Ok(())
}

/// `10 log₁₀(peak²/MSE)` with the reference's peak; `+∞` for identical images.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    same_shape(reference.shape(), test.shape())?;
    let mse = reference
        .pixels
        .iter()
        .zip(&test.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (reference.peak * reference.peak / mse).log10())
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Mean local SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5),
/// `C₁ = (0.01·peak)²`, `C₂ = (0.03·peak)²`.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    same_shape(reference.shape(), test.shape())?;
    let (h, w) = reference.shape();
    if h < SSIM_WIN || w < SSIM_WIN {
        return Err(Error::TooSmall(w, h));
    }
    let half = (SSIM_WIN / 2) as f64;
    let mut kernel: Vec<f64> = (0..SSIM_WIN)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let x = &reference.pixels;
    let y = &test.pixels;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let filt = |src: &[f64]| valid_filter(src, w, h, &kernel);
    let (mx, my, sxx, syy, sxy) = (filt(x), filt(y), filt(&xx), filt(&yy), filt(&xy));

    let c1 = (0.01 * reference.peak).powi(2);
    let c2 = (0.03 * reference.peak).powi(2);
    let mut acc = 0.0;
    for i in 0..mx.len() {
        let (a, b) = (mx[i], my[i]);
        let va = sxx[i] - a * a;
        let vb = syy[i] - b * b;
        let cov = sxy[i] - a * b;
        acc += ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (va + vb + c2));
    }
    Ok(acc / mx.len() as f64)
}

/// Separable correlation keeping only fully covered positions.
fn valid_filter(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| kernel[j] * src[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|j| kernel[j] * rows[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Geodesic distance on the circle, `|((α − β + π) mod 2π) − π|`.
pub fn circular_distance(alpha: f64, beta: f64) -> f64 {
    ((alpha - beta + PI).rem_euclid(2.0 * PI) - PI).abs()
}

/// Mean squared geodesic distance between two circle-valued images.
pub fn s1_mse(reference: &S1Image, test: &S1Image) -> Result<f64> {
    same_shape(reference.shape(), test.shape())?;
    let total: f64 = reference
        .angles
        .iter()
        .zip(&test.angles)
        .map(|(&a, &b)| circular_distance(a, b).powi(2))
        .sum();
    Ok(total / reference.angles.len() as f64)
}

// --- PGM ------------------------------------------------------------------

/// Decodes a binary (P5) PGM. The image peak is the file's maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedHeader(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::MalformedHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing whitespace after maxval".into()));
    }
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("image dimensions overflow".into()))?;
    let need = count
        .checked_mul(bps)
        .ok_or_else(|| Error::MalformedHeader("image dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::MalformedHeader(format!(
            "raster truncated: {} of {need} bytes",
            payload.len()
        )));
    }
    let pixels = if bps == 1 {
        payload[..need].iter().map(|&b| f64::from(b)).collect()
    } else {
        payload[..need]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    Image::new(width, height, pixels)?.with_peak(maxval as f64)
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("invalid {what} {:?}", String::from_utf8_lossy(tok))))
}

/// Encodes as P5 with `maxval = peak`. Pixels are clamped to `[0, peak]` and
/// rounded half to even; returns the bytes and the number of clamped pixels.
pub fn encode_pgm(img: &Image) -> Result<(Vec<u8>, usize)> {
    let peak = img.peak;
    if peak.fract() != 0.0 || !(1.0..=65535.0).contains(&peak) {
        return Err(Error::InvalidParameter(format!(
            "PGM needs an integer peak in 1..=65535, got {peak}"
        )));
    }
    let maxval = peak as u32;
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    let mut clamped = 0;
    for &v in &img.pixels {
        let c = v.clamp(0.0, peak);
        clamped += usize::from(c != v);
        let q = c.round_ties_even() as u32;
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok((out, clamped))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Writes a P5 file; returns the number of clamped pixels.
pub fn write_pgm(img: &Image, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let (bytes, clamped) = encode_pgm(img)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(clamped)
}

// --- MYR1 -----------------------------------------------------------------

const MYR1_MAGIC: &[u8; 4] = b"MYR1";
const MYR1_HEADER: usize = 24;
pub const KIND_REAL: u32 = 0;
pub const KIND_CIRCULAR: u32 = 1;

/// Contents of a MYR1 raw float file.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Real(Image),
    Circular(S1Image),
}

impl Raster {
    pub fn kind(&self) -> u32 {
        match self {
            Raster::Real(_) => KIND_REAL,
            Raster::Circular(_) => KIND_CIRCULAR,
        }
    }

    pub fn into_image(self) -> Result<Image> {
        match self {
            Raster::Real(img) => Ok(img),
            other => Err(Error::KindMismatch {
                expected: KIND_REAL,
                found: other.kind(),
            }),
        }
    }

    pub fn into_s1(self) -> Result<S1Image> {
        match self {
            Raster::Circular(img) => Ok(img),
            other => Err(Error::KindMismatch {
                expected: KIND_CIRCULAR,
                found: other.kind(),
            }),
        }
    }
}

/// 24-byte header (`"MYR1"`, u32 width, u32 height, u32 kind, u64 reserved)
/// followed by row-major f64 values, all little-endian.
pub fn encode_f64(raster: &Raster) -> Vec<u8> {
    let (w, h, values) = match raster {
        Raster::Real(img) => (img.width, img.height, &img.pixels),
        Raster::Circular(img) => (img.width, img.height, &img.angles),
    };
    let mut out = Vec::with_capacity(MYR1_HEADER + 8 * values.len());
    out.extend_from_slice(MYR1_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&raster.kind().to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_f64(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < MYR1_HEADER {
        return Err(Error::MalformedHeader(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MYR1_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected MYR1".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (w, h, kind) = (u32_at(4) as usize, u32_at(8) as usize, u32_at(12));
    if w == 0 || h == 0 {
        return Err(Error::MalformedHeader(format!("empty raster {w}x{h}")));
    }
    if kind > KIND_CIRCULAR {
        return Err(Error::MalformedHeader(format!("unknown kind {kind}")));
    }
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(8));
    let payload = &bytes[MYR1_HEADER..];
    if need != Some(payload.len()) {
        return Err(Error::MalformedHeader(format!(
            "payload of {} bytes does not match {w}x{h} f64 values",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(if kind == KIND_REAL {
        Raster::Real(Image::new(w, h, values)?)
    } else {
        Raster::Circular(S1Image::new(w, h, values)?)
    })
}

pub fn read_f64(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_f64(&bytes)
}

pub fn write_f64(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_f64(raster)).map_err(|e| Error::io(path, e))
}

// --- synthetic test images ------------------------------------------------

/// Piecewise-constant scene on `[0, 255]`: background, two rectangles, a
/// disc and a band of vertical stripes.
pub fn synthetic_piecewise_constant(width: usize, height: usize) -> Result<Image> {
    let (wf, hf) = (width as f64, height as f64);
    Image::from_fn(width, height, |r, c| {
        let (y, x) = (r as f64 / hf, c as f64 / wf);
        let (dy, dx) = (y - 0.65, x - 0.35);
        if dy * dy + dx * dx < 0.04 {
            200.0
        } else if (0.1..0.4).contains(&y) && (0.1..0.55).contains(&x) {
            160.0
        } else if (0.2..0.85).contains(&y) && (0.65..0.9).contains(&x) {
            if (((x - 0.65) * 20.0) as usize).is_multiple_of(2) {
                230.0
            } else {
                90.0
            }
        } else {
            40.0
        }
    })
}

/// Circle-valued counterpart: two squares, an ellipse and a disc on a
/// background, at five angles spaced `2π/5` apart (one pair straddles `±π`).
pub fn synthetic_piecewise_constant_s1(width: usize, height: usize) -> Result<S1Image> {
    let (wf, hf) = (width as f64, height as f64);
    let level = |i: u32| -2.8 + f64::from(i) * 2.0 * PI / 5.0;
    S1Image::from_fn(width, height, |r, c| {
        let (y, x) = (r as f64 / hf, c as f64 / wf);
        let disc = (y - 0.72).powi(2) + (x - 0.28).powi(2) < 0.03;
        let ellipse = ((y - 0.7) / 0.18).powi(2) + ((x - 0.72) / 0.12).powi(2) < 1.0;
        if (0.08..0.4).contains(&y) && (0.08..0.4).contains(&x) {
            level(1)
        } else if (0.12..0.42).contains(&y) && (0.55..0.9).contains(&x) {
            level(3)
        } else if disc {
            level(0)
        } else if ellipse {
            level(4)
        } else {
            level(2)
        }
    })
}
