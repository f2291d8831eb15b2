//! `myriadkit` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 non-convergence (the JSON result is still printed).

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use myriadkit::denoise::{denoise_image, denoise_s1_image, DenoiseConfig, DenoiseMode, DenoiseReport};
use myriadkit::estimators::{em_estimate, gmmf_estimate, tyler_estimate, tyler_residual, wrapped_cauchy_estimate};
use myriadkit::imaging::{add_student_t_noise, add_wrapped_cauchy_noise, psnr, s1_mse, ssim, Raster};
use myriadkit::{EstimatorOptions, Mode};
use myriadkit_bench::{csv_string, run_table1, BenchConfig, SigmaSpec};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: String) -> Self {
        CliError::Data(msg)
    }
}

impl From<myriadkit::Error> for CliError {
    fn from(e: myriadkit::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

enum Status {
    Done,
    NotConverged,
}

type CmdResult = Result<Status, CliError>;

#[derive(Parser)]
#[command(name = "myriadkit", version, about = "Robust Student-t estimation and nonlocal denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weighted Student-t location and scatter (GMMF or EM).
    Estimate(EstimateArgs),
    /// Wrapped Cauchy location and concentration of angles.
    WcEstimate(WcArgs),
    /// Tyler's scatter estimator on centered data.
    Tyler(TylerArgs),
    /// Adds Student-t noise to a real image or wrapped Cauchy noise to an angle image.
    AddNoise(NoiseArgs),
    /// Nonlocal denoising.
    Denoise(DenoiseArgs),
    /// Image quality metrics against a reference.
    Metrics(MetricsArgs),
    /// Iteration-count study of GMMF against EM.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Iteration {
    /// Relative step threshold.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl Iteration {
    fn options(&self) -> EstimatorOptions {
        EstimatorOptions::default().with_tol(self.tol).with_max_iter(self.max_iter)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gmmf,
    Em,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMode {
    Joint,
    ScatterOnly,
}

#[derive(Args)]
struct EstimateArgs {
    /// Samples: headerless CSV, one row per sample.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    nu: f64,
    /// Positive weights, one per sample; rescaled to sum to one.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Gmmf)]
    method: Method,
    #[arg(long, value_enum, default_value_t = EstimateMode::Joint)]
    mode: EstimateMode,
    /// Fixed location for scatter-only mode, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    #[command(flatten)]
    iteration: Iteration,
    /// Run the feasibility check before fitting (default).
    #[arg(long, overrides_with = "no_check")]
    check: bool,
    /// Skip the feasibility check.
    #[arg(long)]
    no_check: bool,
}

#[derive(Args)]
struct WcArgs {
    /// Angles in radians, one per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    iteration: Iteration,
}

#[derive(Args)]
struct TylerArgs {
    /// Centered samples: headerless CSV, one row per sample.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    iteration: Iteration,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModel {
    StudentT,
    WrappedCauchy,
}

#[derive(Args)]
struct NoiseArgs {
    /// PGM or MYR1 image.
    #[arg(long)]
    input: PathBuf,
    /// Written as PGM for a `.pgm` extension, MYR1 otherwise.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    model: NoiseModel,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Cauchy scale of the wrapped noise.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Real,
    S1,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pixelwise,
    Patchwise,
    Adaptive,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Real)]
    kind: Kind,
    /// Degrees of freedom of the noise (real images).
    #[arg(long)]
    nu: Option<f64>,
    /// Noise scale (real images).
    #[arg(long)]
    sigma: Option<f64>,
    /// Cauchy scale of the wrapped noise (circle-valued images).
    #[arg(long)]
    gamma: Option<f64>,
    /// Patch side (odd).
    #[arg(long, default_value_t = 5)]
    patch: usize,
    /// Search window side (odd); defaults to 4·patch + 1.
    #[arg(long)]
    window: Option<usize>,
    /// Number of similar patches.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Pixelwise)]
    mode: ModeArg,
    /// Adaptive-mode variance cut; defaults to a multiple of the noise variance.
    #[arg(long)]
    var_threshold: Option<f64>,
    /// Accepted for scripts; denoising never uses random numbers.
    #[arg(long)]
    seedless: bool,
    #[arg(long, env = "MYRIADKIT_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Real)]
    kind: Kind,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON file with any of the fields d, n, trials, nus, sigmas, mu, tol, max_iter, seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    nus: Option<Vec<f64>>,
    /// Scatter matrices λ·I, given as comma-separated λ.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "MYRIADKIT_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::WcEstimate(a) => cmd_wc_estimate(a),
        Command::Tyler(a) => cmd_tyler(a),
        Command::AddNoise(a) => cmd_add_noise(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: iteration limit reached before convergence");
            ExitCode::from(3)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(value: &Value, converged: bool) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialize"));
    Ok(if converged { Status::Done } else { Status::NotConverged })
}

/// JSON number, or the strings "inf"/"-inf"/"nan" for non-finite values.
fn number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn cmd_estimate(a: EstimateArgs) -> CmdResult {
    let samples = io::read_samples(&a.input)?;
    let w = io::read_weights(a.weights.as_deref(), samples.n())?;
    let mode = match a.mode {
        EstimateMode::Joint => Mode::Joint,
        EstimateMode::ScatterOnly => Mode::ScatterOnly {
            mu: a.mu.ok_or_else(|| CliError::usage("--mode scatter-only requires --mu"))?,
        },
    };
    let mut opts = a.iteration.options().with_mode(mode.clone());
    if a.no_check {
        opts = opts.unchecked();
    }
    let r = match a.method {
        Method::Gmmf => gmmf_estimate(&samples, &w, a.nu, &opts)?,
        Method::Em => em_estimate(&samples, &w, a.nu, &opts)?,
    };
    let value = json!({
        "method": match a.method { Method::Gmmf => "gmmf", Method::Em => "em" },
        "mode": mode.name(),
        "nu": a.nu,
        "d": samples.d(),
        "n": samples.n(),
        "mu": r.params.mu,
        "sigma": r.params.sigma.as_slice(),
        "iterations": r.iterations,
        "converged": r.converged,
        "final_step": r.final_step,
        "trace_residual": r.residuals.trace,
        "location_residual": r.residuals.location,
        "scatter_residual": r.residuals.scatter,
        "checks_bypassed": r.checks_bypassed,
        "init_regularized": r.init_regularized,
    });
    emit(&value, r.converged)
}

fn cmd_wc_estimate(a: WcArgs) -> CmdResult {
    let angles = io::read_column(&a.input)?;
    let w = io::read_weights(a.weights.as_deref(), angles.len())?;
    let r = wrapped_cauchy_estimate(&angles, &w, &a.iteration.options())?;
    let value = json!({
        "a": r.params.a(),
        "rho": r.params.rho(),
        "zeta": r.zeta,
        "n": angles.len(),
        "iterations": r.iterations,
        "converged": r.converged,
        "final_step": r.final_step,
        "rho_zero": r.rho_zero,
        "damped_steps": r.damped_steps,
    });
    emit(&value, r.converged)
}

fn cmd_tyler(a: TylerArgs) -> CmdResult {
    let samples = io::read_samples(&a.input)?;
    let w = io::read_weights(a.weights.as_deref(), samples.n())?;
    let r = tyler_estimate(&samples, &w, &a.iteration.options())?;
    let residual = tyler_residual(&samples, &w, &r.params.sigma)?;
    let value = json!({
        "d": samples.d(),
        "n": samples.n(),
        "sigma": r.params.sigma.as_slice(),
        "iterations": r.iterations,
        "converged": r.converged,
        "final_step": r.final_step,
        "residual": residual,
    });
    emit(&value, r.converged)
}

fn required(v: Option<f64>, flag: &str, context: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::usage(format!("{context} requires {flag}")))
}

fn cmd_add_noise(a: NoiseArgs) -> CmdResult {
    let input = io::read_raster(&a.input)?;
    let noisy = match a.model {
        NoiseModel::StudentT => {
            let nu = required(a.nu, "--nu", "--model student-t")?;
            let sigma = required(a.sigma, "--sigma", "--model student-t")?;
            Raster::Real(add_student_t_noise(&input.into_image()?, nu, sigma, a.seed)?)
        }
        NoiseModel::WrappedCauchy => {
            let gamma = required(a.gamma, "--gamma", "--model wrapped-cauchy")?;
            Raster::Circular(add_wrapped_cauchy_noise(&input.into_s1()?, gamma, a.seed)?)
        }
    };
    let clamped = io::write_raster(&noisy, &a.output)?;
    let pixels = match &noisy {
        Raster::Real(img) => img.pixels().len(),
        Raster::Circular(img) => img.angles().len(),
    };
    emit(&json!({ "output": a.output, "pixels": pixels, "clamped": clamped, "seed": a.seed }), true)
}

fn report_json(r: &DenoiseReport, seconds: f64, output: &Path) -> Value {
    json!({
        "output": output,
        "pixels": r.pixels,
        "constant_sets": r.constant_sets,
        "duplicate_fallbacks": r.duplicate_fallbacks,
        "estimator_failures": r.estimator_failures,
        "not_converged": r.not_converged,
        "circular_median_fallbacks": r.circular_median_fallbacks,
        "patchwise_pixels": r.patchwise_pixels,
        "runtime_seconds": seconds,
    })
}

fn cmd_denoise(a: DenoiseArgs) -> CmdResult {
    let input = io::read_raster(&a.input)?;
    let (nu, sigma) = match a.kind {
        Kind::Real => (required(a.nu, "--nu", "--kind real")?, required(a.sigma, "--sigma", "--kind real")?),
        Kind::S1 => (0.0, required(a.gamma, "--gamma", "--kind s1")?),
    };
    let mut cfg = DenoiseConfig::new(a.patch, nu, sigma).with_k(a.k).with_mode(match a.mode {
        ModeArg::Pixelwise => DenoiseMode::Pixelwise,
        ModeArg::Patchwise => DenoiseMode::Patchwise,
        ModeArg::Adaptive => DenoiseMode::Adaptive,
    });
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    if let Some(w) = a.window {
        cfg = cfg.with_window(w);
    }
    if let Some(t) = a.var_threshold {
        cfg = cfg.with_var_threshold(t);
    }
    if let Some(n) = a.threads {
        cfg = cfg.with_threads(n);
    }
    let start = Instant::now();
    let (out, report) = match a.kind {
        Kind::Real => {
            let r = denoise_image(&input.into_image()?, &cfg)?;
            (Raster::Real(r.image), r.report)
        }
        Kind::S1 => {
            let r = denoise_s1_image(&input.into_s1()?, &cfg)?;
            (Raster::Circular(r.image), r.report)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    io::write_raster(&out, &a.output)?;
    emit(&report_json(&report, seconds, &a.output), true)
}

fn cmd_metrics(a: MetricsArgs) -> CmdResult {
    let reference = io::read_raster(&a.reference)?;
    let test = io::read_raster(&a.test)?;
    let value = match a.kind {
        Kind::Real => {
            let (r, t) = (reference.into_image()?, test.into_image()?);
            json!({ "psnr": number(psnr(&r, &t)?), "ssim": ssim(&r, &t)? })
        }
        Kind::S1 => json!({ "epsilon": s1_mse(&reference.into_s1()?, &test.into_s1()?)? }),
    };
    emit(&value, true)
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<BenchConfig>(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => BenchConfig::default(),
    };
    if let Some(d) = a.d {
        cfg.d = d;
        // Keep the default scatter in step with the dimension.
        if a.config.is_none() && a.scales.is_none() {
            cfg.sigmas = vec![SigmaSpec::scaled_identity(1.0, d)];
        }
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(nus) = a.nus {
        cfg.nus = nus;
    }
    if let Some(scales) = a.scales {
        cfg.sigmas = scales.iter().map(|&l| SigmaSpec::scaled_identity(l, cfg.d)).collect();
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let rows = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::data(e.to_string()))?
            .install(|| run_table1(&cfg))?,
        None => run_table1(&cfg)?,
    };
    let text = csv_string(&rows);
    match &a.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(Status::Done)
}
