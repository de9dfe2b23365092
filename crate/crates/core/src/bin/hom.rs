use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hom_core::analysis::{difference_curve, fit_hom_model, rebin, v0_from_histograms, FitOptions, FitParams};
use hom_core::coherence::{analytic_curves, BeamSplitterConfig, EmitterParams, PolarizationMode};
use hom_core::config::RunConfig;
use hom_core::detection::{default_norm_region, normalize, CorrelationMode, DetectionConfig};
use hom_core::histogram::CorrelationHistogram;
use hom_core::io;
use hom_core::pipeline::simulate;
use hom_core::selftest::{run_selftest, SelftestOptions};
use hom_core::Result;

const GAMMA_SPON: f64 = 1.0 / 3.4;

#[derive(Parser)]
#[command(name = "hom", version, about = "Two-photon interference of a single dephasing emitter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the analytic correlation functions.
    Analytic(AnalyticArgs),
    /// Run the Monte Carlo experiment and write time tags and a histogram.
    Simulate(SimulateArgs),
    /// Fit a parallel/orthogonal histogram pair.
    Analyze(AnalyzeArgs),
    /// Run the built-in oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long, default_value_t = GAMMA_SPON)]
    gamma_spon: f64,
    /// Defaults to 3 × gamma_spon.
    #[arg(long)]
    gamma_pure: Option<f64>,
    /// Defaults to 2.5 × gamma_spon.
    #[arg(long)]
    wp: Option<f64>,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    mode_match: f64,
    #[arg(long, default_value_t = 0.42)]
    irf_fwhm_ns: f64,
    /// Defaults to 0.5 / gamma_spon.
    #[arg(long)]
    tau_max_ns: Option<f64>,
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolArg {
    Parallel,
    Orthogonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tac,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    FiniteDelay,
    LargeDelay,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat `key = value` run configuration. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_ns: Option<f64>,
    #[arg(long, value_enum)]
    pol: Option<PolArg>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    delta_t_ns: Option<f64>,
    #[arg(long)]
    gamma_spon: Option<f64>,
    #[arg(long)]
    gamma_pure: Option<f64>,
    #[arg(long)]
    wp: Option<f64>,
    #[arg(long)]
    mode_match: Option<f64>,
    #[arg(long)]
    irf_fwhm_ns: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    par: PathBuf,
    #[arg(long)]
    orth: PathBuf,
    /// Rebin factor for the fit.
    #[arg(long, default_value_t = 2)]
    bin: usize,
    /// Rebin factor for the difference curve.
    #[arg(long, default_value_t = 7)]
    diff_bin: usize,
    #[arg(long, default_value_t = GAMMA_SPON)]
    gamma_spon: f64,
    #[arg(long, default_value_t = 4.6)]
    delta_t_ns: f64,
    #[arg(long, default_value_t = 0.42)]
    irf_fwhm_ns: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = FitModel::FiniteDelay)]
    fit_model: FitModel,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = SelftestOptions::default().seed)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn run_analytic(a: &AnalyticArgs) -> Result<()> {
    let p = EmitterParams::new(
        a.gamma_spon,
        a.gamma_pure.unwrap_or(3.0 * a.gamma_spon),
        a.wp.unwrap_or(2.5 * a.gamma_spon),
    )?;
    let bs = BeamSplitterConfig::new(a.theta, a.mode_match)?;
    let tau_max = a.tau_max_ns.unwrap_or(0.5 / a.gamma_spon);
    let curves = analytic_curves(tau_max, a.points, &p, &bs, a.irf_fwhm_ns)?;
    let meta = [
        ("gamma_spon_per_ns", p.gamma_spon.to_string()),
        ("gamma_pure_per_ns", p.gamma_pure.to_string()),
        ("w_p_per_ns", p.w_p.to_string()),
        ("theta_rad", a.theta.to_string()),
        ("mode_match", a.mode_match.to_string()),
        ("irf_fwhm_ns", a.irf_fwhm_ns.to_string()),
        ("t2_ns", p.t2().to_string()),
    ];
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            io::write_analytic(&mut w, &meta, &curves)
        }
        None => io::write_analytic(&mut std::io::stdout().lock(), &meta, &curves),
    }
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let mut rc = match &a.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $arg:expr),* $(,)?) => {
            $(if let Some(v) = $arg { rc.$field = v; })*
        };
    }
    set!(
        seed <- a.seed,
        duration <- a.duration_ns,
        theta <- a.theta,
        delta_t <- a.delta_t_ns,
        gamma_spon <- a.gamma_spon,
        gamma_pure <- a.gamma_pure,
        w_p <- a.wp,
        mode_match <- a.mode_match,
        irf_fwhm <- a.irf_fwhm_ns,
        replicas <- a.replicas,
    );
    if let Some(p) = a.pol {
        rc.pol = match p {
            PolArg::Parallel => PolarizationMode::Parallel,
            PolArg::Orthogonal => PolarizationMode::Orthogonal,
        };
    }
    if let Some(m) = a.mode {
        rc.correlation_mode = match m {
            ModeArg::Tac => CorrelationMode::Tac,
            ModeArg::Full => CorrelationMode::Full,
        };
    }
    let cfg = rc.simulation()?;
    let out = simulate(&cfg, true)?;
    let region = default_norm_region(rc.delta_t, rc.gamma_spon, &cfg.detection)?;
    let hist = match normalize(&out.histogram, region) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("warning: histogram left unnormalized: {e}");
            out.histogram.clone()
        }
    };
    fs::create_dir_all(&a.out)?;
    io::write_timetags(&a.out.join("timetags.csv"), &out.events)?;
    io::write_histogram(&a.out.join("histogram.csv"), &hist)?;
    fs::write(a.out.join("config.txt"), rc.to_text())?;
    eprintln!(
        "{} photons, {} detection events, {} pairs in the histogram",
        out.photons,
        out.events.len(),
        out.histogram.total()
    );
    Ok(())
}

fn load_normalized(path: &Path, delta_t: f64, gamma_spon: f64) -> Result<CorrelationHistogram> {
    let h = io::read_histogram(path)?;
    if h.is_normalized() {
        return Ok(h);
    }
    let det = DetectionConfig {
        tau_min: h.tau_min(),
        tau_max: h.tau_max(),
        ..DetectionConfig::default()
    };
    normalize(&h, default_norm_region(delta_t, gamma_spon, &det)?)
}

fn run_analyze(a: &AnalyzeArgs) -> Result<()> {
    let par = load_normalized(&a.par, a.delta_t_ns, a.gamma_spon)?;
    let orth = load_normalized(&a.orth, a.delta_t_ns, a.gamma_spon)?;
    par.check_geometry(&orth)?;

    let diff = difference_curve(&rebin(&orth, a.diff_bin)?, &rebin(&par, a.diff_bin)?)?;
    let (hp, ho) = (rebin(&par, a.bin)?, rebin(&orth, a.bin)?);
    let det = DetectionConfig {
        irf_fwhm_pair: a.irf_fwhm_ns,
        ..DetectionConfig::default()
    };
    let opts = FitOptions {
        theta: a.theta,
        delay: match a.fit_model {
            FitModel::FiniteDelay => Some(a.delta_t_ns),
            FitModel::LargeDelay => None,
        },
        ..FitOptions::default()
    };
    let fit = fit_hom_model(&hp, &ho, a.gamma_spon, &det, &FitParams::default(), &opts)?;
    let v0_window = opts.v0_window.unwrap_or(a.irf_fwhm_ns.max(hp.bin_width));
    let v0_data = v0_from_histograms(&hp, &ho, v0_window).unwrap_or(f64::NAN);
    let extra = [
        ("v0_data", v0_data.to_string()),
        (
            "fit_model",
            match a.fit_model {
                FitModel::FiniteDelay => "finite-delay",
                FitModel::LargeDelay => "large-delay",
            }
            .to_string(),
        ),
        ("fit_bin_width_ns", hp.bin_width.to_string()),
        ("fit_window_ns", opts.window.to_string()),
    ];
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("results.txt"), io::results_text(&fit, &extra))?;
    io::write_difference(&a.out.join("difference.csv"), &diff)?;
    if !fit.physical {
        eprintln!("warning: unconstrained optimum lies outside the physical domain");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analytic(a) => run_analytic(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Selftest(a) => {
            let report = run_selftest(&SelftestOptions {
                seed: a.seed,
                quick: a.quick,
                inject_fault: a.inject_fault,
            });
            let mut out = std::io::stdout().lock();
            for c in &report.checks {
                let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return if report.passed() {
                ExitCode::SUCCESS
            } else {
                let _ = writeln!(out, "{} of {} checks failed", report.failures().len(), report.checks.len());
                ExitCode::from(4)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
