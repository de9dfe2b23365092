//! Closed-form coherence functions of a single incoherently pumped, dephasing
//! emitter, and of its two-photon interference at a beam splitter.
//!
//! All delays are in ns and all rates in 1/ns. Every function is evaluated on
//! `|tau|`, so curves are symmetric by construction.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// FWHM of a Gaussian divided by its standard deviation, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Gaussian kernels are truncated at this many standard deviations.
pub const KERNEL_HALF_WIDTH_SIGMAS: f64 = 5.0;

/// Relaxation of the pumped vibronic level into the emitting level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VibronicRelaxation {
    Instantaneous,
    /// Finite relaxation rate in 1/ns.
    Rate(f64),
}

/// Rates of the three-level emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterParams {
    /// Spontaneous emission rate, 1/ns.
    pub gamma_spon: f64,
    /// Pure dephasing rate, 1/ns. May be zero.
    pub gamma_pure: f64,
    /// Effective incoherent pump rate, 1/ns.
    pub w_p: f64,
    pub gamma_vib: VibronicRelaxation,
}

impl EmitterParams {
    pub fn new(gamma_spon: f64, gamma_pure: f64, w_p: f64) -> Result<Self> {
        let p = EmitterParams {
            gamma_spon,
            gamma_pure,
            w_p,
            gamma_vib: VibronicRelaxation::Instantaneous,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_vibronic_rate(mut self, rate: f64) -> Result<Self> {
        self.gamma_vib = VibronicRelaxation::Rate(rate);
        self.validate()?;
        Ok(self)
    }

    /// Emitter used for the illustrative analytic curves: `W_P = 2.5 Γ`,
    /// `γ_pure = 3 Γ`.
    pub fn illustrative(gamma_spon: f64) -> Self {
        EmitterParams {
            gamma_spon,
            gamma_pure: 3.0 * gamma_spon,
            w_p: 2.5 * gamma_spon,
            gamma_vib: VibronicRelaxation::Instantaneous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("gamma_spon", self.gamma_spon)?;
        positive("w_p", self.w_p)?;
        if !(self.gamma_pure.is_finite() && self.gamma_pure >= 0.0) {
            return Err(Error::param(
                "gamma_pure",
                format!("must be finite and >= 0, got {}", self.gamma_pure),
            ));
        }
        if let VibronicRelaxation::Rate(r) = self.gamma_vib {
            positive("gamma_vib", r)?;
        }
        Ok(())
    }

    /// Total dephasing rate of the emission line, `Γ/2 + γ_pure`.
    pub fn gamma_total(&self) -> f64 {
        0.5 * self.gamma_spon + self.gamma_pure
    }

    /// Optical coherence time `T2 = 1 / gamma_total`, ns.
    pub fn t2(&self) -> f64 {
        1.0 / self.gamma_total()
    }

    /// Mean photon emission rate of the renewal process, 1/ns.
    pub fn photon_rate(&self) -> f64 {
        1.0 / self.mean_waiting_time()
    }

    pub fn mean_waiting_time(&self) -> f64 {
        let vib = match self.gamma_vib {
            VibronicRelaxation::Instantaneous => 0.0,
            VibronicRelaxation::Rate(r) => 1.0 / r,
        };
        1.0 / self.w_p + vib + 1.0 / self.gamma_spon
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

/// Beam-splitter angle and spatial mode matching of the two inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterConfig {
    /// Transmission is `cos²θ`, reflection `sin²θ`.
    pub theta: f64,
    /// Contrast factor multiplying the two-photon interference term.
    pub mode_match: f64,
}

impl Default for BeamSplitterConfig {
    fn default() -> Self {
        BeamSplitterConfig {
            theta: std::f64::consts::FRAC_PI_4,
            mode_match: 0.7,
        }
    }
}

impl BeamSplitterConfig {
    pub fn new(theta: f64, mode_match: f64) -> Result<Self> {
        let bs = BeamSplitterConfig { theta, mode_match };
        bs.validate()?;
        Ok(bs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && (0.0..=FRAC_PI_2).contains(&self.theta)) {
            return Err(Error::param(
                "theta",
                format!("must lie in [0, pi/2], got {}", self.theta),
            ));
        }
        if !(0.0..=1.0).contains(&self.mode_match) {
            return Err(Error::param(
                "mode_match",
                format!("must lie in [0, 1], got {}", self.mode_match),
            ));
        }
        Ok(())
    }

    pub fn transmission(&self) -> f64 {
        let c = self.theta.cos();
        c * c
    }

    /// Computed as `1 - transmission` so the two always sum to one.
    pub fn reflection(&self) -> f64 {
        1.0 - self.transmission()
    }

    /// `sin²θ cos²θ / (cos⁴θ + sin⁴θ)`, equal to 1/2 at θ = π/4.
    pub fn interference_coefficient(&self) -> f64 {
        let t = self.transmission();
        let r = self.reflection();
        t * r / (t * t + r * r)
    }
}

/// Relative polarization of the two interferometer arms at the beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolarizationMode {
    Parallel,
    Orthogonal,
}

impl PolarizationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolarizationMode::Parallel => "parallel",
            PolarizationMode::Orthogonal => "orthogonal",
        }
    }
}

impl std::str::FromStr for PolarizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parallel" | "par" => Ok(PolarizationMode::Parallel),
            "orthogonal" | "orth" | "perpendicular" => Ok(PolarizationMode::Orthogonal),
            other => Err(Error::Parse(format!("unknown polarization mode `{other}`"))),
        }
    }
}

// Raw-rate forms. The fit explores parameter space outside the validated
// domain, so these take plain numbers.

pub(crate) fn g1_raw(tau: f64, gamma_total: f64) -> f64 {
    (-gamma_total * tau.abs()).exp()
}

pub(crate) fn g2_source_raw(tau: f64, w_p: f64, gamma_spon: f64) -> f64 {
    1.0 - (-(w_p + gamma_spon) * tau.abs()).exp()
}

pub(crate) fn g2_34_raw(
    tau: f64,
    gamma_spon: f64,
    gamma_pure: f64,
    w_p: f64,
    interference_weight: f64,
) -> f64 {
    let distinguishable = 0.5 * (g2_source_raw(tau, w_p, gamma_spon) + 1.0);
    let g1 = g1_raw(tau, 0.5 * gamma_spon + gamma_pure);
    distinguishable - interference_weight * g1 * g1
}

/// First-order coherence `e^{-γ|τ|}`.
pub fn g1(tau: f64, p: &EmitterParams) -> f64 {
    g1_raw(tau, p.gamma_total())
}

/// Intensity correlation of the source, `1 - e^{-(W_P + Γ)|τ|}`.
pub fn g2_source(tau: f64, p: &EmitterParams) -> f64 {
    g2_source_raw(tau, p.w_p, p.gamma_spon)
}

/// Cross-correlation between the two beam-splitter outputs.
///
/// The orthogonal curve is `(g2 + 1) / 2`; the parallel curve subtracts
/// `M · sin²θcos²θ/(cos⁴θ+sin⁴θ) · |g1|²`.
pub fn g2_34(
    tau: f64,
    p: &EmitterParams,
    bs: &BeamSplitterConfig,
    pol: PolarizationMode,
) -> f64 {
    let weight = match pol {
        PolarizationMode::Parallel => bs.mode_match * bs.interference_coefficient(),
        PolarizationMode::Orthogonal => 0.0,
    };
    g2_34_raw(tau, p.gamma_spon, p.gamma_pure, p.w_p, weight)
}

pub(crate) fn g2_34_finite_delay_raw(
    tau: f64,
    delta_t: f64,
    gamma_spon: f64,
    gamma_pure: f64,
    w_p: f64,
    interference_weight: f64,
) -> f64 {
    let src = |t: f64| g2_source_raw(t, w_p, gamma_spon);
    let distinguishable = 0.25 * (2.0 * src(tau) + src(tau + delta_t) + src(tau - delta_t));
    let g1 = g1_raw(tau, 0.5 * gamma_spon + gamma_pure);
    let pair_density = 0.5 * (src(delta_t - tau) + src(delta_t + tau));
    distinguishable - interference_weight * g1 * g1 * pair_density
}

/// Output cross-correlation at a finite arm delay.
///
/// Photons from different arms were emitted `delta_t ± τ` apart, so the
/// source antibunching reappears as sidelobes at `τ = ±delta_t` and the
/// interference term is weighted by the source correlation at that
/// separation. Tends to [`g2_34`] as `delta_t` grows.
pub fn g2_34_finite_delay(
    tau: f64,
    delta_t: f64,
    p: &EmitterParams,
    bs: &BeamSplitterConfig,
    pol: PolarizationMode,
) -> f64 {
    let weight = match pol {
        PolarizationMode::Parallel => bs.mode_match * bs.interference_coefficient(),
        PolarizationMode::Orthogonal => 0.0,
    };
    g2_34_finite_delay_raw(tau, delta_t, p.gamma_spon, p.gamma_pure, p.w_p, weight)
}

/// Squared overlap of two wavepackets emitted `delta_t` apart.
pub fn overlap_sq(delta_t: f64, p: &EmitterParams) -> Result<f64> {
    if !(delta_t >= 0.0) {
        return Err(Error::param(
            "delta_t",
            format!("must be >= 0, got {delta_t}"),
        ));
    }
    Ok((-2.0 * p.gamma_total() * delta_t).exp())
}

/// Coincidence reduction factor `(g⊥(0) - g∥(0)) / g⊥(0)`.
pub fn visibility(g2_orth_0: f64, g2_par_0: f64) -> Result<f64> {
    if !(g2_orth_0 > 0.0) || !g2_par_0.is_finite() {
        return Err(Error::input(format!(
            "visibility needs g2_orth(0) > 0, got {g2_orth_0}"
        )));
    }
    Ok((g2_orth_0 - g2_par_0) / g2_orth_0)
}

/// A function sampled on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(tau: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if tau.len() != values.len() {
            return Err(Error::input(format!(
                "curve has {} delays but {} values",
                tau.len(),
                values.len()
            )));
        }
        Ok(SampledCurve { tau, values })
    }

    /// `n` points evenly spaced over `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let tau = linspace(lo, hi, n);
        let values = tau.iter().map(|&t| f(t)).collect();
        SampledCurve { tau, values }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Grid step, or an error if the grid is not uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.tau.len() < 2 {
            return Ok(0.0);
        }
        let step = (self.tau[self.tau.len() - 1] - self.tau[0]) / (self.tau.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::input("curve delays must be strictly increasing"));
        }
        let tol = 1e-6 * step;
        for (i, w) in self.tau.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > tol {
                return Err(Error::input(format!(
                    "non-uniform sampling at index {i}: step {} vs {}",
                    w[1] - w[0],
                    step
                )));
            }
        }
        Ok(step)
    }

    /// Trapezoid-free integral `step * Σ values`.
    pub fn integral(&self) -> Result<f64> {
        let step = self.uniform_step()?;
        Ok(step * self.values.iter().sum::<f64>())
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// Discrete, unit-sum Gaussian kernel for the given grid step, truncated at
/// ±5σ. Index `half` is the centre tap.
pub(crate) fn gaussian_kernel(sigma: f64, step: f64) -> Vec<f64> {
    let half = (KERNEL_HALF_WIDTH_SIGMAS * sigma / step).ceil() as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| {
            let x = i as f64 * step / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Convolve with the edge value held constant beyond the grid ends.
pub(crate) fn convolve_clamped(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = values.len() as i64;
    let half = (kernel.len() / 2) as i64;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let j = (i + half - k as i64).clamp(0, n - 1);
                    w * values[j as usize]
                })
                .sum()
        })
        .collect()
}

/// Convolve a uniformly sampled curve with a unit-area Gaussian instrument
/// response of the given FWHM. `fwhm = 0` returns the input.
pub fn convolve_irf(curve: &SampledCurve, fwhm: f64) -> Result<SampledCurve> {
    if !(fwhm >= 0.0 && fwhm.is_finite()) {
        return Err(Error::param("fwhm", format!("must be >= 0, got {fwhm}")));
    }
    let step = curve.uniform_step()?;
    if fwhm == 0.0 || curve.len() < 2 {
        return Ok(curve.clone());
    }
    if step > fwhm / 4.0 * (1.0 + 1e-9) {
        return Err(Error::input(format!(
            "sampling step {step} ns is coarser than fwhm/4 = {} ns",
            fwhm / 4.0
        )));
    }
    let kernel = gaussian_kernel(fwhm / FWHM_PER_SIGMA, step);
    Ok(SampledCurve {
        tau: curve.tau.clone(),
        values: convolve_clamped(&curve.values, &kernel),
    })
}

/// Every analytic curve on one delay grid, with and without the instrument
/// response.
#[derive(Debug, Clone)]
pub struct AnalyticCurves {
    pub tau: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2_source: Vec<f64>,
    pub g2_par: Vec<f64>,
    pub g2_orth: Vec<f64>,
    pub g2_par_irf: Vec<f64>,
    pub g2_orth_irf: Vec<f64>,
}

/// Evaluate all curves on `n` points spanning `[-tau_max, tau_max]`.
///
/// The convolved columns are computed on a grid padded by the kernel half
/// width, so they are exact up to the truncation of the kernel.
pub fn analytic_curves(
    tau_max: f64,
    n: usize,
    p: &EmitterParams,
    bs: &BeamSplitterConfig,
    irf_fwhm: f64,
) -> Result<AnalyticCurves> {
    if !(tau_max > 0.0) || n < 2 {
        return Err(Error::input("analytic grid needs tau_max > 0 and >= 2 points"));
    }
    let tau = linspace(-tau_max, tau_max, n);
    let step = tau[1] - tau[0];
    let par = |t: f64| g2_34(t, p, bs, PolarizationMode::Parallel);
    let orth = |t: f64| g2_34(t, p, bs, PolarizationMode::Orthogonal);

    let (g2_par_irf, g2_orth_irf) = if irf_fwhm > 0.0 {
        // refine the grid so the kernel is resolved, then pad it
        let refine = (step / (irf_fwhm / 8.0)).ceil().max(1.0) as usize;
        let fine_step = step / refine as f64;
        let pad = (KERNEL_HALF_WIDTH_SIGMAS * irf_fwhm / FWHM_PER_SIGMA / fine_step).ceil() as usize + 1;
        let nf = (n - 1) * refine + 1 + 2 * pad;
        let lo = -tau_max - pad as f64 * fine_step;
        let fine = SampledCurve::from_fn(lo, lo + (nf - 1) as f64 * fine_step, nf, par);
        let par_c = convolve_irf(&fine, irf_fwhm)?;
        let orth_c = convolve_irf(
            &SampledCurve::from_fn(lo, lo + (nf - 1) as f64 * fine_step, nf, orth),
            irf_fwhm,
        )?;
        let pick = |c: &SampledCurve| -> Vec<f64> {
            (0..n).map(|i| c.values[pad + i * refine]).collect()
        };
        (pick(&par_c), pick(&orth_c))
    } else {
        (
            tau.iter().map(|&t| par(t)).collect(),
            tau.iter().map(|&t| orth(t)).collect(),
        )
    };

    Ok(AnalyticCurves {
        g1: tau.iter().map(|&t| g1(t, p)).collect(),
        g2_source: tau.iter().map(|&t| g2_source(t, p)).collect(),
        g2_par: tau.iter().map(|&t| par(t)).collect(),
        g2_orth: tau.iter().map(|&t| orth(t)).collect(),
        g2_par_irf,
        g2_orth_irf,
        tau,
    })
}
