//! Rebinning, difference curves, zero-delay visibility and the joint model
//! fit of parallel and orthogonal histograms.

use nalgebra::DMatrix;

use crate::coherence::{
    convolve_clamped, g2_34_finite_delay_raw, g2_34_raw, gaussian_kernel, visibility, BeamSplitterConfig, FWHM_PER_SIGMA,
    KERNEL_HALF_WIDTH_SIGMAS,
};
use crate::detection::{normalize, DetectionConfig};
use crate::error::{Error, Result};
use crate::histogram::CorrelationHistogram;
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Sum counts in groups of `factor`. A trailing partial group is dropped and
/// flagged through `truncated`.
pub fn rebin(hist: &CorrelationHistogram, factor: usize) -> Result<CorrelationHistogram> {
    if factor < 1 {
        return Err(Error::input("rebin factor must be >= 1"));
    }
    let groups = hist.len() / factor;
    let mut out = CorrelationHistogram {
        bin_centers: (0..groups)
            .map(|g| hist.bin_centers[g * factor..(g + 1) * factor].iter().sum::<f64>() / factor as f64)
            .collect(),
        bin_width: hist.bin_width * factor as f64,
        counts: (0..groups)
            .map(|g| hist.counts[g * factor..(g + 1) * factor].iter().sum())
            .collect(),
        normalization: None,
        truncated: hist.truncated || !hist.len().is_multiple_of(factor),
    };
    if let Some(n) = hist.normalization {
        out = match n.region {
            Some(region) => normalize(&out, region)?,
            None => {
                let mut n = n;
                n.constant *= factor as f64;
                out.normalization = Some(n);
                out
            }
        };
    }
    Ok(out)
}

/// `(g⊥ - g∥) / g⊥` per bin with its propagated Poisson error.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCurve {
    pub tau: Vec<f64>,
    /// NaN where the orthogonal bin is empty.
    pub value: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DifferenceCurve {
    pub fn is_defined(&self, i: usize) -> bool {
        self.value[i].is_finite()
    }

    /// Per-bin `value / sigma`, skipping undefined bins and bins with zero
    /// error.
    pub fn z_scores(&self) -> Vec<(f64, f64)> {
        self.tau
            .iter()
            .zip(self.value.iter().zip(&self.sigma))
            .filter(|(_, (v, s))| v.is_finite() && **s > 0.0)
            .map(|(t, (v, s))| (*t, v / s))
            .collect()
    }
}

pub fn difference_curve(h_orth: &CorrelationHistogram, h_par: &CorrelationHistogram) -> Result<DifferenceCurve> {
    h_orth.check_geometry(h_par)?;
    let (Some(go), Some(gp), Some(so), Some(sp)) = (
        h_orth.normalized_values(),
        h_par.normalized_values(),
        h_orth.normalized_sigmas(),
        h_par.normalized_sigmas(),
    ) else {
        return Err(Error::input("difference curve needs two normalized histograms"));
    };
    let mut value = Vec::with_capacity(go.len());
    let mut sigma = Vec::with_capacity(go.len());
    for i in 0..go.len() {
        if go[i] == 0.0 {
            value.push(f64::NAN);
            sigma.push(f64::NAN);
            continue;
        }
        let r = gp[i] / go[i];
        value.push((go[i] - gp[i]) / go[i]);
        sigma.push(((r * so[i] / go[i]).powi(2) + (sp[i] / go[i]).powi(2)).sqrt());
    }
    Ok(DifferenceCurve {
        tau: h_orth.bin_centers.clone(),
        value,
        sigma,
    })
}

/// Visibility from the normalized values averaged over `|τ| <= window / 2`.
pub fn v0_from_histograms(h_par: &CorrelationHistogram, h_orth: &CorrelationHistogram, window: f64) -> Result<f64> {
    h_par.check_geometry(h_orth)?;
    if !(window >= h_par.bin_width) {
        return Err(Error::input(format!(
            "window {window} ns is narrower than one bin ({} ns)",
            h_par.bin_width
        )));
    }
    let (Some(p), Some(o)) = (h_par.normalized_values(), h_orth.normalized_values()) else {
        return Err(Error::input("v0 needs two normalized histograms"));
    };
    let mut sp = 0.0;
    let mut so = 0.0;
    let mut n = 0usize;
    for (i, c) in h_par.bin_centers.iter().enumerate() {
        if c.abs() <= 0.5 * window {
            sp += p[i];
            so += o[i];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::input(format!("no bin centre within |tau| <= {}", 0.5 * window)));
    }
    visibility(so / n as f64, sp / n as f64)
}

/// Agreement between a normalized histogram and a reference curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveComparison {
    pub bins: usize,
    /// Bins whose normalized value lies within 3σ of the bin-averaged curve.
    pub within_3sigma: usize,
    pub mean_z: f64,
    pub max_abs_z: f64,
}

impl CurveComparison {
    pub fn fraction_within(&self) -> f64 {
        if self.bins == 0 {
            0.0
        } else {
            self.within_3sigma as f64 / self.bins as f64
        }
    }
}

/// Mean of `f` over `[center - width/2, center + width/2]`, midpoint rule.
pub fn bin_average(f: impl Fn(f64) -> f64, center: f64, width: f64) -> f64 {
    const N: usize = 32;
    let h = width / N as f64;
    (0..N).map(|i| f(center - 0.5 * width + (i as f64 + 0.5) * h)).sum::<f64>() / N as f64
}

/// Compare bins with `|τ| <= max_abs_tau` against the bin average of `f`,
/// using Poisson errors of the counts.
pub fn compare_to_curve(
    h: &CorrelationHistogram,
    f: impl Fn(f64) -> f64,
    max_abs_tau: f64,
) -> Result<CurveComparison> {
    let (Some(v), Some(s)) = (h.normalized_values(), h.normalized_sigmas()) else {
        return Err(Error::input("comparison needs a normalized histogram"));
    };
    let mut out = CurveComparison {
        bins: 0,
        within_3sigma: 0,
        mean_z: 0.0,
        max_abs_z: 0.0,
    };
    for i in 0..h.len() {
        let c = h.bin_centers[i];
        if c.abs() > max_abs_tau {
            continue;
        }
        let expected = bin_average(&f, c, h.bin_width);
        // an empty bin still carries the error of a single count
        let sigma = s[i].max(1.0 / h.normalization.map_or(1.0, |n| n.constant));
        let z = (v[i] - expected) / sigma;
        out.bins += 1;
        if z.abs() < 3.0 {
            out.within_3sigma += 1;
        }
        out.mean_z += z;
        out.max_abs_z = out.max_abs_z.max(z.abs());
    }
    if out.bins == 0 {
        return Err(Error::input(format!("no bins within |tau| <= {max_abs_tau}")));
    }
    out.mean_z /= out.bins as f64;
    Ok(out)
}

/// Free parameters of the histogram model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub gamma_pure: f64,
    pub w_p: f64,
    pub mode_match: f64,
    /// Fraction of clicks that are uncorrelated background.
    pub background: f64,
}

impl FitParams {
    fn to_vec(self) -> [f64; 4] {
        [self.gamma_pure, self.w_p, self.mode_match, self.background]
    }

    fn from_slice(x: &[f64]) -> Self {
        FitParams {
            gamma_pure: x[0],
            w_p: x[1],
            mode_match: x[2],
            background: x[3],
        }
    }

    fn is_physical(&self) -> bool {
        self.gamma_pure >= 0.0
            && self.w_p > 0.0
            && (0.0..=1.0).contains(&self.mode_match)
            && (0.0..1.0).contains(&self.background)
    }
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            gamma_pure: 0.3,
            w_p: 1.0,
            mode_match: 0.5,
            background: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Bins with `|τ|` up to this value enter the fit, ns.
    pub window: f64,
    /// Splitter angle the data were taken at.
    pub theta: f64,
    /// Visibility averaging window, ns. `None` uses one IRF FWHM.
    pub v0_window: Option<f64>,
    /// Arm delay for the finite-delay model, ns. `None` fits the large-delay
    /// form.
    pub delay: Option<f64>,
    pub optimizer: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            window: 2.3,
            theta: std::f64::consts::FRAC_PI_4,
            v0_window: None,
            delay: None,
            optimizer: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomFitResult {
    pub gamma_pure_hat: f64,
    pub w_p_hat: f64,
    pub contrast_hat: f64,
    pub background_hat: f64,
    pub t2_hat: f64,
    pub v0_hat: f64,
    pub stderr_gamma_pure: f64,
    pub stderr_w_p: f64,
    pub stderr_contrast: f64,
    pub stderr_background: f64,
    pub rss: f64,
    pub converged: bool,
    pub physical: bool,
    pub evaluations: usize,
}

/// Model of the measured, normalized histograms on a set of bins.
struct HistogramModel {
    gamma_spon: f64,
    interference: f64,
    delay: Option<f64>,
    /// Sub-samples per bin.
    sub: usize,
    /// Fine grid, padded by the kernel half width on both sides.
    fine_tau: Vec<f64>,
    pad: usize,
    kernel: Option<Vec<f64>>,
    n_bins: usize,
}

impl HistogramModel {
    fn new(
        first_edge: f64,
        bin_width: f64,
        n_bins: usize,
        gamma_spon: f64,
        theta: f64,
        irf_fwhm: f64,
        delay: Option<f64>,
    ) -> Result<Self> {
        let sub = if irf_fwhm > 0.0 {
            (bin_width / (irf_fwhm / 8.0)).ceil().max(4.0) as usize
        } else {
            8
        };
        let step = bin_width / sub as f64;
        let (kernel, pad) = if irf_fwhm > 0.0 {
            let sigma = irf_fwhm / FWHM_PER_SIGMA;
            let k = gaussian_kernel(sigma, step);
            let pad = (KERNEL_HALF_WIDTH_SIGMAS * sigma / step).ceil() as usize + 1;
            (Some(k), pad)
        } else {
            (None, 0)
        };
        let n_fine = n_bins * sub + 2 * pad;
        let fine_tau = (0..n_fine)
            .map(|i| first_edge + (i as f64 - pad as f64 + 0.5) * step)
            .collect();
        let bs = BeamSplitterConfig::new(theta, 1.0)?;
        Ok(HistogramModel {
            gamma_spon,
            interference: bs.interference_coefficient(),
            delay,
            sub,
            fine_tau,
            pad,
            kernel,
            n_bins,
        })
    }

    fn measured(&self, p: &FitParams, parallel: bool) -> Vec<f64> {
        let weight = if parallel { p.mode_match * self.interference } else { 0.0 };
        let raw: Vec<f64> = self
            .fine_tau
            .iter()
            .map(|&t| match self.delay {
                Some(d) => g2_34_finite_delay_raw(t, d, self.gamma_spon, p.gamma_pure, p.w_p, weight),
                None => g2_34_raw(t, self.gamma_spon, p.gamma_pure, p.w_p, weight),
            })
            .collect();
        let smooth = match &self.kernel {
            Some(k) => convolve_clamped(&raw, k),
            None => raw,
        };
        let s = (1.0 - p.background).powi(2);
        smooth.iter().map(|g| s * g + 1.0 - s).collect()
    }

    /// Bin averages of the measured curve.
    fn binned(&self, p: &FitParams, parallel: bool) -> Vec<f64> {
        let fine = self.measured(p, parallel);
        (0..self.n_bins)
            .map(|b| {
                let lo = self.pad + b * self.sub;
                fine[lo..lo + self.sub].iter().sum::<f64>() / self.sub as f64
            })
            .collect()
    }
}

/// Measured-curve value averaged over `|τ| <= window / 2`.
fn model_window_average(
    gamma_spon: f64,
    opts: &FitOptions,
    irf_fwhm: f64,
    p: &FitParams,
    window: f64,
    parallel: bool,
) -> Result<f64> {
    let width = window.max(1e-6);
    let m = HistogramModel::new(-0.5 * width, width, 1, gamma_spon, opts.theta, irf_fwhm, opts.delay)?;
    Ok(m.binned(p, parallel)[0])
}

/// Jointly fit normalized parallel and orthogonal histograms.
///
/// Each histogram is modelled as `(1-f)² · IRF ⊛ g2_34 + 1 - (1-f)²`, bin
/// averaged, and compared with the counts scaled by the histogram's own
/// normalization constant. Residuals are weighted by `1 / max(counts, 1)`.
pub fn fit_hom_model(
    h_par: &CorrelationHistogram,
    h_orth: &CorrelationHistogram,
    gamma_spon: f64,
    det: &DetectionConfig,
    init: &FitParams,
    opts: &FitOptions,
) -> Result<HomFitResult> {
    h_par.check_geometry(h_orth)?;
    if !(gamma_spon > 0.0) {
        return Err(Error::param("gamma_spon", format!("must be > 0, got {gamma_spon}")));
    }
    let (Some(np), Some(no)) = (h_par.normalization, h_orth.normalization) else {
        return Err(Error::input("fit needs two normalized histograms"));
    };
    let idx: Vec<usize> = (0..h_par.len())
        .filter(|&i| h_par.bin_centers[i].abs() <= opts.window)
        .collect();
    if idx.len() < 5 {
        return Err(Error::input(format!("only {} bins inside the fit window", idx.len())));
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let n_bins = last - first + 1;
    let bw = h_par.bin_width;
    let first_edge = h_par.bin_centers[first] - 0.5 * bw;
    let model = HistogramModel::new(
        first_edge,
        bw,
        n_bins,
        gamma_spon,
        opts.theta,
        det.irf_fwhm_pair,
        opts.delay,
    )?;

    let cp: Vec<f64> = h_par.counts[first..=last].iter().map(|&c| c as f64).collect();
    let co: Vec<f64> = h_orth.counts[first..=last].iter().map(|&c| c as f64).collect();

    let chi2 = |p: &FitParams| -> f64 {
        let mp = model.binned(p, true);
        let mo = model.binned(p, false);
        let mut s = 0.0;
        for i in 0..n_bins {
            s += (cp[i] - np.constant * mp[i]).powi(2) / cp[i].max(1.0);
            s += (co[i] - no.constant * mo[i]).powi(2) / co[i].max(1.0);
        }
        s
    };
    // Outside the physical domain the model is evaluated at the nearest
    // physical point and the distance is penalized.
    let objective = |x: &[f64]| -> f64 {
        let raw = FitParams::from_slice(x);
        let clamped = clamp_physical(&raw);
        let dist2: f64 = raw
            .to_vec()
            .iter()
            .zip(clamped.to_vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let c = chi2(&clamped);
        c + dist2 * (1e3 * (1.0 + c))
    };

    let x0 = init.to_vec();
    let step_of = |x: &[f64; 4]| -> [f64; 4] {
        [
            0.2 * x[0].abs().max(0.02),
            0.2 * x[1].abs().max(0.05),
            0.1,
            0.02,
        ]
    };
    let jitters: [[f64; 4]; 3] = [[1.0, 1.0, 1.0, 1.0], [1.3, 0.7, 0.9, 1.5], [0.7, 1.4, 1.1, 0.5]];
    let mut best: Option<crate::optimize::Minimum> = None;
    let mut evaluations = 0;
    for j in &jitters {
        let mut start = [0.0; 4];
        for k in 0..4 {
            start[k] = x0[k] * j[k];
        }
        start[2] = start[2].clamp(0.0, 1.0);
        let m = nelder_mead(objective, &start, &step_of(&start), &opts.optimizer);
        evaluations += m.evals;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    // polish from the best point with a fresh simplex
    let b = best.expect("at least one start");
    let bx: [f64; 4] = [b.x[0], b.x[1], b.x[2], b.x[3]];
    let polished = nelder_mead(objective, &bx, &step_of(&bx).map(|s| 0.1 * s), &opts.optimizer);
    evaluations += polished.evals;
    let best = if polished.value <= b.value { polished } else { b };

    // The penalty lets the simplex sit marginally outside the domain when
    // the optimum is on a boundary; report the nearest physical point and
    // flag optima that are clearly outside.
    let raw = FitParams::from_slice(&best.x);
    let p = clamp_physical(&raw);
    let physical = raw
        .to_vec()
        .iter()
        .zip(p.to_vec())
        .all(|(a, b)| (a - b).abs() <= 1e-3)
        && p.is_physical();
    let stderr = standard_errors(&objective, &best.x);
    let v0_window = opts.v0_window.unwrap_or(det.irf_fwhm_pair);
    let v0_hat = if physical {
        let par = model_window_average(gamma_spon, opts, det.irf_fwhm_pair, &p, v0_window, true)?;
        let orth = model_window_average(gamma_spon, opts, det.irf_fwhm_pair, &p, v0_window, false)?;
        visibility(orth, par).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };

    Ok(HomFitResult {
        gamma_pure_hat: p.gamma_pure,
        w_p_hat: p.w_p,
        contrast_hat: p.mode_match,
        background_hat: p.background,
        t2_hat: 1.0 / (0.5 * gamma_spon + p.gamma_pure),
        v0_hat,
        stderr_gamma_pure: stderr[0],
        stderr_w_p: stderr[1],
        stderr_contrast: stderr[2],
        stderr_background: stderr[3],
        rss: chi2(&p),
        converged: best.converged,
        physical,
        evaluations,
    })
}

fn clamp_physical(p: &FitParams) -> FitParams {
    FitParams {
        gamma_pure: p.gamma_pure.max(0.0),
        w_p: p.w_p.max(1e-6),
        mode_match: p.mode_match.clamp(0.0, 1.0),
        background: p.background.clamp(0.0, 0.99),
    }
}

/// Standard errors from the curvature of a chi-square-like objective:
/// `cov = 2 H⁻¹`.
fn standard_errors(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let f0 = f(x);
    let at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in d {
            y[i] += s;
        }
        f(&y)
    };
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let d2 = (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (h[i] * h[i]);
        hess[(i, i)] = d2;
        for j in 0..i {
            let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    match hess.try_inverse() {
        Some(inv) => (0..n)
            .map(|i| {
                let v = 2.0 * inv[(i, i)];
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; n],
    }
}

/// Noise-free histogram of the fit model, for self-consistency checks and
/// synthetic data. `scale` is the count level of the baseline.
pub fn model_histogram(
    geometry: &CorrelationHistogram,
    gamma_spon: f64,
    irf_fwhm: f64,
    p: &FitParams,
    opts: &FitOptions,
    parallel: bool,
    scale: f64,
) -> Result<CorrelationHistogram> {
    let m = HistogramModel::new(
        geometry.tau_min(),
        geometry.bin_width,
        geometry.len(),
        gamma_spon,
        opts.theta,
        irf_fwhm,
        opts.delay,
    )?;
    let mut h = geometry.clone();
    h.counts = m.binned(p, parallel).iter().map(|v| (v * scale).round() as u64).collect();
    h.normalization = Some(crate::histogram::Normalization {
        region: None,
        constant: scale,
    });
    Ok(h)
}
