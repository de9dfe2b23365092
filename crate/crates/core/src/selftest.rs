//! Built-in oracle and invariant checks behind `hom selftest`.

use std::f64::consts::FRAC_PI_4;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;

use crate::analysis::{compare_to_curve, difference_curve, fit_hom_model, model_histogram, rebin, FitOptions, FitParams};
use crate::coherence::{g2_34, g2_34_finite_delay, overlap_sq, BeamSplitterConfig, EmitterParams, PolarizationMode};
use crate::detection::{default_norm_region, normalize, split_channels, tac_mca_histogram, CorrelationMode, DetectionConfig};
use crate::error::Result;
use crate::histogram::CorrelationHistogram;
use crate::interferometer::{coincidence_probability, Arm, InterferometerConfig, Polarization, RoutedPhoton};
use crate::io::{read_histogram, write_histogram};
use crate::pipeline::{run_replica, simulate, SimulationConfig};
use crate::rng::{stage_rng, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Fewer photons and wider tolerances.
    pub quick: bool,
    /// Flip the sign of the interference term in the reference curve.
    pub inject_fault: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: 20_240_601,
            quick: false,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &'static str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check { name, passed, detail });
    }
}

const GAMMA_EXP: f64 = 1.0 / 3.4;

fn experiment() -> EmitterParams {
    EmitterParams::new(GAMMA_EXP, 0.2, 0.5).expect("valid constants")
}

fn small_sim(seed: u64, pol: PolarizationMode, mode_match: f64, duration: f64) -> SimulationConfig {
    let emitter = experiment();
    let mut interferometer = InterferometerConfig::experiment(GAMMA_EXP);
    interferometer.pol_mode = pol;
    interferometer.bs.mode_match = mode_match;
    SimulationConfig {
        emitter,
        interferometer,
        detection: DetectionConfig::default(),
        duration,
        seed,
        replicas: 2,
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let mut r = SelftestReport::default();
    r.push("analytic_reference_values", analytic_reference_values());
    r.push("overlap_and_coherence_time", overlap_and_coherence_time());
    r.push("coincidence_probability_bounds", pc_bounds(opts.seed));
    let photons = if opts.quick { 4e5 } else { 2e6 };
    let illustrative = EmitterParams::illustrative(GAMMA_EXP);
    for (name, p, m) in [
        ("mc_matches_analytic_illustrative", illustrative, 1.0),
        ("mc_matches_analytic_experiment", experiment(), 0.7),
    ] {
        r.push(name, mc_oracle(opts, p, m, photons));
    }
    r.push("determinism", determinism(opts.seed));
    r.push("tac_count_conservation", tac_conservation(opts.seed));
    r.push("orthogonal_equals_zero_contrast", orthogonal_is_zero_contrast(opts.seed));
    r.push("normalization_baseline", normalization_baseline(opts.seed));
    r.push("histogram_merge_associative", merge_associative(opts.seed));
    r.push("histogram_round_trip", round_trip(opts.seed));
    r.push("rebin_normalize_commute", rebin_commutes(opts.seed));
    r.push("difference_self_zero", self_difference(opts.seed));
    r.push("fit_self_consistency", fit_self_consistency());
    r
}

fn analytic_reference_values() -> Result<(bool, String)> {
    let p = EmitterParams::illustrative(GAMMA_EXP);
    let bs = BeamSplitterConfig::new(FRAC_PI_4, 1.0)?;
    let t = 0.2 / GAMMA_EXP;
    let got = [
        g2_34(0.0, &p, &bs, PolarizationMode::Parallel),
        g2_34(0.0, &p, &bs, PolarizationMode::Orthogonal),
        g2_34(t, &p, &bs, PolarizationMode::Parallel),
        g2_34(t, &p, &bs, PolarizationMode::Orthogonal),
    ];
    let want = [0.0, 0.5, 0.628_408_866_133_492, 0.751_707_348_104_295_2];
    let ok = got.iter().zip(&want).all(|(g, w)| (g - w).abs() < 1e-9);
    let symmetric = [-2.0, -0.3, 0.7]
        .iter()
        .all(|&t| g2_34(t, &p, &bs, PolarizationMode::Parallel) == g2_34(-t, &p, &bs, PolarizationMode::Parallel));
    Ok((ok && symmetric, format!("{got:?}")))
}

fn overlap_and_coherence_time() -> Result<(bool, String)> {
    let p = experiment();
    let o = overlap_sq(4.6, &p)?;
    let t2 = p.t2();
    let ok = (o - 0.041_050_955_105_579_22).abs() < 1e-12 && (t2 - 2.881_355_932_203_39).abs() < 1e-9;
    Ok((ok, format!("overlap {o:.6}, T2 {t2:.6} ns")))
}

fn pc_bounds(seed: u64) -> Result<(bool, String)> {
    let mut rng = stage_rng(seed, Stage::Routing);
    let p = experiment();
    let mut worst = 0.0f64;
    for _ in 0..20_000 {
        let theta = rng.gen::<f64>() * std::f64::consts::FRAC_PI_2;
        let m = rng.gen::<f64>();
        let mut cfg = InterferometerConfig::experiment(GAMMA_EXP);
        cfg.bs = BeamSplitterConfig::new(theta, m)?;
        let mk = |arrival: f64, decay: f64, arm| RoutedPhoton {
            photon_id: 0,
            arrival_time: arrival,
            arm,
            polarization: Polarization::H,
            decay,
        };
        let a = mk(rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 5.0, Arm::Short);
        let b = mk(rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 5.0, Arm::Long);
        let pc = coincidence_probability(&a, &b, &cfg, &p)?;
        let (c2, s2) = (cfg.bs.transmission(), cfg.bs.reflection());
        let hi = c2 * c2 + s2 * s2;
        let lo = hi - 2.0 * c2 * s2;
        let excess = (lo - pc).max(pc - hi).max(0.0);
        worst = worst.max(excess);
    }
    Ok((worst <= 1e-12, format!("largest excursion {worst:e}")))
}

fn mc_oracle(opts: &SelftestOptions, p: EmitterParams, m: f64, photons: f64) -> Result<(bool, String)> {
    let mut details = Vec::new();
    let mut ok = true;
    for pol in [PolarizationMode::Parallel, PolarizationMode::Orthogonal] {
        let mut interferometer = InterferometerConfig::experiment(p.gamma_spon);
        interferometer.pol_mode = pol;
        interferometer.bs.mode_match = m;
        let replicas = 4;
        let cfg = SimulationConfig {
            emitter: p,
            interferometer,
            detection: DetectionConfig::ideal(),
            duration: photons / p.photon_rate() / replicas as f64,
            seed: opts.seed,
            replicas,
        };
        let out = simulate(&cfg, false)?;
        let region = default_norm_region(interferometer.delta_t, p.gamma_spon, &cfg.detection)?;
        let h = normalize(&out.histogram, region)?;
        let bs = interferometer.bs;
        let dt = interferometer.delta_t;
        let reference = |t: f64| {
            let orth = g2_34_finite_delay(t, dt, &p, &bs, PolarizationMode::Orthogonal);
            let val = g2_34_finite_delay(t, dt, &p, &bs, pol);
            if opts.inject_fault {
                2.0 * orth - val
            } else {
                val
            }
        };
        let c = compare_to_curve(&h, reference, 0.5 / p.gamma_spon)?;
        let need = if opts.quick { 0.9 } else { 0.95 };
        ok &= c.fraction_within() >= need;
        details.push(format!(
            "{}: {}/{} bins within 3 sigma, mean z {:+.2}",
            pol.as_str(),
            c.within_3sigma,
            c.bins,
            c.mean_z
        ));
    }
    Ok((ok, details.join("; ")))
}

fn determinism(seed: u64) -> Result<(bool, String)> {
    let cfg = small_sim(seed, PolarizationMode::Parallel, 0.7, 5e4);
    let a = simulate(&cfg, true)?;
    let b = simulate(&cfg, true)?;
    Ok((a == b, format!("{} events, {} pairs", a.events.len(), a.histogram.total())))
}

fn tac_conservation(seed: u64) -> Result<(bool, String)> {
    let mut cfg = small_sim(seed, PolarizationMode::Parallel, 0.7, 2e5);
    cfg.detection.mode = CorrelationMode::Tac;
    let out = run_replica(&cfg, 0)?;
    let (starts, _) = split_channels(&out.events);
    let h = tac_mca_histogram(&out.events, &cfg.detection)?;
    let ok = h.total() <= starts.len() as u64 && h.total() == out.histogram.total() && h.total() > 0;
    Ok((ok, format!("{} pairs from {} starts", h.total(), starts.len())))
}

fn orthogonal_is_zero_contrast(seed: u64) -> Result<(bool, String)> {
    let orth = simulate(&small_sim(seed, PolarizationMode::Orthogonal, 0.7, 5e4), false)?;
    let flat = simulate(&small_sim(seed, PolarizationMode::Parallel, 0.0, 5e4), false)?;
    Ok((
        orth.histogram.counts == flat.histogram.counts,
        format!("{} pairs", orth.histogram.total()),
    ))
}

fn normalization_baseline(seed: u64) -> Result<(bool, String)> {
    let cfg = small_sim(seed, PolarizationMode::Orthogonal, 0.7, 3e5);
    let out = simulate(&cfg, false)?;
    let region = default_norm_region(4.6, GAMMA_EXP, &cfg.detection)?;
    let h = normalize(&out.histogram, region)?;
    let v = h.normalized_values().unwrap_or_default();
    let (mut s, mut n) = (0.0, 0usize);
    for (c, x) in h.bin_centers.iter().zip(&v) {
        if (region.0..=region.1).contains(&c.abs()) {
            s += x;
            n += 1;
        }
    }
    let mean = s / n.max(1) as f64;
    Ok(((mean - 1.0).abs() < 1e-12, format!("baseline mean {mean}")))
}

fn random_hist(rng: &mut impl Rng) -> CorrelationHistogram {
    let mut h = CorrelationHistogram::with_edges(-3.0, 0.25, 24);
    h.counts.iter_mut().for_each(|c| *c = rng.gen_range(1..10_000));
    h
}

fn merge_associative(seed: u64) -> Result<(bool, String)> {
    let mut rng = stage_rng(seed, Stage::Detector);
    let (a, b, c) = (random_hist(&mut rng), random_hist(&mut rng), random_hist(&mut rng));
    let mut ab_c = a.clone();
    ab_c.merge(&b)?;
    ab_c.merge(&c)?;
    let mut bc = b.clone();
    bc.merge(&c)?;
    let mut a_bc = a.clone();
    a_bc.merge(&bc)?;
    let mut ba = b.clone();
    ba.merge(&a)?;
    let mut ab = a.clone();
    ab.merge(&b)?;
    Ok((ab_c.counts == a_bc.counts && ab.counts == ba.counts, String::new()))
}

fn round_trip(seed: u64) -> Result<(bool, String)> {
    let mut rng = stage_rng(seed, Stage::Detector);
    let h = normalize(&random_hist(&mut rng), (1.0, 3.0))?;
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
    let path = std::env::temp_dir().join(format!("hom-selftest-{}-{nanos}.csv", std::process::id()));
    write_histogram(&path, &h)?;
    let back = read_histogram(&path);
    let _ = std::fs::remove_file(&path);
    Ok((back? == h, String::new()))
}

fn rebin_commutes(seed: u64) -> Result<(bool, String)> {
    let mut rng = stage_rng(seed, Stage::Emitter);
    let h = random_hist(&mut rng);
    let region = (1.0, 3.0);
    let a = rebin(&normalize(&h, region)?, 2)?;
    let b = normalize(&rebin(&h, 2)?, region)?;
    let worst = a
        .normalized_values()
        .unwrap_or_default()
        .iter()
        .zip(b.normalized_values().unwrap_or_default())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-12, format!("max difference {worst:e}")))
}

fn self_difference(seed: u64) -> Result<(bool, String)> {
    let mut rng = stage_rng(seed, Stage::BeamSplitter);
    let h = normalize(&random_hist(&mut rng), (1.0, 3.0))?;
    let d = difference_curve(&h, &h)?;
    Ok((d.value.iter().all(|&v| v == 0.0), String::new()))
}

fn fit_self_consistency() -> Result<(bool, String)> {
    let truth = FitParams {
        gamma_pure: 0.2,
        w_p: 0.5,
        mode_match: 0.7,
        background: 0.05,
    };
    let det = DetectionConfig::default();
    let opts = FitOptions::default();
    let geom = CorrelationHistogram::with_edges(-6.0, 0.1, 120);
    let hp = model_histogram(&geom, GAMMA_EXP, det.irf_fwhm_pair, &truth, &opts, true, 1e9)?;
    let ho = model_histogram(&geom, GAMMA_EXP, det.irf_fwhm_pair, &truth, &opts, false, 1e9)?;
    let r = fit_hom_model(&hp, &ho, GAMMA_EXP, &det, &FitParams::default(), &opts)?;
    let rel = [
        (r.gamma_pure_hat - 0.2) / 0.2,
        (r.w_p_hat - 0.5) / 0.5,
        (r.contrast_hat - 0.7) / 0.7,
        (r.background_hat - 0.05) / 0.05,
    ];
    let worst = rel.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok((r.converged && worst < 1e-4, format!("largest relative error {worst:e}")))
}
