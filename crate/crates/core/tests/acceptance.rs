//! End-to-end acceptance checks. Each test prints one `[criterion N] PASS|FAIL`
//! line, then asserts. Run with `cargo test --release --test acceptance -- --nocapture`.

use std::process::Command;
use std::time::Instant;

use hom_core::analysis::{
    bin_average, compare_to_curve, difference_curve, fit_hom_model, rebin, CurveComparison, FitOptions, FitParams, HomFitResult,
};
use hom_core::coherence::{
    g2_34, g2_34_finite_delay, g2_source, overlap_sq, BeamSplitterConfig, EmitterParams, PolarizationMode,
};
use hom_core::detection::{default_norm_region, normalize, CorrelationMode, DetectionConfig};
use hom_core::histogram::CorrelationHistogram;
use hom_core::interferometer::InterferometerConfig;
use hom_core::pipeline::{simulate, SimulationConfig};

const GAMMA: f64 = 1.0 / 3.4;
const DELTA_T: f64 = 4.6;

fn report(n: u32, pass: bool, detail: &str) {
    println!("[criterion {n}] {}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn experiment(w_p: f64) -> EmitterParams {
    EmitterParams::new(GAMMA, 0.2, w_p).unwrap()
}

struct Run {
    emitter: EmitterParams,
    pol: PolarizationMode,
    mode_match: f64,
    detection: DetectionConfig,
    delta_t: f64,
    pairing: bool,
    photons: f64,
    seed: u64,
}

impl Run {
    fn new(emitter: EmitterParams, pol: PolarizationMode, photons: f64, seed: u64) -> Self {
        Run {
            emitter,
            pol,
            mode_match: 0.7,
            detection: DetectionConfig {
                mode: CorrelationMode::Full,
                ..DetectionConfig::default()
            },
            delta_t: DELTA_T,
            pairing: true,
            photons,
            seed,
        }
    }

    /// Normalized histogram, merged over four replicas.
    fn histogram(&self) -> CorrelationHistogram {
        let mut ic = InterferometerConfig::experiment(self.emitter.gamma_spon);
        ic.pol_mode = self.pol;
        ic.bs.mode_match = self.mode_match;
        ic.delta_t = self.delta_t;
        ic.pairing = self.pairing;
        let replicas = 4;
        let cfg = SimulationConfig {
            emitter: self.emitter,
            interferometer: ic,
            detection: self.detection,
            duration: self.photons / self.emitter.photon_rate() / replicas as f64,
            seed: self.seed,
            replicas,
        };
        let out = simulate(&cfg, false).unwrap();
        // the baseline region is fixed by the nominal delay
        let region = default_norm_region(DELTA_T, self.emitter.gamma_spon, &self.detection).unwrap();
        normalize(&out.histogram, region).unwrap()
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn describe(c: &CurveComparison) -> String {
    format!(
        "{}/{} bins within 3 sigma ({:.1}%), mean z {:+.2}",
        c.within_3sigma,
        c.bins,
        100.0 * c.fraction_within(),
        c.mean_z
    )
}

#[test]
fn criterion_1_analytic_reference_curve() {
    let p = EmitterParams::illustrative(GAMMA);
    let bs = BeamSplitterConfig::new(std::f64::consts::FRAC_PI_4, 1.0).unwrap();
    let t = 0.2 / GAMMA;
    // independent closed-form evaluation, frozen
    let cases = [
        ("parallel(0)", g2_34(0.0, &p, &bs, PolarizationMode::Parallel), 0.0),
        ("orthogonal(0)", g2_34(0.0, &p, &bs, PolarizationMode::Orthogonal), 0.5),
        ("parallel(0.2/G)", g2_34(t, &p, &bs, PolarizationMode::Parallel), 0.628_408_866_133_492),
        ("orthogonal(0.2/G)", g2_34(t, &p, &bs, PolarizationMode::Orthogonal), 0.751_707_348_104_295_3),
    ];
    let values_ok = cases.iter().all(|(_, got, want)| (got - want).abs() < 1e-9);

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_hom")).arg("analytic").output().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let cli_ok = out.status.success() && elapsed < 1.0;

    let pass = values_ok && cli_ok;
    let detail: Vec<String> = cases.iter().map(|(n, g, _)| format!("{n}={g:.9}")).collect();
    report(
        1,
        pass,
        &format!("{}; `hom analytic` took {elapsed:.3} s", detail.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_2_overlap_and_coherence_time() {
    let p = experiment(0.5);
    let o = overlap_sq(DELTA_T, &p).unwrap();
    let t2 = p.t2();
    let pass = (o - 0.0411).abs() <= 1e-4 && (t2 - 3.0).abs() < 0.5;
    report(2, pass, &format!("overlap {o:.5} (0.0411 +/- 1e-4), T2 {t2:.4} ns (~3 ns)"));
    assert!(pass);
}

#[test]
fn criterion_3_monte_carlo_matches_analytic() {
    let illustrative = EmitterParams::illustrative(GAMMA);
    let exp = experiment(0.5);
    let mut pass = true;
    let mut lines = Vec::new();
    for (label, p, m, seed) in [("illustrative", illustrative, 1.0, 31u64), ("experiment", exp, 0.7, 32)] {
        for pol in [PolarizationMode::Parallel, PolarizationMode::Orthogonal] {
            let mut run = Run::new(p, pol, 1e6, seed + if pol == PolarizationMode::Parallel { 0 } else { 100 });
            run.mode_match = m;
            run.detection = DetectionConfig::ideal();
            let h = run.histogram();
            let bs = BeamSplitterConfig::new(std::f64::consts::FRAC_PI_4, m).unwrap();
            let c = compare_to_curve(&h, |t| g2_34(t, &p, &bs, pol), 0.5 / GAMMA).unwrap();
            let fin = compare_to_curve(&h, |t| g2_34_finite_delay(t, DELTA_T, &p, &bs, pol), 0.5 / GAMMA).unwrap();
            let ok = c.fraction_within() >= 0.95;
            pass &= ok;
            lines.push(format!(
                "{label}/{}: {} [{}]; finite-delay curve: {}",
                pol.as_str(),
                describe(&c),
                if ok { "ok" } else { "below 95%" },
                describe(&fin)
            ));
        }
    }
    report(3, pass, &lines.join(" | "));
    assert!(pass);
}

fn finite_delay_opts() -> FitOptions {
    FitOptions {
        delay: Some(DELTA_T),
        ..FitOptions::default()
    }
}

fn fit(hp: &CorrelationHistogram, ho: &CorrelationHistogram, opts: &FitOptions) -> HomFitResult {
    fit_hom_model(hp, ho, GAMMA, &DetectionConfig::default(), &FitParams::default(), opts).unwrap()
}

#[test]
fn criterion_4_measured_value_bracket() {
    let p = experiment(5.0);
    let hp = rebin(&Run::new(p, PolarizationMode::Parallel, 4e6, 41).histogram(), 2).unwrap();
    let ho = rebin(&Run::new(p, PolarizationMode::Orthogonal, 4e6, 42).histogram(), 2).unwrap();
    let v = hp.normalized_values().unwrap();
    let dip = hp
        .bin_centers
        .iter()
        .zip(&v)
        .filter(|(t, _)| t.abs() <= 1.0)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let r = fit(&hp, &ho, &finite_delay_opts());
    let large = fit(&hp, &ho, &FitOptions::default());
    let pass = (0.25..=0.55).contains(&dip) && (0.15..=0.35).contains(&r.v0_hat);
    report(
        4,
        pass,
        &format!(
            "parallel dip minimum {dip:.3} in [0.25, 0.55], v0_hat {:.3} in [0.15, 0.35] \
             (large-delay model gives v0_hat {:.3})",
            r.v0_hat, large.v0_hat
        ),
    );
    assert!(pass);
}

struct Recovery {
    gamma_pure: Vec<f64>,
    w_p: Vec<f64>,
    coincidences: u64,
}

fn recover(photons: f64, opts: &FitOptions) -> Recovery {
    let p = experiment(0.5);
    let mut out = Recovery {
        gamma_pure: Vec::new(),
        w_p: Vec::new(),
        coincidences: u64::MAX,
    };
    for seed in 0..10u64 {
        let hp = rebin(&Run::new(p, PolarizationMode::Parallel, photons, 5000 + seed).histogram(), 2).unwrap();
        let ho = rebin(&Run::new(p, PolarizationMode::Orthogonal, photons, 5500 + seed).histogram(), 2).unwrap();
        out.coincidences = out.coincidences.min(hp.total()).min(ho.total());
        let r = fit(&hp, &ho, opts);
        out.gamma_pure.push(r.gamma_pure_hat);
        out.w_p.push(r.w_p_hat);
    }
    out
}

fn within_10pct(x: &[f64], truth: f64) -> usize {
    x.iter().filter(|v| ((*v - truth) / truth).abs() <= 0.1).count()
}

#[test]
fn criterion_5_parameter_recovery() {
    let base = recover(2e6, &finite_delay_opts());
    let more = recover(8e6, &finite_delay_opts());
    let (gp_n, wp_n) = (within_10pct(&base.gamma_pure, 0.2), within_10pct(&base.w_p, 0.5));
    let (gp_m, gp_sd) = mean_sd(&base.gamma_pure);
    let (wp_m, wp_sd) = mean_sd(&base.w_p);
    let (_, gp_sd4) = mean_sd(&more.gamma_pure);
    let (_, wp_sd4) = mean_sd(&more.w_p);
    let (gp_ratio, wp_ratio) = (gp_sd / gp_sd4, wp_sd / wp_sd4);
    let pass = base.coincidences >= 100_000
        && gp_n >= 8
        && wp_n >= 8
        && (1.5..=3.0).contains(&gp_ratio)
        && (1.5..=3.0).contains(&wp_ratio);
    report(
        5,
        pass,
        &format!(
            "{} coincidences per histogram; gamma_pure {gp_m:.4} +/- {gp_sd:.4} ({gp_n}/10 within 10%), \
             W_P {wp_m:.4} +/- {wp_sd:.4} ({wp_n}/10 within 10%); spread ratio at 4x statistics \
             gamma_pure {gp_ratio:.2}, W_P {wp_ratio:.2} (accepted 1.5 to 3)",
            base.coincidences
        ),
    );

    let large = recover(2e6, &FitOptions::default());
    let (lg, _) = mean_sd(&large.gamma_pure);
    let (lw, _) = mean_sd(&large.w_p);
    println!(
        "[criterion 5] info: large-delay model on the same data gives gamma_pure {lg:.4} \
         ({}/10 within 10%), W_P {lw:.4} ({}/10 within 10%)",
        within_10pct(&large.gamma_pure, 0.2),
        within_10pct(&large.w_p, 0.5)
    );
    assert!(pass);
}

/// Most significant departure from `f` among bins within `half` of `center`.
fn max_departure_from(h: &CorrelationHistogram, center: f64, half: f64, f: impl Fn(f64) -> f64) -> f64 {
    let v = h.normalized_values().unwrap();
    let s = h.normalized_sigmas().unwrap();
    (0..h.len())
        .filter(|&i| (h.bin_centers[i] - center).abs() <= half)
        .map(|i| ((v[i] - bin_average(&f, h.bin_centers[i], h.bin_width)) / s[i]).abs())
        .fold(0.0, f64::max)
}

fn max_departure(h: &CorrelationHistogram, center: f64, half: f64) -> f64 {
    max_departure_from(h, center, half, |_| 1.0)
}

#[test]
fn criterion_6_sidelobes_at_the_arm_delay() {
    let p = experiment(0.5);
    let half = 0.3;
    let mut pass = true;
    let mut lines = Vec::new();
    for (pol, seed) in [(PolarizationMode::Parallel, 61u64), (PolarizationMode::Orthogonal, 62)] {
        let h = rebin(&Run::new(p, pol, 2e6, seed).histogram(), 4).unwrap();
        let (neg, pos) = (max_departure(&h, -DELTA_T, half), max_departure(&h, DELTA_T, half));

        let mut null = Run::new(p, pol, 2e6, seed + 10);
        null.pairing = false;
        null.delta_t = 0.0;
        let hn = rebin(&null.histogram(), 4).unwrap();
        let (nneg, npos) = (max_departure(&hn, -DELTA_T, half), max_departure(&hn, DELTA_T, half));

        let ok = neg >= 3.0 && pos >= 3.0 && nneg < 3.0 && npos < 3.0;
        pass &= ok;
        // the same null bins against the smooth central dip instead of 1
        let s = (1.0 - null.detection.background_fraction).powi(2);
        let smooth = |t: f64| s * 0.5 * (g2_source(t, &p) + 1.0) + 1.0 - s;
        let tail = max_departure_from(&hn, -DELTA_T, half, smooth).max(max_departure_from(&hn, DELTA_T, half, smooth));
        lines.push(format!(
            "{}: |z| at -/+dt {neg:.1}/{pos:.1}, without pairing at dt=0 {nneg:.1}/{npos:.1} \
             (|z| {tail:.1} against the sidelobe-free central dip)",
            pol.as_str()
        ));
    }
    report(6, pass, &lines.join(" | "));
    assert!(pass);
}

#[test]
fn criterion_7_null_difference() {
    let p = experiment(0.5);
    let limit = 10.0;
    let a = rebin(&Run::new(p, PolarizationMode::Parallel, 2e6, 71).histogram(), 7).unwrap();
    let b = rebin(&Run::new(p, PolarizationMode::Parallel, 2e6, 72).histogram(), 7).unwrap();
    let d = difference_curve(&a, &b).unwrap();
    let z: Vec<f64> = d
        .z_scores()
        .into_iter()
        .filter(|(t, _)| t.abs() <= limit)
        .map(|(_, z)| z)
        .collect();
    let worst = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let pass = !z.is_empty() && worst < 3.0;
    report(
        7,
        pass,
        &format!("{} bins with |tau| <= {limit} ns, largest |z| {worst:.2}", z.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_8_selftest_exit_code() {
    let out = Command::new(env!("CARGO_BIN_EXE_hom")).arg("selftest").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let checks = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count();
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    let pass = out.status.code() == Some(0) && checks > 0 && failed.is_empty();
    report(
        8,
        pass,
        &format!("exit code {:?}, {checks} checks, failures: {failed:?}", out.status.code()),
    );
    assert!(pass);
}
