//! Statistical properties of the emitter and the interferometer, checked
//! against closed-form expectations with generous sampling tolerances.

use hom_core::coherence::{g2_source, BeamSplitterConfig, EmitterParams, PolarizationMode};
use hom_core::emitter::{empirical_g2, simulate_emission_stream, StreamConfig};
use hom_core::interferometer::{recombine, route, Arm, InterferometerConfig};
use hom_core::rng::{stage_rng, Stage};

const GAMMA: f64 = 1.0 / 3.4;

fn stream(p: EmitterParams, photons: f64, seed: u64) -> Vec<hom_core::emitter::PhotonEvent> {
    simulate_emission_stream(&StreamConfig {
        duration: photons / p.photon_rate(),
        rng_seed: seed,
        emitter: p,
    })
    .unwrap()
}

#[test]
fn source_is_antibunched() {
    let p = EmitterParams::new(GAMMA, 0.2, 0.5).unwrap();
    let s = stream(p, 1.2e6, 11);
    assert!(s.len() >= 1_000_000, "{} photons", s.len());
    let bw = 0.02 / GAMMA;
    let h = empirical_g2(&s, bw, 10.0 / GAMMA).unwrap();
    let v = h.normalized_values().unwrap();
    let zero = h.bin_of(0.0).unwrap();
    assert!(v[zero] < 0.1, "g2(0) = {}", v[zero]);
    // a bin on the rise of the dip follows the closed form
    let i = h.bin_of(2.0).unwrap();
    let want = g2_source(h.bin_centers[i], &p);
    let sigma = h.normalized_sigmas().unwrap()[i];
    assert!((v[i] - want).abs() < 5.0 * sigma, "{} vs {want}", v[i]);
}

#[test]
fn mean_rate_matches_renewal_cycle() {
    let p = EmitterParams::new(GAMMA, 0.2, 0.5).unwrap();
    let duration = 2e6;
    let s = simulate_emission_stream(&StreamConfig {
        duration,
        rng_seed: 12,
        emitter: p,
    })
    .unwrap();
    let expect = p.photon_rate() * duration;
    // renewal counts have variance below Poisson; 5 sqrt(N) is loose
    assert!(((s.len() as f64) - expect).abs() < 5.0 * expect.sqrt(), "{} vs {expect}", s.len());
}

#[test]
fn arm_choice_is_binomial() {
    let p = EmitterParams::new(GAMMA, 0.2, 0.5).unwrap();
    let s = stream(p, 2e5, 13);
    for q in [0.5, 0.3] {
        let mut cfg = InterferometerConfig::experiment(GAMMA);
        cfg.arm_prob_long = q;
        let routed = route(&s, &cfg, &mut stage_rng(13, Stage::Routing)).unwrap();
        let n = routed.len() as f64;
        let long = routed.iter().filter(|r| r.arm == Arm::Long).count() as f64;
        let sd = (n * q * (1.0 - q)).sqrt();
        assert!((long - n * q).abs() < 5.0 * sd, "q {q}: {long} of {n}");
    }
}

#[test]
fn splitter_angle_sets_output_fraction() {
    // every photon takes the short arm and reaches detector 3 with cos²(π/3)
    let p = EmitterParams::new(GAMMA, 0.2, 0.5).unwrap();
    let s = stream(p, 2e5, 14);
    let mut cfg = InterferometerConfig::experiment(GAMMA);
    cfg.bs = BeamSplitterConfig::new(std::f64::consts::FRAC_PI_3, 0.7).unwrap();
    cfg.pol_mode = PolarizationMode::Orthogonal;
    cfg.arm_prob_long = 0.0;
    let routed = route(&s, &cfg, &mut stage_rng(14, Stage::Routing)).unwrap();
    let clicks = recombine(&routed, &cfg, &p, 1e12, &mut stage_rng(14, Stage::BeamSplitter)).unwrap();
    let n = clicks.len() as f64;
    let f3 = clicks.ch3.len() as f64 / n;
    let sd = (0.25 * 0.75 / n).sqrt();
    assert!((f3 - 0.25).abs() < 5.0 * sd, "fraction at detector 3: {f3}");
}

#[test]
fn orthogonal_outputs_are_balanced_for_any_angle() {
    let p = EmitterParams::new(GAMMA, 0.2, 0.5).unwrap();
    let s = stream(p, 2e5, 15);
    for theta in [0.0, 0.4, std::f64::consts::FRAC_PI_2] {
        let mut cfg = InterferometerConfig::experiment(GAMMA);
        cfg.bs = BeamSplitterConfig::new(theta, 1.0).unwrap();
        cfg.pol_mode = PolarizationMode::Orthogonal;
        let routed = route(&s, &cfg, &mut stage_rng(15, Stage::Routing)).unwrap();
        let clicks = recombine(&routed, &cfg, &p, 1e12, &mut stage_rng(15, Stage::BeamSplitter)).unwrap();
        assert_eq!(clicks.len(), routed.len());
        // equal arm probabilities make each detector see half the photons
        let n = clicks.len() as f64;
        let f3 = clicks.ch3.len() as f64 / n;
        assert!((f3 - 0.5).abs() < 5.0 * (0.25 / n).sqrt(), "theta {theta}: {f3}");
    }
}
