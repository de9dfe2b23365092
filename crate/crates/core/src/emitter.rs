//! Photon emission of a single incoherently pumped molecule, simulated as a
//! renewal process: pump, vibronic relaxation, then spontaneous decay, each
//! an independent exponential delay.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::coherence::{EmitterParams, VibronicRelaxation};
use crate::error::{Error, Result};
use crate::histogram::{CorrelationHistogram, Normalization};
use crate::rng::{stage_rng, Stage};

/// One emitted photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEvent {
    pub photon_id: u64,
    /// Start of the wavepacket: the instant the emitting level is populated.
    pub emission_time: f64,
    /// Radiative delay from `emission_time` until the photon is registered.
    /// Drawn from `Exp(gamma_spon)` as part of the renewal cycle, so the next
    /// wavepacket of the same emitter never starts before this one ends.
    pub decay: f64,
}

impl PhotonEvent {
    pub fn end_time(&self) -> f64 {
        self.emission_time + self.decay
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Length of the simulated window, ns.
    pub duration: f64,
    pub rng_seed: u64,
    pub emitter: EmitterParams,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::param(
                "duration",
                format!("must be finite and > 0, got {}", self.duration),
            ));
        }
        self.emitter.validate()
    }
}

/// Generate the emission stream for `cfg`. Deterministic in `rng_seed`.
pub fn simulate_emission_stream(cfg: &StreamConfig) -> Result<Vec<PhotonEvent>> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.rng_seed, Stage::Emitter);
    Ok(emission_stream_with(cfg, &mut rng))
}

pub(crate) fn emission_stream_with<R: Rng + ?Sized>(
    cfg: &StreamConfig,
    rng: &mut R,
) -> Vec<PhotonEvent> {
    let p = &cfg.emitter;
    let pump = Exp::new(p.w_p).expect("validated rate");
    let decay = Exp::new(p.gamma_spon).expect("validated rate");
    let vib = match p.gamma_vib {
        VibronicRelaxation::Instantaneous => None,
        VibronicRelaxation::Rate(r) => Some(Exp::new(r).expect("validated rate")),
    };

    let expected = (cfg.duration * p.photon_rate() * 1.05) as usize + 16;
    let mut events = Vec::with_capacity(expected);
    // ground state at t = 0
    let mut t = 0.0;
    loop {
        let mut start = t + pump.sample(rng);
        if let Some(v) = &vib {
            start += v.sample(rng);
        }
        if start >= cfg.duration {
            break;
        }
        let d = decay.sample(rng);
        events.push(PhotonEvent {
            photon_id: events.len() as u64,
            emission_time: start,
            decay: d,
        });
        t = start + d;
    }
    events
}

/// Brute-force pair-correlation histogram of one stream.
///
/// Every ordered pair with `|Δt| < max_tau` is counted into bins of width
/// `bin_width` centred on multiples of the bin width. The result is
/// normalized by the uncorrelated expectation `N² · bin_width / T`, with `T`
/// the span of the stream.
pub fn empirical_g2(
    stream: &[PhotonEvent],
    bin_width: f64,
    max_tau: f64,
) -> Result<CorrelationHistogram> {
    let times: Vec<f64> = stream.iter().map(|e| e.emission_time).collect();
    empirical_g2_times(&times, bin_width, max_tau)
}

pub(crate) fn empirical_g2_times(
    times: &[f64],
    bin_width: f64,
    max_tau: f64,
) -> Result<CorrelationHistogram> {
    if !(bin_width > 0.0) || !(max_tau > 0.0) {
        return Err(Error::input("empirical_g2 needs bin_width > 0 and max_tau > 0"));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::input(format!("stream not sorted at index {}", i + 1)));
    }
    let half = (max_tau / bin_width).floor() as usize;
    let n_bins = 2 * half + 1;
    let mut hist = CorrelationHistogram::with_edges(
        -(half as f64 + 0.5) * bin_width,
        bin_width,
        n_bins,
    );

    for (i, &ti) in times.iter().enumerate() {
        for &tj in &times[i + 1..] {
            let d = tj - ti;
            if d >= max_tau {
                break;
            }
            let k = (d / bin_width).round() as usize;
            if k <= half {
                hist.counts[half + k] += 1;
                hist.counts[half - k] += 1;
            }
        }
    }

    let n = times.len() as f64;
    let span = match (times.first(), times.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => 0.0,
    };
    if span > 0.0 {
        hist.normalization = Some(Normalization {
            region: None,
            constant: n * n * bin_width / span,
        });
    }
    Ok(hist)
}
