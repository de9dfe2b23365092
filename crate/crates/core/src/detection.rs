//! Detectors, start-stop electronics and histogramming.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::coherence::FWHM_PER_SIGMA;
use crate::error::{Error, Result};
use crate::histogram::{CorrelationHistogram, Normalization};
use crate::interferometer::{ClickStreams, Detector};

/// How channel-3/channel-4 pairs are turned into delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMode {
    /// Single-stop time-to-amplitude converter: a start is consumed by its
    /// first stop and a new start replaces a pending one.
    Tac,
    /// Every (3, 4) pair whose delay falls inside the range.
    Full,
}

impl CorrelationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrelationMode::Tac => "tac",
            CorrelationMode::Full => "full",
        }
    }
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tac" => Ok(CorrelationMode::Tac),
            "full" => Ok(CorrelationMode::Full),
            other => Err(Error::Parse(format!("unknown correlation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    /// Timing resolution of a detector pair, FWHM in ns. Each detector gets
    /// `irf_fwhm_pair / √2`.
    pub irf_fwhm_pair: f64,
    /// Detection efficiency of each detector.
    pub efficiency: f64,
    /// Dead time of each detector, ns.
    pub dead_time: f64,
    /// Fraction of all recorded clicks that are uncorrelated background.
    pub background_fraction: f64,
    /// Delay added to the stop channel, ns.
    pub electronic_delay: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub bin_width: f64,
    pub mode: CorrelationMode,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            irf_fwhm_pair: 0.42,
            efficiency: 1.0,
            dead_time: 0.0,
            background_fraction: 0.05,
            electronic_delay: 42.0,
            tau_min: -42.0,
            tau_max: 42.0,
            bin_width: 0.05,
            mode: CorrelationMode::Tac,
        }
    }
}

impl DetectionConfig {
    /// Perfect detectors: no jitter, loss, dead time or background, with all
    /// pairs correlated.
    pub fn ideal() -> Self {
        DetectionConfig {
            irf_fwhm_pair: 0.0,
            background_fraction: 0.0,
            mode: CorrelationMode::Full,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.irf_fwhm_pair >= 0.0 && self.irf_fwhm_pair.is_finite()) {
            return Err(Error::param("irf_fwhm_pair", format!("must be >= 0, got {}", self.irf_fwhm_pair)));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param("efficiency", format!("must lie in [0, 1], got {}", self.efficiency)));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::param("dead_time", format!("must be >= 0, got {}", self.dead_time)));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::param(
                "background_fraction",
                format!("must lie in [0, 1), got {}", self.background_fraction),
            ));
        }
        if !self.electronic_delay.is_finite() {
            return Err(Error::param("electronic_delay", "must be finite"));
        }
        if !(self.tau_min < self.tau_max) || !self.tau_min.is_finite() || !self.tau_max.is_finite() {
            return Err(Error::param(
                "mca_range",
                format!("need tau_min < tau_max, got ({}, {})", self.tau_min, self.tau_max),
            ));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::param("bin_width", format!("must be > 0, got {}", self.bin_width)));
        }
        let n = (self.tau_max - self.tau_min) / self.bin_width;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::param(
                "bin_width",
                format!("{} does not divide the range ({}, {})", self.bin_width, self.tau_min, self.tau_max),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        ((self.tau_max - self.tau_min) / self.bin_width).round() as usize
    }

    /// Empty histogram with this configuration's geometry.
    pub fn empty_histogram(&self) -> CorrelationHistogram {
        CorrelationHistogram::with_edges(self.tau_min, self.bin_width, self.n_bins())
    }

    fn detector_sigma(&self) -> f64 {
        self.irf_fwhm_pair / std::f64::consts::SQRT_2 / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub channel: Detector,
    pub time: f64,
}

/// Turn ideal click times into recorded detector events, sorted by time.
pub fn apply_detector<R: Rng + ?Sized>(
    clicks: &ClickStreams,
    cfg: &DetectionConfig,
    rng: &mut R,
) -> Result<Vec<DetectionEvent>> {
    cfg.validate()?;
    for (name, ch) in [("3", &clicks.ch3), ("4", &clicks.ch4)] {
        if let Some(i) = ch.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::input(format!("channel {name} not sorted at index {}", i + 1)));
        }
    }

    let keep = |times: &[f64], rng: &mut R| -> Vec<f64> {
        if cfg.efficiency >= 1.0 {
            times.to_vec()
        } else {
            times.iter().copied().filter(|_| rng.gen::<f64>() < cfg.efficiency).collect()
        }
    };
    let mut ch3 = keep(&clicks.ch3, rng);
    let mut ch4 = keep(&clicks.ch4, rng);

    let f = cfg.background_fraction;
    if f > 0.0 && clicks.duration > 0.0 {
        let signal = (ch3.len() + ch4.len()) as f64;
        let mean = signal * f / (1.0 - f);
        if mean > 0.0 {
            let n = Poisson::new(mean).map_err(|e| Error::input(e.to_string()))?.sample(rng) as u64;
            for _ in 0..n {
                let t = rng.gen::<f64>() * clicks.duration;
                if rng.gen::<bool>() {
                    ch3.push(t);
                } else {
                    ch4.push(t);
                }
            }
        }
    }

    let sigma = cfg.detector_sigma();
    if sigma > 0.0 {
        let jitter = Normal::new(0.0, sigma).map_err(|e| Error::input(e.to_string()))?;
        for t in ch3.iter_mut().chain(ch4.iter_mut()) {
            *t += jitter.sample(rng);
        }
    }
    ch3.sort_by(f64::total_cmp);
    ch4.sort_by(f64::total_cmp);
    if cfg.dead_time > 0.0 {
        ch3 = apply_dead_time(&ch3, cfg.dead_time);
        ch4 = apply_dead_time(&ch4, cfg.dead_time);
    }

    let mut events: Vec<DetectionEvent> = Vec::with_capacity(ch3.len() + ch4.len());
    let (mut i, mut j) = (0, 0);
    while i < ch3.len() || j < ch4.len() {
        if j >= ch4.len() || (i < ch3.len() && ch3[i] <= ch4[j]) {
            events.push(DetectionEvent {
                channel: Detector::D3,
                time: ch3[i],
            });
            i += 1;
        } else {
            events.push(DetectionEvent {
                channel: Detector::D4,
                time: ch4[j],
            });
            j += 1;
        }
    }
    Ok(events)
}

/// Drop clicks closer than `dead_time` to the previous accepted click.
fn apply_dead_time(times: &[f64], dead_time: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut last = f64::NEG_INFINITY;
    for &t in times {
        if t - last >= dead_time {
            out.push(t);
            last = t;
        }
    }
    out
}

/// Split sorted events into per-channel time lists.
pub fn split_channels(events: &[DetectionEvent]) -> (Vec<f64>, Vec<f64>) {
    let mut ch3 = Vec::with_capacity(events.len() / 2 + 1);
    let mut ch4 = Vec::with_capacity(events.len() / 2 + 1);
    for e in events {
        match e.channel {
            Detector::D3 => ch3.push(e.time),
            Detector::D4 => ch4.push(e.time),
        }
    }
    (ch3, ch4)
}

fn check_sorted(events: &[DetectionEvent]) -> Result<()> {
    match events.windows(2).position(|w| w[1].time < w[0].time) {
        Some(i) => Err(Error::input(format!("events not sorted at index {}", i + 1))),
        None => Ok(()),
    }
}

/// Start-stop histogram: channel 3 starts, channel 4 (plus the electronic
/// delay) stops. The recorded delay is reported relative to the electronic
/// delay, so `τ = t_4 - t_3`.
pub fn tac_mca_histogram(events: &[DetectionEvent], cfg: &DetectionConfig) -> Result<CorrelationHistogram> {
    cfg.validate()?;
    check_sorted(events)?;
    let (starts, stops) = split_channels(events);
    Ok(tac_histogram_times(&starts, &stops, cfg))
}

pub(crate) fn tac_histogram_times(starts: &[f64], stops: &[f64], cfg: &DetectionConfig) -> CorrelationHistogram {
    let mut hist = cfg.empty_histogram();
    let d = cfg.electronic_delay;
    // The converter accepts stop-minus-start amplitudes in
    // [tau_min + d, tau_max + d]; later stops leave the start to expire.
    let full_scale = cfg.tau_max + d;
    let mut pending: Option<f64> = None;
    let (mut i, mut j) = (0, 0);
    while j < stops.len() {
        let stop = stops[j] + d;
        if i < starts.len() && starts[i] <= stop {
            pending = Some(starts[i]);
            i += 1;
            continue;
        }
        if let Some(start) = pending.take() {
            let raw = stop - start;
            if raw <= full_scale {
                hist.record(raw - d);
            }
        }
        j += 1;
    }
    hist
}

/// All channel-3/channel-4 pairs with `t_4 - t_3` inside the range.
pub fn full_correlation_histogram(events: &[DetectionEvent], cfg: &DetectionConfig) -> Result<CorrelationHistogram> {
    cfg.validate()?;
    check_sorted(events)?;
    let (ch3, ch4) = split_channels(events);
    Ok(full_histogram_times(&ch3, &ch4, cfg))
}

pub(crate) fn full_histogram_times(ch3: &[f64], ch4: &[f64], cfg: &DetectionConfig) -> CorrelationHistogram {
    let mut hist = cfg.empty_histogram();
    let mut lo = 0;
    for &t3 in ch3 {
        while lo < ch4.len() && ch4[lo] - t3 < cfg.tau_min {
            lo += 1;
        }
        for &t4 in &ch4[lo..] {
            let tau = t4 - t3;
            if tau >= cfg.tau_max {
                break;
            }
            hist.record(tau);
        }
    }
    hist
}

/// Histogram in the configured correlation mode.
pub fn correlate(events: &[DetectionEvent], cfg: &DetectionConfig) -> Result<CorrelationHistogram> {
    match cfg.mode {
        CorrelationMode::Tac => tac_mca_histogram(events, cfg),
        CorrelationMode::Full => full_correlation_histogram(events, cfg),
    }
}

/// Scale counts so that the mean over bins with `|τ|` in `region` is 1.
pub fn normalize(hist: &CorrelationHistogram, region: (f64, f64)) -> Result<CorrelationHistogram> {
    let (lo, hi) = region;
    let mut sum = 0u64;
    let mut n = 0usize;
    for (c, &k) in hist.bin_centers.iter().zip(&hist.counts) {
        if (lo..=hi).contains(&c.abs()) {
            sum += k;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::input(format!("normalization region |tau| in [{lo}, {hi}] contains no bins")));
    }
    if sum == 0 {
        return Err(Error::input(format!("normalization region |tau| in [{lo}, {hi}] holds no counts")));
    }
    let mut out = hist.clone();
    out.normalization = Some(Normalization {
        region: Some(region),
        constant: sum as f64 / n as f64,
    });
    Ok(out)
}

/// Baseline region well clear of the central dip and of the sidelobes at
/// `±delta_t`: `|τ|` from `delta_t + 5/gamma_spon` to the edge of the range.
pub fn default_norm_region(delta_t: f64, gamma_spon: f64, cfg: &DetectionConfig) -> Result<(f64, f64)> {
    let lo = delta_t.max(0.0) + 5.0 / gamma_spon;
    let hi = cfg.tau_max.min(-cfg.tau_min);
    if lo >= hi {
        return Err(Error::input(format!(
            "range +-{hi} ns leaves no baseline beyond {lo} ns; widen the range"
        )));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stage_rng, Stage};
    use rand_distr::Exp;

    fn streams(ch3: Vec<f64>, ch4: Vec<f64>, duration: f64) -> ClickStreams {
        ClickStreams { ch3, ch4, duration }
    }

    fn poisson_times(rate: f64, duration: f64, rng: &mut impl Rng) -> Vec<f64> {
        let e = Exp::new(rate).unwrap();
        let mut t = 0.0;
        let mut v = Vec::new();
        loop {
            t += e.sample(rng);
            if t >= duration {
                return v;
            }
            v.push(t);
        }
    }

    fn small_cfg() -> DetectionConfig {
        DetectionConfig {
            tau_min: -10.0,
            tau_max: 10.0,
            electronic_delay: 10.0,
            bin_width: 0.5,
            ..DetectionConfig::ideal()
        }
    }

    #[test]
    fn identity_chain() {
        let s = streams(vec![1.0, 3.0, 7.5], vec![2.0, 3.0, 9.0], 10.0);
        let ev = apply_detector(&s, &DetectionConfig::ideal(), &mut stage_rng(1, Stage::Detector)).unwrap();
        let (a, b) = split_channels(&ev);
        assert_eq!(a, s.ch3);
        assert_eq!(b, s.ch4);
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn zero_efficiency_is_empty() {
        let s = streams(vec![1.0, 3.0], vec![2.0], 10.0);
        let cfg = DetectionConfig {
            efficiency: 0.0,
            ..DetectionConfig::ideal()
        };
        assert!(apply_detector(&s, &cfg, &mut stage_rng(1, Stage::Detector)).unwrap().is_empty());
    }

    #[test]
    fn dead_time_removes_close_click() {
        let s = streams(vec![0.0, 10.0, 60.0], vec![], 100.0);
        let cfg = DetectionConfig {
            dead_time: 50.0,
            ..DetectionConfig::ideal()
        };
        let ev = apply_detector(&s, &cfg, &mut stage_rng(1, Stage::Detector)).unwrap();
        let t: Vec<f64> = ev.iter().map(|e| e.time).collect();
        assert_eq!(t, vec![0.0, 60.0]);
    }

    #[test]
    fn background_share() {
        let mut rng = stage_rng(2, Stage::Detector);
        let ch3 = poisson_times(0.01, 1e7, &mut rng);
        let ch4 = poisson_times(0.01, 1e7, &mut rng);
        let n_sig = (ch3.len() + ch4.len()) as f64;
        let s = streams(ch3, ch4, 1e7);
        let cfg = DetectionConfig {
            background_fraction: 0.05,
            ..DetectionConfig::ideal()
        };
        let ev = apply_detector(&s, &cfg, &mut rng).unwrap();
        let n_bg = ev.len() as f64 - n_sig;
        let expected = n_sig * 0.05 / 0.95;
        assert!((n_bg - expected).abs() < 4.0 * expected.sqrt(), "{n_bg} vs {expected}");
    }

    #[test]
    fn rejects_unsorted_and_bad_config() {
        let s = streams(vec![2.0, 1.0], vec![], 10.0);
        assert!(apply_detector(&s, &DetectionConfig::ideal(), &mut stage_rng(1, Stage::Detector)).is_err());
        let bad = DetectionConfig {
            bin_width: 0.3,
            ..small_cfg()
        };
        assert!(bad.validate().is_err());
        let bad = DetectionConfig {
            tau_min: 5.0,
            tau_max: 5.0,
            ..small_cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tac_without_stops_is_empty() {
        let ev: Vec<DetectionEvent> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&t| DetectionEvent {
                channel: Detector::D3,
                time: t,
            })
            .collect();
        let h = tac_mca_histogram(&ev, &small_cfg()).unwrap();
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn tac_start_stop_logic() {
        let cfg = small_cfg();
        let ev = vec![
            DetectionEvent { channel: Detector::D3, time: 0.0 },
            DetectionEvent { channel: Detector::D3, time: 1.0 },
            DetectionEvent { channel: Detector::D4, time: 2.0 },
            DetectionEvent { channel: Detector::D4, time: 3.0 },
            DetectionEvent { channel: Detector::D4, time: 4.0 },
            DetectionEvent { channel: Detector::D3, time: 5.0 },
            DetectionEvent { channel: Detector::D4, time: 100.0 },
        ];
        let h = tac_mca_histogram(&ev, &cfg).unwrap();
        // stops are delayed by 10: 12, 13, 14, 110; starts 0, 1, 5
        // start 5 is pending when stop 12 arrives -> tau = 12 - 5 - 10 = -3
        // stop 110 finds no start
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[h.bin_of(-3.0).unwrap()], 1);
    }

    #[test]
    fn tac_expires_out_of_range() {
        let cfg = small_cfg();
        let ev = vec![
            DetectionEvent { channel: Detector::D3, time: 0.0 },
            DetectionEvent { channel: Detector::D4, time: 50.0 },
            DetectionEvent { channel: Detector::D4, time: 55.0 },
        ];
        let h = tac_mca_histogram(&ev, &cfg).unwrap();
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn full_mode_matches_brute_force() {
        let mut rng = stage_rng(9, Stage::Detector);
        let ch3 = poisson_times(0.3, 2000.0, &mut rng);
        let ch4 = poisson_times(0.3, 2000.0, &mut rng);
        let cfg = small_cfg();
        let h = full_histogram_times(&ch3, &ch4, &cfg);
        let mut brute = cfg.empty_histogram();
        for &a in &ch3 {
            for &b in &ch4 {
                brute.record(b - a);
            }
        }
        assert_eq!(h.counts, brute.counts);
        assert!(h.total() > 1000);
    }

    #[test]
    fn tac_flat_for_independent_poisson() {
        let mut rng = stage_rng(4, Stage::Detector);
        let (r3, r4, dur) = (0.002, 0.002, 5e8);
        let ch3 = poisson_times(r3, dur, &mut rng);
        let ch4 = poisson_times(r4, dur, &mut rng);
        let cfg = DetectionConfig {
            bin_width: 2.0,
            ..small_cfg()
        };
        let h = tac_histogram_times(&ch3, &ch4, &cfg);
        let expected = r3 * r4 * dur * cfg.bin_width;
        assert!(h.total() <= ch3.len() as u64);
        for (&c, &k) in h.bin_centers.iter().zip(&h.counts) {
            // start-stop decay e^{-r4 (tau + d)} and start replacement e^{-r3 (tau + d)}
            let delay = c + cfg.electronic_delay;
            let e = expected * (-(r3 + r4) * delay).exp();
            assert!((k as f64 - e).abs() < 4.0 * e.sqrt(), "tau {c}: {k} vs {e}");
        }
    }

    #[test]
    fn normalize_arithmetic() {
        let mut h = CorrelationHistogram::with_edges(-2.0, 1.0, 4);
        h.counts = vec![200, 80, 200, 200];
        let n = normalize(&h, (1.0, 2.0)).unwrap();
        let v = n.normalized_values().unwrap();
        assert!((v[1] - 0.4).abs() < 1e-15);
        assert!(normalize(&h, (5.0, 6.0)).is_err());
        h.counts = vec![7; 4];
        let v = normalize(&h, (0.0, 2.0)).unwrap().normalized_values().unwrap();
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn norm_region_defaults() {
        let cfg = DetectionConfig::default();
        let (lo, hi) = default_norm_region(4.6, 1.0 / 3.4, &cfg).unwrap();
        assert!((lo - 21.6).abs() < 1e-12);
        assert_eq!(hi, 42.0);
        assert!(default_norm_region(40.0, 1.0 / 3.4, &cfg).is_err());
    }
}
