//! Michelson delay and two-photon interference at the recombining splitter.
//!
//! Each photon takes the short or the long arm at random. A wavepacket spans
//! `[arrival, arrival + decay]` at the splitter. Two wavepackets from
//! opposite arms that overlap in time interfere: with parallel polarization
//! they leave through the same output more often than distinguishable
//! photons would, by an amount set by the mode matching and by pure dephasing
//! between their detection times.
//!
//! When several wavepackets overlap in a chain, the interfering pairs are
//! drawn as a random matching on the overlap forest. Each overlap edge is
//! active with the probability that reproduces the two-photon law for that
//! pair, and labels of photons in different matched pairs are independent,
//! so the expected two-detector correlation sums the interference of every
//! overlapping pair.

use rand::Rng;

use crate::coherence::{BeamSplitterConfig, EmitterParams, PolarizationMode};
use crate::emitter::PhotonEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Short,
    Long,
}

/// Polarization axis at the splitter. The half-wave plate sits in the long
/// arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
}

/// Output port of the splitter, numbered as the detector channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    D3,
    D4,
}

impl Detector {
    pub fn channel(self) -> u8 {
        match self {
            Detector::D3 => 3,
            Detector::D4 => 4,
        }
    }

    pub fn from_channel(ch: u8) -> Option<Self> {
        match ch {
            3 => Some(Detector::D3),
            4 => Some(Detector::D4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerConfig {
    /// Extra delay of the long arm, ns.
    pub delta_t: f64,
    pub bs: BeamSplitterConfig,
    pub pol_mode: PolarizationMode,
    /// Probability that a photon takes the long arm.
    pub arm_prob_long: f64,
    /// Largest arrival-time separation of an interfering pair, ns.
    pub pairing_window: f64,
    /// When false no pair interferes.
    pub pairing: bool,
}

impl InterferometerConfig {
    /// 4.6 ns delay, 50/50 splitter with mode matching 0.7, pairing window
    /// `10 / gamma_spon`.
    pub fn experiment(gamma_spon: f64) -> Self {
        InterferometerConfig {
            delta_t: 4.6,
            bs: BeamSplitterConfig::default(),
            pol_mode: PolarizationMode::Parallel,
            arm_prob_long: 0.5,
            pairing_window: 10.0 / gamma_spon,
            pairing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t >= 0.0 && self.delta_t.is_finite()) {
            return Err(Error::param("delta_t", format!("must be >= 0, got {}", self.delta_t)));
        }
        if !(0.0..=1.0).contains(&self.arm_prob_long) {
            return Err(Error::param(
                "arm_prob_long",
                format!("must lie in [0, 1], got {}", self.arm_prob_long),
            ));
        }
        if !(self.pairing_window > 0.0) {
            return Err(Error::param(
                "pairing_window",
                format!("must be > 0, got {}", self.pairing_window),
            ));
        }
        self.bs.validate()
    }

    /// Weight of the interference term for this configuration.
    fn interference_strength(&self) -> f64 {
        match self.pol_mode {
            PolarizationMode::Parallel if self.pairing => self.bs.mode_match,
            _ => 0.0,
        }
    }
}

/// A photon at the recombining splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutedPhoton {
    pub photon_id: u64,
    /// Start of the wavepacket at the splitter.
    pub arrival_time: f64,
    pub arm: Arm,
    pub polarization: Polarization,
    /// Radiative delay carried over from the emitter.
    pub decay: f64,
}

impl RoutedPhoton {
    pub fn detection_time(&self) -> f64 {
        self.arrival_time + self.decay
    }
}

/// Send each photon into the long arm with probability `arm_prob_long`.
/// The output is sorted by arrival time.
pub fn route<R: Rng + ?Sized>(
    stream: &[PhotonEvent],
    cfg: &InterferometerConfig,
    rng: &mut R,
) -> Result<Vec<RoutedPhoton>> {
    cfg.validate()?;
    if let Some(i) = stream
        .windows(2)
        .position(|w| w[1].emission_time < w[0].emission_time)
    {
        return Err(Error::input(format!("emission stream not sorted at index {}", i + 1)));
    }
    let long_pol = match cfg.pol_mode {
        PolarizationMode::Parallel => Polarization::H,
        PolarizationMode::Orthogonal => Polarization::V,
    };
    let mut routed: Vec<RoutedPhoton> = stream
        .iter()
        .map(|e| {
            let long = rng.gen::<f64>() < cfg.arm_prob_long;
            RoutedPhoton {
                photon_id: e.photon_id,
                arrival_time: if long { e.emission_time + cfg.delta_t } else { e.emission_time },
                arm: if long { Arm::Long } else { Arm::Short },
                polarization: if long { long_pol } else { Polarization::H },
                decay: e.decay,
            }
        })
        .collect();
    // both arms are already sorted; a stable sort on a nearly merged list
    routed.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
    Ok(routed)
}

/// Envelope symmetry factor of a pair detected at `u` (photon a) and `v`
/// (photon b):
///
/// `R = 2 E_a(u)E_b(v)E_a(v)E_b(u) / (E_a(u)²E_b(v)² + E_a(v)²E_b(u)²)`
///
/// with `E_x(t) = √Γ e^{-Γ(t - arrival_x)/2}` for `t ≥ arrival_x`.
pub fn envelope_ratio(u: f64, v: f64, arrival_a: f64, arrival_b: f64, gamma_spon: f64) -> f64 {
    if u < arrival_a || v < arrival_b || v < arrival_a || u < arrival_b {
        return 0.0;
    }
    // log E_a(u)²E_b(v)² - log E_a(v)²E_b(u)²
    let log_ratio = -gamma_spon * ((u - arrival_a) + (v - arrival_b) - (v - arrival_a) - (u - arrival_b));
    1.0 / (0.5 * log_ratio).cosh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Coincidence,
    Bunched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    pub detector: Detector,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub kind: PairKind,
    /// Click of the first photon passed in.
    pub a: Click,
    pub b: Click,
}

/// Joint detector law for an (short, long) pair, in photon labels.
#[derive(Debug, Clone, Copy)]
struct PairLaw {
    short3_long4: f64,
    short4_long3: f64,
    both3: f64,
}

impl PairLaw {
    fn new(bs: &BeamSplitterConfig, exchange: f64) -> Self {
        let t = bs.transmission();
        let r = bs.reflection();
        let k = (t * r * exchange).min((t * t).min(r * r));
        PairLaw {
            short3_long4: t * t - k,
            short4_long3: r * r - k,
            both3: t * r + k,
        }
    }

    fn coincidence(&self) -> f64 {
        self.short3_long4 + self.short4_long3
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Detector, Detector) {
        let x: f64 = rng.gen();
        let mut acc = self.short3_long4;
        if x < acc {
            return (Detector::D3, Detector::D4);
        }
        acc += self.short4_long3;
        if x < acc {
            return (Detector::D4, Detector::D3);
        }
        acc += self.both3;
        if x < acc {
            (Detector::D3, Detector::D3)
        } else {
            (Detector::D4, Detector::D4)
        }
    }
}

fn check_pair(a: &RoutedPhoton, b: &RoutedPhoton, cfg: &InterferometerConfig) -> Result<()> {
    if a.arm == b.arm {
        return Err(Error::input("interfering photons must come from opposite arms"));
    }
    if (a.arrival_time - b.arrival_time).abs() > cfg.pairing_window {
        return Err(Error::input(format!(
            "arrivals {} and {} are further apart than the pairing window {}",
            a.arrival_time, b.arrival_time, cfg.pairing_window
        )));
    }
    Ok(())
}

/// `M · R · e^{-2 γ_pure |u - v|}` for the pair, zero when the configuration
/// does not interfere.
fn exchange_weight(a: &RoutedPhoton, b: &RoutedPhoton, cfg: &InterferometerConfig, p: &EmitterParams) -> f64 {
    let m = cfg.interference_strength();
    if m == 0.0 {
        return 0.0;
    }
    let (u, v) = (a.detection_time(), b.detection_time());
    let r = envelope_ratio(u, v, a.arrival_time, b.arrival_time, p.gamma_spon);
    m * r * (-2.0 * p.gamma_pure * (u - v).abs()).exp()
}

/// Probability that the pair leaves through different outputs:
/// `cos⁴θ + sin⁴θ - 2 sin²θcos²θ · M · R · e^{-2γ_pure|u-v|}`.
///
/// Away from θ = π/4 the exchange term is capped where the photon-labelled
/// law would go negative.
pub fn coincidence_probability(
    a: &RoutedPhoton,
    b: &RoutedPhoton,
    cfg: &InterferometerConfig,
    emitter: &EmitterParams,
) -> Result<f64> {
    check_pair(a, b, cfg)?;
    Ok(PairLaw::new(&cfg.bs, exchange_weight(a, b, cfg, emitter)).coincidence())
}

/// Resolve one interfering pair into two clicks at their detection times.
pub fn pair_interference_outcome<R: Rng + ?Sized>(
    a: &RoutedPhoton,
    b: &RoutedPhoton,
    cfg: &InterferometerConfig,
    emitter: &EmitterParams,
    rng: &mut R,
) -> Result<PairOutcome> {
    check_pair(a, b, cfg)?;
    let law = PairLaw::new(&cfg.bs, exchange_weight(a, b, cfg, emitter));
    let (ds, dl) = law.sample(rng);
    let (da, db) = if a.arm == Arm::Short { (ds, dl) } else { (dl, ds) };
    Ok(PairOutcome {
        kind: if da == db { PairKind::Bunched } else { PairKind::Coincidence },
        a: Click {
            detector: da,
            time: a.detection_time(),
        },
        b: Click {
            detector: db,
            time: b.detection_time(),
        },
    })
}

/// Route a photon that has no interference partner.
pub fn route_unpaired<R: Rng + ?Sized>(p: &RoutedPhoton, cfg: &InterferometerConfig, rng: &mut R) -> Click {
    let to_d3 = match p.arm {
        Arm::Short => cfg.bs.transmission(),
        Arm::Long => cfg.bs.reflection(),
    };
    let detector = if rng.gen::<f64>() < to_d3 { Detector::D3 } else { Detector::D4 };
    Click {
        detector,
        time: p.detection_time(),
    }
}

/// Ideal (pre-detector) click times per output channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClickStreams {
    pub ch3: Vec<f64>,
    pub ch4: Vec<f64>,
    /// Observation window, ns.
    pub duration: f64,
}

impl ClickStreams {
    pub fn new(duration: f64) -> Self {
        ClickStreams {
            ch3: Vec::new(),
            ch4: Vec::new(),
            duration,
        }
    }

    pub fn push(&mut self, click: Click) {
        match click.detector {
            Detector::D3 => self.ch3.push(click.time),
            Detector::D4 => self.ch4.push(click.time),
        }
    }

    pub fn sort(&mut self) {
        self.ch3.sort_by(f64::total_cmp);
        self.ch4.sort_by(f64::total_cmp);
    }

    pub fn len(&self) -> usize {
        self.ch3.len() + self.ch4.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-photon bookkeeping for the matching sweep.
#[derive(Debug, Clone, Copy)]
struct Node {
    /// Earlier overlapping photon of the other arm and the active
    /// probability of that edge.
    parent: Option<(usize, f64)>,
    /// Index of the matched partner.
    partner: Option<usize>,
    /// Sum of conditional child-edge probabilities already offered.
    offered: f64,
}

/// Propagate routed photons through the splitter and return ideal clicks.
///
/// `routed` must be sorted by arrival time, as returned by [`route`].
pub fn recombine<R: Rng + ?Sized>(
    routed: &[RoutedPhoton],
    cfg: &InterferometerConfig,
    emitter: &EmitterParams,
    duration: f64,
    rng: &mut R,
) -> Result<ClickStreams> {
    cfg.validate()?;
    let mut out = ClickStreams::new(duration);
    out.ch3.reserve(routed.len() / 2 + 16);
    out.ch4.reserve(routed.len() / 2 + 16);

    let t = cfg.bs.transmission();
    let r = cfg.bs.reflection();
    let full_swap = (t * t).min(r * r);
    if cfg.interference_strength() == 0.0 || full_swap == 0.0 {
        for p in routed {
            out.push(route_unpaired(p, cfg, rng));
        }
        out.sort();
        return Ok(out);
    }

    // Components of the overlap forest are contiguous in arrival order.
    let mut start = 0;
    let mut comp_end = f64::NEG_INFINITY;
    for (i, p) in routed.iter().enumerate() {
        if p.arrival_time > comp_end && i > start {
            resolve_component(&routed[start..i], cfg, emitter, full_swap, rng, &mut out)?;
            start = i;
        }
        comp_end = if i == start { p.detection_time() } else { comp_end.max(p.detection_time()) };
    }
    if start < routed.len() {
        resolve_component(&routed[start..], cfg, emitter, full_swap, rng, &mut out)?;
    }
    out.sort();
    Ok(out)
}

fn resolve_component<R: Rng + ?Sized>(
    comp: &[RoutedPhoton],
    cfg: &InterferometerConfig,
    emitter: &EmitterParams,
    full_swap: f64,
    rng: &mut R,
    out: &mut ClickStreams,
) -> Result<()> {
    match comp {
        [p] => out.push(route_unpaired(p, cfg, rng)),
        [a, b] if a.arm != b.arm && (b.arrival_time - a.arrival_time) <= cfg.pairing_window => {
            let o = pair_interference_outcome(a, b, cfg, emitter, rng)?;
            out.push(o.a);
            out.push(o.b);
        }
        _ => resolve_chain(comp, cfg, emitter, full_swap, rng, out),
    }
    Ok(())
}

/// Random matching on one overlap tree, then detector labels.
fn resolve_chain<R: Rng + ?Sized>(
    comp: &[RoutedPhoton],
    cfg: &InterferometerConfig,
    emitter: &EmitterParams,
    full_swap: f64,
    rng: &mut R,
    out: &mut ClickStreams,
) {
    let t = cfg.bs.transmission();
    let r = cfg.bs.reflection();
    let mut nodes = vec![
        Node {
            parent: None,
            partner: None,
            offered: 0.0,
        };
        comp.len()
    ];
    // latest photon seen on each arm
    let mut last_short: Option<usize> = None;
    let mut last_long: Option<usize> = None;

    for (i, p) in comp.iter().enumerate() {
        let opposite = match p.arm {
            Arm::Short => last_long,
            Arm::Long => last_short,
        };
        if let Some(j) = opposite {
            let q_other = &comp[j];
            let overlaps = q_other.detection_time() >= p.arrival_time;
            let in_window = p.arrival_time - q_other.arrival_time <= cfg.pairing_window;
            if overlaps && in_window {
                let edge = (t * r * exchange_weight(q_other, p, cfg, emitter) / full_swap).min(1.0);
                // Marginal probability that j is matched to its own parent.
                let parent_active = nodes[j].parent.map_or(0.0, |(_, q)| q);
                let free = 1.0 - parent_active;
                let mut cond = if free > 0.0 { edge / free } else { 0.0 };
                let room = (1.0 - nodes[j].offered).max(0.0);
                if cond > room {
                    cond = room;
                }
                let effective = cond * free;
                nodes[i].parent = Some((j, effective));
                let taken = nodes[j].partner.is_some();
                if !taken && cond > 0.0 {
                    let remaining = 1.0 - nodes[j].offered;
                    if rng.gen::<f64>() * remaining < cond {
                        nodes[j].partner = Some(i);
                        nodes[i].partner = Some(j);
                    }
                }
                nodes[j].offered += cond;
            }
        }
        match p.arm {
            Arm::Short => last_short = Some(i),
            Arm::Long => last_long = Some(i),
        }
    }

    // an active edge carries the whole exchange weight of the splitter
    let swapped = PairLaw::new(&cfg.bs, f64::INFINITY);
    for (i, p) in comp.iter().enumerate() {
        match nodes[i].partner {
            None => out.push(route_unpaired(p, cfg, rng)),
            Some(j) if j > i => {
                let (s, l) = if p.arm == Arm::Short { (p, &comp[j]) } else { (&comp[j], p) };
                let (ds, dl) = swapped.sample(rng);
                out.push(Click {
                    detector: ds,
                    time: s.detection_time(),
                });
                out.push(Click {
                    detector: dl,
                    time: l.detection_time(),
                });
            }
            Some(_) => {}
        }
    }
}
