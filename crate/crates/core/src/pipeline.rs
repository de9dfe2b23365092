//! End-to-end simulation: emitter, interferometer, detectors, histogram.

use rayon::prelude::*;

use crate::coherence::EmitterParams;
use crate::detection::{apply_detector, correlate, DetectionConfig, DetectionEvent};
use crate::emitter::{emission_stream_with, StreamConfig};
use crate::error::{Error, Result};
use crate::histogram::CorrelationHistogram;
use crate::interferometer::{recombine, route, InterferometerConfig};
use crate::rng::{replica_seed, stage_rng, Stage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub emitter: EmitterParams,
    pub interferometer: InterferometerConfig,
    pub detection: DetectionConfig,
    /// Length of each replica, ns.
    pub duration: f64,
    pub seed: u64,
    pub replicas: usize,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.interferometer.validate()?;
        self.detection.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::param("duration", format!("must be finite and > 0, got {}", self.duration)));
        }
        if self.replicas == 0 {
            return Err(Error::param("replicas", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaOutput {
    pub histogram: CorrelationHistogram,
    pub photons: usize,
    pub events: Vec<DetectionEvent>,
}

/// Run one replica with seed `seed + index`.
pub fn run_replica(cfg: &SimulationConfig, index: usize) -> Result<ReplicaOutput> {
    cfg.validate()?;
    let seed = replica_seed(cfg.seed, index as u64);
    let stream_cfg = StreamConfig {
        duration: cfg.duration,
        rng_seed: seed,
        emitter: cfg.emitter,
    };
    let stream = emission_stream_with(&stream_cfg, &mut stage_rng(seed, Stage::Emitter));
    let routed = route(&stream, &cfg.interferometer, &mut stage_rng(seed, Stage::Routing))?;
    let clicks = recombine(
        &routed,
        &cfg.interferometer,
        &cfg.emitter,
        cfg.duration,
        &mut stage_rng(seed, Stage::BeamSplitter),
    )?;
    let events = apply_detector(&clicks, &cfg.detection, &mut stage_rng(seed, Stage::Detector))?;
    let histogram = correlate(&events, &cfg.detection)?;
    Ok(ReplicaOutput {
        histogram,
        photons: stream.len(),
        events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// Merged, unnormalized histogram.
    pub histogram: CorrelationHistogram,
    pub photons: usize,
    /// Events of all replicas laid end to end, replica `i` shifted by
    /// `i * duration`. Empty unless requested.
    pub events: Vec<DetectionEvent>,
}

/// Run all replicas in parallel and merge their histograms in replica order.
pub fn simulate(cfg: &SimulationConfig, keep_events: bool) -> Result<SimulationOutput> {
    cfg.validate()?;
    let mut outputs: Vec<ReplicaOutput> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let mut r = run_replica(cfg, i)?;
            if !keep_events {
                r.events = Vec::new();
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let mut histogram = cfg.detection.empty_histogram();
    let mut photons = 0;
    let mut events = Vec::new();
    for (i, r) in outputs.iter_mut().enumerate() {
        histogram.merge(&r.histogram)?;
        photons += r.photons;
        if keep_events {
            let offset = i as f64 * cfg.duration;
            events.extend(r.events.drain(..).map(|mut e| {
                e.time += offset;
                e
            }));
        }
    }
    Ok(SimulationOutput {
        histogram,
        photons,
        events,
    })
}
