//! Synthetic CDP datasets with planted hyperbolic reflections.
//!
//! CDP midpoints are laid out on a square 2D grid with `cdp_spacing` meters
//! between neighbors. Each gather has `fold` traces with offsets
//! `0, step, 2*step, ...` along the x axis, source and receiver placed
//! symmetrically about the midpoint. Every event contributes a Ricker wavelet
//! centered on its NMO traveltime.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CdpGather, Dataset, SynthMeta, Trace};
use crate::error::{Error, Result};
use crate::traveltime::{compute_halfpoints, nmo_traveltime};

pub const GENERATOR_NAME: &str = "ricker-hyperbola-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectorEvent {
    /// Zero-offset two-way time, seconds.
    pub t0: f64,
    /// NMO velocity, m/s.
    pub velocity: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectorSpec {
    pub events: Vec<ReflectorEvent>,
    pub vmin: f64,
    pub vmax: f64,
}

impl ReflectorSpec {
    /// `n` unit-amplitude events evenly spaced in time over `record_length`
    /// with velocities evenly spaced inside `[vmin, vmax]`.
    pub fn spread(n: usize, record_length: f64, vmin: f64, vmax: f64) -> Self {
        let frac = |i: usize| (i + 1) as f64 / (n + 1) as f64;
        Self {
            events: (0..n)
                .map(|i| ReflectorEvent {
                    t0: record_length * frac(i),
                    velocity: vmin + (vmax - vmin) * frac(i),
                    amplitude: 1.0,
                })
                .collect(),
            vmin,
            vmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub ncdps: usize,
    pub fold: usize,
    pub ns: usize,
    pub dt_us: u32,
    pub reflectors: ReflectorSpec,
    pub seed: u64,
    /// Peak amplitude over noise standard deviation; `None` is noise-free.
    pub snr: Option<f64>,
    pub peak_frequency: f64,
    /// Offset increment between traces. `None` picks a step so the farthest
    /// offset equals `vmin * record_length / 2`.
    pub offset_step: Option<f64>,
    pub cdp_spacing: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            ncdps: 1,
            fold: 60,
            ns: 550,
            dt_us: 220,
            reflectors: ReflectorSpec {
                events: Vec::new(),
                vmin: 2000.0,
                vmax: 3000.0,
            },
            seed: 0,
            snr: None,
            peak_frequency: 25.0,
            offset_step: None,
            cdp_spacing: 25.0,
        }
    }
}

impl SynthSpec {
    pub fn dt_seconds(&self) -> f64 {
        f64::from(self.dt_us) * 1e-6
    }

    pub fn record_length(&self) -> f64 {
        self.ns as f64 * self.dt_seconds()
    }

    pub fn resolved_offset_step(&self) -> f64 {
        self.offset_step.unwrap_or_else(|| {
            let max_offset = self.reflectors.vmin * self.record_length() / 2.0;
            max_offset / (self.fold.max(2) - 1) as f64
        })
    }

    fn validate(&self) -> Result<()> {
        if self.ncdps == 0 || self.fold == 0 {
            return Err(Error::param("ncdps and fold must be at least 1"));
        }
        if self.ns < 2 {
            return Err(Error::param(format!("ns must be at least 2, got {}", self.ns)));
        }
        if self.dt_us == 0 {
            return Err(Error::param("dt must be positive"));
        }
        let r = &self.reflectors;
        if !(r.vmin > 0.0 && r.vmin <= r.vmax) {
            return Err(Error::param(format!(
                "reflector velocity bounds [{}, {}] are invalid",
                r.vmin, r.vmax
            )));
        }
        let tmax = self.record_length();
        for e in &r.events {
            if !(e.velocity >= r.vmin && e.velocity <= r.vmax) {
                return Err(Error::param(format!(
                    "event velocity {} outside [{}, {}]",
                    e.velocity, r.vmin, r.vmax
                )));
            }
            if !(e.t0 >= 0.0 && e.t0 < tmax) {
                return Err(Error::param(format!(
                    "event time {} s is beyond the record length {} s",
                    e.t0, tmax
                )));
            }
            if !e.amplitude.is_finite() {
                return Err(Error::param("event amplitude must be finite"));
            }
        }
        if let Some(snr) = self.snr {
            if !(snr > 0.0 && snr.is_finite()) {
                return Err(Error::param(format!("snr must be positive, got {snr}")));
            }
        }
        if !(self.peak_frequency > 0.0) {
            return Err(Error::param("peak frequency must be positive"));
        }
        let step = self.resolved_offset_step();
        if !(step >= 0.0 && step.is_finite()) || !(self.cdp_spacing >= 0.0) {
            return Err(Error::param("offset step and CDP spacing must be non-negative"));
        }
        Ok(())
    }
}

/// Ricker wavelet with peak frequency `f` evaluated `tau` seconds from its center.
pub fn ricker(tau: f64, f: f64) -> f64 {
    let a = (std::f64::consts::PI * f * tau).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let dt = spec.dt_seconds();
    let step = spec.resolved_offset_step();
    let cols = (spec.ncdps as f64).sqrt().ceil() as usize;
    let events = &spec.reflectors.events;

    let noise = match spec.snr {
        Some(snr) => {
            let peak = events.iter().map(|e| e.amplitude.abs()).fold(0.0, f64::max);
            let sigma = if peak > 0.0 { peak / snr } else { 1.0 / snr };
            Some(Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut gathers = Vec::with_capacity(spec.ncdps);
    for i in 0..spec.ncdps {
        let mx = (i % cols) as f64 * spec.cdp_spacing;
        let my = (i / cols) as f64 * spec.cdp_spacing;
        let traces: Vec<Trace> = (0..spec.fold)
            .map(|j| {
                let half = j as f64 * step / 2.0;
                Trace::new(
                    (mx - half) as f32,
                    my as f32,
                    (mx + half) as f32,
                    my as f32,
                    vec![0.0; spec.ns],
                )
            })
            .collect();
        let mut gather = CdpGather::new(i as u32, spec.ns, spec.dt_us, traces)?;
        let halfpoints = compute_halfpoints(&gather);
        for (trace, hp) in gather.traces.iter_mut().zip(&halfpoints) {
            let centers: Vec<(f64, f64)> = events
                .iter()
                .map(|e| Ok((nmo_traveltime(e.t0, hp.h2, e.velocity)?, e.amplitude)))
                .collect::<Result<_>>()?;
            for (n, s) in trace.samples.iter_mut().enumerate() {
                let t = n as f64 * dt;
                let mut v: f64 = centers
                    .iter()
                    .map(|&(tc, amp)| amp * ricker(t - tc, spec.peak_frequency))
                    .sum();
                if let Some(dist) = &noise {
                    v += dist.sample(&mut rng);
                }
                *s = v as f32;
            }
        }
        gathers.push(gather);
    }

    Dataset::new(
        gathers,
        spec.fold,
        Some(SynthMeta {
            generator: GENERATOR_NAME.to_string(),
            seed: spec.seed,
            events: events.clone(),
            peak_frequency: spec.peak_frequency,
            snr: spec.snr,
        }),
    )
}
