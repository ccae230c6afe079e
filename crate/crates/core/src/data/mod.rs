//! Seismic data model: traces, CDP gathers and datasets.
//!
//! Traces of a gather are stored one after another and samples within a
//! trace are contiguous. Coordinates are 2D surface positions in meters and
//! are kept as `f32` so that the on-disk representation round-trips exactly.

mod format;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{read_dataset, write_dataset, MAGIC as SSF_MAGIC, VERSION as SSF_VERSION};
pub use synth::{generate_synthetic, ricker, ReflectorEvent, ReflectorSpec, SynthSpec};

/// One recorded trace: source/receiver positions plus `ns` amplitude samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sx: f32,
    pub sy: f32,
    pub gx: f32,
    pub gy: f32,
    pub samples: Vec<f32>,
}

impl Trace {
    pub fn new(sx: f32, sy: f32, gx: f32, gy: f32, samples: Vec<f32>) -> Self {
        Self {
            sx,
            sy,
            gx,
            gy,
            samples,
        }
    }

    fn coords_finite(&self) -> bool {
        self.sx.is_finite() && self.sy.is_finite() && self.gx.is_finite() && self.gy.is_finite()
    }
}

/// Traces sharing a common midpoint. The unit of semblance computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CdpGather {
    pub cdp_id: u32,
    pub ns: usize,
    /// Sampling interval in microseconds.
    pub dt_us: u32,
    pub traces: Vec<Trace>,
}

impl CdpGather {
    /// Builds a gather, checking that every trace carries `ns` samples and
    /// finite coordinates.
    pub fn new(cdp_id: u32, ns: usize, dt_us: u32, traces: Vec<Trace>) -> Result<Self> {
        if dt_us == 0 {
            return Err(Error::param("dt must be positive"));
        }
        for (i, t) in traces.iter().enumerate() {
            if t.samples.len() != ns {
                return Err(Error::param(format!(
                    "cdp {cdp_id}: trace {i} has {} samples, expected {ns}",
                    t.samples.len()
                )));
            }
            if !t.coords_finite() {
                return Err(Error::param(format!(
                    "cdp {cdp_id}: trace {i} has non-finite coordinates"
                )));
            }
        }
        Ok(Self {
            cdp_id,
            ns,
            dt_us,
            traces,
        })
    }

    /// Number of traces (M).
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Sampling interval in seconds.
    pub fn dt_seconds(&self) -> f64 {
        f64::from(self.dt_us) * 1e-6
    }
}

/// 2D midpoint of a CDP, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Midpoint {
    pub mx: f64,
    pub my: f64,
}

impl Midpoint {
    pub fn distance_squared(&self, other: &Midpoint) -> f64 {
        let dx = self.mx - other.mx;
        let dy = self.my - other.my;
        dx * dx + dy * dy
    }
}

/// Midpoint of the gather's first trace.
pub fn midpoint_of(gather: &CdpGather) -> Result<Midpoint> {
    let first = gather.traces.first().ok_or_else(|| {
        Error::Precondition(format!("cdp {} has no traces", gather.cdp_id))
    })?;
    Ok(Midpoint {
        mx: (f64::from(first.sx) + f64::from(first.gx)) / 2.0,
        my: (f64::from(first.sy) + f64::from(first.gy)) / 2.0,
    })
}

/// Provenance of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub generator: String,
    pub seed: u64,
    pub events: Vec<ReflectorEvent>,
    pub peak_frequency: f64,
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub gathers: Vec<CdpGather>,
    pub fold: usize,
    pub meta: Option<SynthMeta>,
}

impl Dataset {
    /// Builds a dataset, checking `1 <= M <= fold` for every gather and a
    /// common `ns`/`dt` across gathers.
    pub fn new(gathers: Vec<CdpGather>, fold: usize, meta: Option<SynthMeta>) -> Result<Self> {
        let ds = Self {
            gathers,
            fold,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn empty() -> Self {
        Self {
            gathers: Vec::new(),
            fold: 0,
            meta: None,
        }
    }

    pub fn ncdps(&self) -> usize {
        self.gathers.len()
    }

    pub fn ns(&self) -> Option<usize> {
        self.gathers.first().map(|g| g.ns)
    }

    /// Largest trace count over all gathers.
    pub fn max_traces(&self) -> usize {
        self.gathers.iter().map(CdpGather::len).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let first = match self.gathers.first() {
            Some(g) => g,
            None => return Ok(()),
        };
        for g in &self.gathers {
            if g.is_empty() || g.len() > self.fold {
                return Err(Error::param(format!(
                    "cdp {} has {} traces, fold is {}",
                    g.cdp_id,
                    g.len(),
                    self.fold
                )));
            }
            if g.ns != first.ns || g.dt_us != first.dt_us {
                return Err(Error::param(format!(
                    "cdp {} has ns={} dt={}, dataset uses ns={} dt={}",
                    g.cdp_id, g.ns, g.dt_us, first.ns, first.dt_us
                )));
            }
        }
        Ok(())
    }
}
