//! Semblance kernels.
//!
//! Three ways of filling the same per-pair accumulators:
//!
//! * [`scan_pair_baseline`] sweeps every trace once per (sample, velocity)
//!   pair and fetches one window per trace.
//! * [`scan_tile_blocked`] sweeps the traces once for a whole tile of pairs,
//!   fetching a single coalesced range per trace and keeping one accumulator
//!   per pair.
//! * [`scan_tile_vectorized`] is the blocked sweep with the window loop
//!   split into lane groups of `L` over zero-padded storage.
//!
//! All three share [`finalize`]:
//!
//! ```text
//! S = sum_j (sum_i v_ij)^2 / sum_j sum_i v_ij^2
//! ```
//!
//! with no `1/M` normalization, so `0 <= S <= M`. Samples are stored as
//! `f32`; interpolation and accumulation run in `f64`.
//!
//! The per-position numerator sums accumulate in trace order in every
//! variant, so `num` is bitwise identical across kernels. The vectorized
//! kernel reduces `den` and `ac_linear` lane-wise, which reassociates those
//! two sums.

mod vector;

use crate::cache::{plan_fetch, FetchPlan, SampleSource};
use crate::data::{midpoint_of, CdpGather};
use crate::error::{Error, Result};
use crate::traveltime::{compute_halfpoints, hit_for, traveltime_unchecked, CurveHit, Halfpoint};

pub use vector::PadFill;

/// Bytes per accumulator slot.
const SLOT_BYTES: usize = std::mem::size_of::<f64>();

pub const DEFAULT_SCRATCH_BYTES: usize = 64 * 1024;
pub const DEFAULT_LANES: usize = 4;

/// One grid-search point: a sample index (t0 = sample * dt) and a trial velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPair {
    pub sample: usize,
    pub velocity: f64,
}

/// Traces visited by one sweep, with their half-offsets and squared
/// midpoint displacement from the central CDP (zero for plain CMP).
#[derive(Debug, Clone)]
pub struct TraceSweep<'a> {
    traces: Vec<&'a [f32]>,
    halfpoints: Vec<Halfpoint>,
    d2: Vec<f64>,
    ns: usize,
    dt: f64,
}

impl<'a> TraceSweep<'a> {
    pub fn from_gather(gather: &'a CdpGather) -> Self {
        Self {
            traces: gather.traces.iter().map(|t| t.samples.as_slice()).collect(),
            halfpoints: compute_halfpoints(gather),
            d2: vec![0.0; gather.len()],
            ns: gather.ns,
            dt: gather.dt_seconds(),
        }
    }

    /// Central gather followed by each neighbor's traces, in the given order.
    pub fn with_neighbors(central: &'a CdpGather, neighbors: &[&'a CdpGather]) -> Result<Self> {
        let mut sweep = Self::from_gather(central);
        if neighbors.is_empty() {
            return Ok(sweep);
        }
        let center = midpoint_of(central)?;
        for n in neighbors {
            if n.ns != central.ns || n.dt_us != central.dt_us {
                return Err(Error::param(format!(
                    "neighbor cdp {} has ns={} dt={}, central cdp {} has ns={} dt={}",
                    n.cdp_id, n.ns, n.dt_us, central.cdp_id, central.ns, central.dt_us
                )));
            }
            let d2 = midpoint_of(n)?.distance_squared(&center);
            sweep.traces.extend(n.traces.iter().map(|t| t.samples.as_slice()));
            sweep.halfpoints.extend(compute_halfpoints(n));
            sweep.d2.extend(std::iter::repeat_n(d2, n.len()));
        }
        Ok(sweep)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn halfpoints(&self) -> &[Halfpoint] {
        &self.halfpoints
    }

    pub fn d2(&self) -> &[f64] {
        &self.d2
    }

    pub fn trace(&self, i: usize) -> &'a [f32] {
        self.traces[i]
    }

    fn hit(&self, t0: f64, hp: Halfpoint, trace: usize, v: f64, w: usize) -> CurveHit {
        hit_for(traveltime_unchecked(t0, hp.h2, self.d2[trace], v), self.dt, self.ns, w)
    }
}

/// Running sums for one (sample, velocity) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAccumulator {
    /// Per-position sums; may be longer than `w` when lane-padded.
    pub num: Vec<f64>,
    pub w: usize,
    pub den: f64,
    pub ac_linear: f64,
    /// Traces with a valid hit.
    pub m_used: u64,
}

impl PairAccumulator {
    pub fn new(w: usize) -> Self {
        Self {
            num: vec![0.0; w],
            w,
            den: 0.0,
            ac_linear: 0.0,
            m_used: 0,
        }
    }

    /// The `w` meaningful numerator sums.
    pub fn num(&self) -> &[f64] {
        &self.num[..self.w]
    }

    #[inline]
    fn add_window(&mut self, buf: &[f32], k: usize, x: f64) {
        let window = &buf[k..k + self.w + 1];
        for j in 0..self.w {
            let v = interpolate(f64::from(window[j]), f64::from(window[j + 1]), x);
            self.num[j] += v;
            self.den += v * v;
            self.ac_linear += v;
        }
        self.m_used += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemblanceResult {
    pub semblance: f64,
    /// Mean interpolated amplitude along the curve.
    pub stack: f64,
    pub m_used: u64,
}

#[inline]
pub fn interpolate(a: f64, b: f64, x: f64) -> f64 {
    (b - a) * x + a
}

pub fn finalize(acc: &PairAccumulator) -> SemblanceResult {
    let semblance = if acc.den > 0.0 {
        acc.num().iter().map(|n| n * n).sum::<f64>() / acc.den
    } else {
        0.0
    };
    let stack = if acc.m_used > 0 {
        acc.ac_linear / (acc.m_used as f64 * acc.w as f64)
    } else {
        0.0
    };
    SemblanceResult {
        semblance,
        stack,
        m_used: acc.m_used,
    }
}

/// Window length, lane width and per-worker scratch budget shared by the
/// tiled kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelParams {
    pub w: usize,
    pub lanes: usize,
    pub scratch_bytes: usize,
}

impl KernelParams {
    pub fn new(w: usize, lanes: usize, scratch_bytes: usize) -> Result<Self> {
        let p = Self {
            w,
            lanes,
            scratch_bytes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::config("window length must be at least 1"));
        }
        if !matches!(self.lanes, 4 | 8) {
            return Err(Error::config(format!("lane width must be 4 or 8, got {}", self.lanes)));
        }
        if self.max_tile() == 0 {
            return Err(Error::config(format!(
                "scratch budget of {} bytes cannot hold one pair ({} bytes)",
                self.scratch_bytes,
                self.bytes_per_pair()
            )));
        }
        Ok(())
    }

    /// Padded numerator length, `ceil(w / L) * L`.
    pub fn padded_w(&self) -> usize {
        self.w.div_ceil(self.lanes) * self.lanes
    }

    /// Padded numerator plus `den` and `ac_linear`.
    pub fn bytes_per_pair(&self) -> usize {
        (self.padded_w() + 2) * SLOT_BYTES
    }

    /// Largest tile that fits the scratch budget.
    pub fn max_tile(&self) -> usize {
        self.scratch_bytes / self.bytes_per_pair()
    }

    pub fn check_tile(&self, tile: usize) -> Result<()> {
        if tile == 0 {
            return Err(Error::config("tile must contain at least one pair"));
        }
        if tile > self.max_tile() {
            return Err(Error::config(format!(
                "tile of {tile} pairs needs {} bytes, scratch budget is {}",
                tile * self.bytes_per_pair(),
                self.scratch_bytes
            )));
        }
        Ok(())
    }
}

fn check_velocity(p: &SearchPair) -> Result<()> {
    if p.velocity > 0.0 && p.velocity.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("velocity must be positive, got {}", p.velocity)))
    }
}

/// One pair, one sweep, one window fetch per valid trace.
pub fn accumulate_pair_baseline<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pair: SearchPair,
    w: usize,
    source: &mut S,
) -> Result<PairAccumulator> {
    if w == 0 {
        return Err(Error::config("window length must be at least 1"));
    }
    check_velocity(&pair)?;
    let t0 = pair.sample as f64 * sweep.dt;
    let mut acc = PairAccumulator::new(w);
    source.begin_sweep();
    for t in 0..sweep.len() {
        let hp = source.halfpoint(t, &sweep.halfpoints)?;
        let hit = sweep.hit(t0, hp, t, pair.velocity, w);
        if let Some(plan) = plan_fetch(std::slice::from_ref(&hit), w) {
            let buf = source.fetch(sweep.traces[t], &plan)?;
            acc.add_window(buf, 0, hit.x);
        }
    }
    Ok(acc)
}

pub fn scan_pair_baseline<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pair: SearchPair,
    w: usize,
    source: &mut S,
) -> Result<SemblanceResult> {
    accumulate_pair_baseline(sweep, pair, w, source).map(|a| finalize(&a))
}

/// Per-trace driver shared by the tiled kernels: computes every pair's hit,
/// fetches one coalesced range (or per-hit windows past the cap) and hands
/// each valid hit to `add` with its buffer offset.
fn sweep_tile<S, F>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    w: usize,
    source: &mut S,
    mut add: F,
) -> Result<()>
where
    S: SampleSource,
    F: FnMut(usize, &[f32], usize, f64),
{
    let t0s: Vec<f64> = pairs.iter().map(|p| p.sample as f64 * sweep.dt).collect();
    let mut hits = vec![CurveHit::INVALID; pairs.len()];
    source.begin_sweep();
    for t in 0..sweep.len() {
        let hp = source.halfpoint(t, &sweep.halfpoints)?;
        for ((hit, p), &t0) in hits.iter_mut().zip(pairs).zip(&t0s) {
            *hit = sweep.hit(t0, hp, t, p.velocity, w);
        }
        let Some(plan) = plan_fetch(&hits, w) else {
            continue;
        };
        let samples = sweep.traces[t];
        if plan.length <= source.max_range() {
            let buf = source.fetch(samples, &plan)?;
            for (i, hit) in hits.iter().enumerate().filter(|(_, h)| h.valid) {
                add(i, buf, hit.k1 as usize - plan.min_la, hit.x);
            }
        } else {
            for (i, hit) in hits.iter().enumerate().filter(|(_, h)| h.valid) {
                let single = FetchPlan {
                    min_la: hit.k1 as usize,
                    max_lb: hit.k1 as usize,
                    length: w + 1,
                    hits: 1,
                };
                let buf = source.fetch_window(samples, &single)?;
                add(i, buf, 0, hit.x);
            }
        }
    }
    Ok(())
}

fn check_tile(pairs: &[SearchPair], params: &KernelParams) -> Result<()> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::param("tile has no pairs"));
    }
    params.check_tile(pairs.len())?;
    pairs.iter().try_for_each(check_velocity)
}

/// A tile of pairs, one sweep, one coalesced fetch per trace.
pub fn accumulate_tile_blocked<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    params: &KernelParams,
    source: &mut S,
) -> Result<Vec<PairAccumulator>> {
    check_tile(pairs, params)?;
    let mut accs = vec![PairAccumulator::new(params.w); pairs.len()];
    sweep_tile(sweep, pairs, params.w, source, |i, buf, k, x| {
        accs[i].add_window(buf, k, x)
    })?;
    Ok(accs)
}

pub fn scan_tile_blocked<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    params: &KernelParams,
    source: &mut S,
) -> Result<Vec<SemblanceResult>> {
    Ok(accumulate_tile_blocked(sweep, pairs, params, source)?
        .iter()
        .map(finalize)
        .collect())
}

/// Blocked sweep with the window loop in lane groups of `params.lanes`.
pub fn accumulate_tile_vectorized<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    params: &KernelParams,
    source: &mut S,
) -> Result<Vec<PairAccumulator>> {
    accumulate_tile_vectorized_padded(sweep, pairs, params, PadFill::Replicate, source)
}

/// [`accumulate_tile_vectorized`] with an explicit choice of what the
/// padded lanes load. Outputs do not depend on it.
pub fn accumulate_tile_vectorized_padded<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    params: &KernelParams,
    pad: PadFill,
    source: &mut S,
) -> Result<Vec<PairAccumulator>> {
    check_tile(pairs, params)?;
    match params.lanes {
        4 => vector::accumulate::<4, S>(sweep, pairs, params.w, pad, source),
        8 => vector::accumulate::<8, S>(sweep, pairs, params.w, pad, source),
        l => Err(Error::config(format!("lane width must be 4 or 8, got {l}"))),
    }
}

pub fn scan_tile_vectorized<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    params: &KernelParams,
    source: &mut S,
) -> Result<Vec<SemblanceResult>> {
    Ok(accumulate_tile_vectorized(sweep, pairs, params, source)?
        .iter()
        .map(finalize)
        .collect())
}

#[cfg(test)]
mod tests;
