//! Coalesced sample fetching.
//!
//! While sweeping a trace, a tile of (sample, velocity) pairs each needs a
//! short window of `w + 1` samples somewhere on that trace. Instead of one
//! fetch per pair, [`plan_fetch`] computes the single contiguous range that
//! covers every valid window and [`TraceCache::fetch_range`] copies it once
//! into a worker-local buffer. [`CacheStats`] counts what was fetched next to
//! what a per-pair scheme would have fetched, so the saving is measurable.
//!
//! Half-offsets are read in blocks of `size_h` traces, refilled whenever a
//! sweep crosses a block boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traveltime::{CurveHit, Halfpoint};

pub const DEFAULT_SIZE_H: usize = 64;
pub const DEFAULT_MAX_RANGE: usize = 4096;

/// A contiguous sample range covering a batch of windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchPlan {
    /// Smallest window start in the batch.
    pub min_la: usize,
    /// Largest window start in the batch.
    pub max_lb: usize,
    /// `max_lb - min_la + w + 1`: last window plus its interpolation neighbor.
    pub length: usize,
    /// Number of valid hits this plan serves.
    pub hits: usize,
}

impl FetchPlan {
    pub fn end(&self) -> usize {
        self.min_la + self.length
    }
}

/// Plans one fetch for every valid hit, or `None` if no hit is valid.
pub fn plan_fetch(hits: &[CurveHit], w: usize) -> Option<FetchPlan> {
    let mut count = 0usize;
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for h in hits.iter().filter(|h| h.valid) {
        lo = lo.min(h.k1);
        hi = hi.max(h.k1);
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let (min_la, max_lb) = (lo as usize, hi as usize);
    Some(FetchPlan {
        min_la,
        max_lb,
        length: max_lb - min_la + w + 1,
        hits: count,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    /// Coalesced range fetches issued.
    pub range_fetches: u64,
    /// Samples moved by all fetches, coalesced or not.
    pub samples_fetched: u64,
    pub halfpoint_blocks: u64,
    /// Window fetches a per-pair scheme would have issued (one per valid hit).
    pub naive_fetches: u64,
    /// Per-hit fetches issued because a merged range exceeded the cap.
    pub fallback_fetches: u64,
}

impl CacheStats {
    pub fn merge(&mut self, other: &CacheStats) {
        self.range_fetches += other.range_fetches;
        self.samples_fetched += other.samples_fetched;
        self.halfpoint_blocks += other.halfpoint_blocks;
        self.naive_fetches += other.naive_fetches;
        self.fallback_fetches += other.fallback_fetches;
    }

    /// Mean samples per fetch.
    pub fn size_get(&self) -> Option<f64> {
        let fetches = self.range_fetches + self.fallback_fetches;
        (fetches > 0).then(|| self.samples_fetched as f64 / fetches as f64)
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a CacheStats>) -> CacheStats {
        let mut total = CacheStats::default();
        for s in items {
            total.merge(s);
        }
        total
    }
}

/// Where kernels get half-offsets and sample ranges from.
pub trait SampleSource {
    /// Called before each sweep over the traces.
    fn begin_sweep(&mut self) {}

    fn halfpoint(&mut self, trace_index: usize, all: &[Halfpoint]) -> Result<Halfpoint>;

    /// The samples `[plan.min_la, plan.end())` of `samples`.
    fn fetch<'a>(&'a mut self, samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]>;

    /// Single-window fetch used when a merged range would be too long.
    fn fetch_window<'a>(&'a mut self, samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]> {
        self.fetch(samples, plan)
    }

    /// Longest range the source will fetch in one piece.
    fn max_range(&self) -> usize {
        usize::MAX
    }
}

fn slice_for<'a>(samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]> {
    samples.get(plan.min_la..plan.end()).ok_or_else(|| {
        Error::Internal(format!(
            "fetch of [{}, {}) outside trace of {} samples",
            plan.min_la,
            plan.end(),
            samples.len()
        ))
    })
}

/// Reads straight from the trace with no copying or accounting.
#[derive(Debug, Default, Clone, Copy)]
pub struct DirectAccess;

impl SampleSource for DirectAccess {
    fn halfpoint(&mut self, trace_index: usize, all: &[Halfpoint]) -> Result<Halfpoint> {
        all.get(trace_index)
            .copied()
            .ok_or_else(|| Error::param(format!("trace index {trace_index} out of range")))
    }

    fn fetch<'a>(&'a mut self, samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]> {
        slice_for(samples, plan)
    }
}

#[derive(Debug, Clone)]
pub struct HalfpointBlock {
    size_h: usize,
    start: usize,
    block: Vec<Halfpoint>,
}

impl HalfpointBlock {
    pub fn new(size_h: usize) -> Result<Self> {
        if size_h == 0 {
            return Err(Error::param("size_h must be at least 1"));
        }
        Ok(Self {
            size_h,
            start: 0,
            block: Vec::with_capacity(size_h),
        })
    }

    pub fn size_h(&self) -> usize {
        self.size_h
    }

    fn invalidate(&mut self) {
        self.block.clear();
    }

    /// Returns the halfpoint and whether the block had to be refilled.
    fn get(&mut self, index: usize, all: &[Halfpoint]) -> Result<(Halfpoint, bool)> {
        if index >= all.len() {
            return Err(Error::param(format!(
                "trace index {index} out of range for {} halfpoints",
                all.len()
            )));
        }
        let covered = index >= self.start && index < self.start + self.block.len();
        let refill = index.is_multiple_of(self.size_h) || !covered;
        if refill {
            self.start = index - index % self.size_h;
            let end = (self.start + self.size_h).min(all.len());
            self.block.clear();
            self.block.extend_from_slice(&all[self.start..end]);
        }
        Ok((self.block[index - self.start], refill))
    }
}

/// Worker-local coalescing cache with fetch accounting.
#[derive(Debug, Clone)]
pub struct TraceCache {
    stats: CacheStats,
    halfpoints: HalfpointBlock,
    buffer: Vec<f32>,
    max_range: usize,
}

impl TraceCache {
    pub fn new(size_h: usize, max_range: usize) -> Result<Self> {
        if max_range == 0 {
            return Err(Error::param("max_range must be at least 1"));
        }
        Ok(Self {
            stats: CacheStats::default(),
            halfpoints: HalfpointBlock::new(size_h)?,
            buffer: Vec::new(),
            max_range,
        })
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn take_stats(&mut self) -> CacheStats {
        std::mem::take(&mut self.stats)
    }

    pub fn size_h(&self) -> usize {
        self.halfpoints.size_h()
    }

    /// Copies the planned range into the cache buffer.
    pub fn fetch_range(&mut self, samples: &[f32], plan: &FetchPlan) -> Result<&[f32]> {
        let src = slice_for(samples, plan)?;
        self.buffer.clear();
        self.buffer.extend_from_slice(src);
        self.stats.range_fetches += 1;
        self.stats.samples_fetched += plan.length as u64;
        self.stats.naive_fetches += plan.hits as u64;
        Ok(&self.buffer)
    }

    pub fn halfpoints_for(&mut self, trace_index: usize, all: &[Halfpoint]) -> Result<Halfpoint> {
        let (hp, refilled) = self.halfpoints.get(trace_index, all)?;
        if refilled {
            self.stats.halfpoint_blocks += 1;
        }
        Ok(hp)
    }
}

impl Default for TraceCache {
    fn default() -> Self {
        Self::new(DEFAULT_SIZE_H, DEFAULT_MAX_RANGE).expect("default cache parameters are valid")
    }
}

impl SampleSource for TraceCache {
    fn begin_sweep(&mut self) {
        self.halfpoints.invalidate();
    }

    fn halfpoint(&mut self, trace_index: usize, all: &[Halfpoint]) -> Result<Halfpoint> {
        self.halfpoints_for(trace_index, all)
    }

    fn fetch<'a>(&'a mut self, samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]> {
        self.fetch_range(samples, plan)
    }

    fn fetch_window<'a>(&'a mut self, samples: &'a [f32], plan: &FetchPlan) -> Result<&'a [f32]> {
        let src = slice_for(samples, plan)?;
        self.buffer.clear();
        self.buffer.extend_from_slice(src);
        self.stats.fallback_fetches += 1;
        self.stats.samples_fetched += plan.length as u64;
        self.stats.naive_fetches += plan.hits as u64;
        Ok(&self.buffer)
    }

    fn max_range(&self) -> usize {
        self.max_range
    }
}
