//! CMP grid search: every (sample, velocity) pair of a gather, best-velocity
//! picks, and a CDP-granular worker pool.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheStats, SampleSource, TraceCache, DEFAULT_MAX_RANGE, DEFAULT_SIZE_H};
use crate::data::{CdpGather, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{
    accumulate_pair_baseline, accumulate_tile_blocked, accumulate_tile_vectorized, finalize,
    KernelParams, SearchPair, SemblanceResult, TraceSweep, DEFAULT_LANES, DEFAULT_SCRATCH_BYTES,
};
use crate::traveltime::VelocityGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    Baseline,
    Blocked,
    #[serde(rename = "simd")]
    Vectorized,
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelVariant::Baseline => "baseline",
            KernelVariant::Blocked => "blocked",
            KernelVariant::Vectorized => "simd",
        })
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(KernelVariant::Baseline),
            "blocked" => Ok(KernelVariant::Blocked),
            "simd" | "vectorized" => Ok(KernelVariant::Vectorized),
            other => Err(Error::param(format!("unknown kernel variant {other:?}"))),
        }
    }
}

/// The search grid and kernel knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub vmin: f64,
    pub vmax: f64,
    pub nc: usize,
    /// Window length `w` in samples.
    pub window: usize,
    /// Pairs per sweep; derived from the scratch budget when `None`.
    pub tile_size: Option<usize>,
    pub lanes: usize,
    pub kernel: KernelVariant,
    pub size_h: usize,
    pub scratch_bytes: usize,
    /// Longest coalesced range before falling back to per-window fetches.
    pub max_range: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            vmin: 2000.0,
            vmax: 3000.0,
            nc: 64,
            window: 11,
            tile_size: None,
            lanes: DEFAULT_LANES,
            kernel: KernelVariant::Vectorized,
            size_h: DEFAULT_SIZE_H,
            scratch_bytes: DEFAULT_SCRATCH_BYTES,
            max_range: DEFAULT_MAX_RANGE,
        }
    }
}

/// A validated [`ScanConfig`].
#[derive(Debug, Clone)]
pub struct ResolvedScan {
    pub grid: VelocityGrid,
    pub params: KernelParams,
    pub tile: usize,
    pub kernel: KernelVariant,
    pub size_h: usize,
    pub max_range: usize,
}

impl ResolvedScan {
    pub fn new_cache(&self) -> TraceCache {
        TraceCache::new(self.size_h, self.max_range).expect("validated cache parameters")
    }
}

impl ScanConfig {
    pub fn resolve(&self) -> Result<ResolvedScan> {
        let grid = VelocityGrid::new(self.vmin, self.vmax, self.nc)
            .map_err(|e| Error::config(e.to_string()))?;
        let params = KernelParams::new(self.window, self.lanes, self.scratch_bytes)?;
        let tile = match self.tile_size {
            Some(t) => {
                params.check_tile(t)?;
                t
            }
            None => params.max_tile(),
        };
        if self.size_h == 0 {
            return Err(Error::config("size_h must be at least 1"));
        }
        if self.max_range == 0 {
            return Err(Error::config("max_range must be at least 1"));
        }
        Ok(ResolvedScan {
            grid,
            params,
            tile,
            kernel: self.kernel,
            size_h: self.size_h,
            max_range: self.max_range,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub index: usize,
    pub velocity: f64,
    pub semblance: f64,
}

/// `ns x nc` semblance values of one CDP plus per-sample picks.
#[derive(Debug, Clone, PartialEq)]
pub struct SemblanceMatrix {
    pub cdp_id: u32,
    pub ns: usize,
    pub velocities: Vec<f64>,
    /// Row-major, `values[k * nc + c]`.
    pub values: Vec<f64>,
    pub best: Vec<Pick>,
    /// Stacked amplitude at the picked velocity.
    pub stack_trace: Vec<f64>,
    /// Valid curve/trace intersections over all pairs.
    pub valid_hits: u64,
    /// Traces in the sweep (central plus neighbors for CRS).
    pub traces: usize,
    pub cache: CacheStats,
}

impl SemblanceMatrix {
    pub fn nc(&self) -> usize {
        self.velocities.len()
    }

    pub fn value(&self, sample: usize, c: usize) -> f64 {
        self.values[sample * self.nc() + c]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let nc = self.nc();
        &self.values[sample * nc..(sample + 1) * nc]
    }

    fn from_results(
        cdp_id: u32,
        ns: usize,
        traces: usize,
        grid: &VelocityGrid,
        results: &[SemblanceResult],
        cache: CacheStats,
    ) -> Self {
        let nc = grid.len();
        let values: Vec<f64> = results.iter().map(|r| r.semblance).collect();
        let mut best = Vec::with_capacity(ns);
        let mut stack_trace = Vec::with_capacity(ns);
        for k in 0..ns {
            let row = &results[k * nc..(k + 1) * nc];
            let mut c_best = 0;
            for (c, r) in row.iter().enumerate().skip(1) {
                if r.semblance > row[c_best].semblance {
                    c_best = c;
                }
            }
            best.push(Pick {
                index: c_best,
                velocity: grid.values()[c_best],
                semblance: row[c_best].semblance,
            });
            stack_trace.push(row[c_best].stack);
        }
        Self {
            cdp_id,
            ns,
            velocities: grid.values().to_vec(),
            values,
            best,
            stack_trace,
            valid_hits: results.iter().map(|r| r.m_used).sum(),
            traces,
            cache,
        }
    }
}

/// All `ns * nc` pairs in row-major (sample, velocity) order.
pub fn search_pairs(ns: usize, grid: &VelocityGrid) -> Vec<SearchPair> {
    (0..ns)
        .flat_map(|sample| {
            grid.values()
                .iter()
                .map(move |&velocity| SearchPair { sample, velocity })
        })
        .collect()
}

pub(crate) fn scan_sweep<S: SampleSource>(
    sweep: &TraceSweep<'_>,
    scan: &ResolvedScan,
    source: &mut S,
) -> Result<Vec<SemblanceResult>> {
    let pairs = search_pairs(sweep.ns(), &scan.grid);
    let mut out = Vec::with_capacity(pairs.len());
    match scan.kernel {
        KernelVariant::Baseline => {
            for &p in &pairs {
                let acc = accumulate_pair_baseline(sweep, p, scan.params.w, source)?;
                out.push(finalize(&acc));
            }
        }
        KernelVariant::Blocked => {
            for tile in pairs.chunks(scan.tile) {
                let accs = accumulate_tile_blocked(sweep, tile, &scan.params, source)?;
                out.extend(accs.iter().map(finalize));
            }
        }
        KernelVariant::Vectorized => {
            for tile in pairs.chunks(scan.tile) {
                let accs = accumulate_tile_vectorized(sweep, tile, &scan.params, source)?;
                out.extend(accs.iter().map(finalize));
            }
        }
    }
    Ok(out)
}

pub(crate) fn scan_sweep_matrix(
    cdp_id: u32,
    sweep: &TraceSweep<'_>,
    scan: &ResolvedScan,
    cache: &mut TraceCache,
) -> Result<SemblanceMatrix> {
    let results = scan_sweep(sweep, scan, cache)?;
    Ok(SemblanceMatrix::from_results(
        cdp_id,
        sweep.ns(),
        sweep.len(),
        &scan.grid,
        &results,
        cache.take_stats(),
    ))
}

pub(crate) fn scan_resolved(
    gather: &CdpGather,
    scan: &ResolvedScan,
    cache: &mut TraceCache,
) -> Result<SemblanceMatrix> {
    if gather.is_empty() {
        return Err(Error::Precondition(format!("cdp {} has no traces", gather.cdp_id)));
    }
    scan_sweep_matrix(gather.cdp_id, &TraceSweep::from_gather(gather), scan, cache)
}

/// Semblance matrix of one gather with the configured kernel variant.
pub fn scan_cdp(gather: &CdpGather, config: &ScanConfig) -> Result<SemblanceMatrix> {
    let scan = config.resolve()?;
    scan_resolved(gather, &scan, &mut scan.new_cache())
}

/// Runs `job` over `0..n` on `workers` threads pulling indices from a shared
/// counter. Each worker owns a cache. Output order matches index order.
pub(crate) fn run_pool<T, F>(n: usize, workers: usize, scan: &ResolvedScan, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut TraceCache) -> Result<T> + Sync,
{
    if workers == 0 {
        return Err(Error::param("workers must be at least 1"));
    }
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let mut failure: Option<String> = None;

    thread::scope(|s| {
        let handles: Vec<_> = (0..workers.min(n.max(1)))
            .map(|_| {
                s.spawn(|| {
                    let mut cache = scan.new_cache();
                    let mut done = Vec::new();
                    loop {
                        if abort.load(Ordering::Relaxed) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        let r = job(i, &mut cache);
                        if r.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        done.push((i, r));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            match h.join() {
                Ok(done) => {
                    for (i, r) in done {
                        match r {
                            Ok(v) => slots[i] = Some(v),
                            Err(e) => {
                                failure.get_or_insert_with(|| format!("item {i}: {e}"));
                            }
                        }
                    }
                }
                Err(_) => {
                    abort.store(true, Ordering::Relaxed);
                    failure.get_or_insert_with(|| "worker thread panicked".to_string());
                }
            }
        }
    });

    let completed = slots.iter().filter(|s| s.is_some()).count();
    if let Some(reason) = failure {
        return Err(Error::WorkerPool {
            completed,
            total: n,
            reason,
        });
    }
    Ok(slots.into_iter().map(|s| s.expect("every index processed")).collect())
}

/// Semblance matrices for every CDP, in dataset order.
pub fn run_cmp(dataset: &Dataset, config: &ScanConfig, workers: usize) -> Result<Vec<SemblanceMatrix>> {
    let scan = config.resolve()?;
    if workers == 0 {
        return Err(Error::param("workers must be at least 1"));
    }
    run_pool(dataset.ncdps(), workers, &scan, |i, cache| {
        scan_resolved(&dataset.gathers[i], &scan, cache)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, ReflectorEvent, ReflectorSpec, SynthSpec, Trace};
    use crate::testutil::random_gather;

    fn small_config(kernel: KernelVariant) -> ScanConfig {
        ScanConfig {
            nc: 16,
            window: 5,
            kernel,
            tile_size: Some(24),
            ..ScanConfig::default()
        }
    }

    #[test]
    fn zero_gather_picks_first_velocity() {
        let traces = (0..4)
            .map(|i| Trace::new(0.0, 0.0, 10.0 * i as f32, 0.0, vec![0.0; 40]))
            .collect();
        let g = CdpGather::new(0, 40, 1000, traces).unwrap();
        let m = scan_cdp(&g, &small_config(KernelVariant::Vectorized)).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
        assert!(m.best.iter().all(|p| p.index == 0 && p.velocity == 2000.0));
    }

    #[test]
    fn planted_velocity_is_picked_exactly() {
        let spec = SynthSpec {
            fold: 30,
            ns: 500,
            dt_us: 2000,
            reflectors: ReflectorSpec {
                events: vec![ReflectorEvent {
                    t0: 0.6,
                    velocity: 2500.0,
                    amplitude: 1.0,
                }],
                vmin: 2000.0,
                vmax: 3000.0,
            },
            offset_step: Some(60.0),
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let cfg = ScanConfig {
            nc: 101,
            window: 11,
            ..ScanConfig::default()
        };
        let m = scan_cdp(&ds.gathers[0], &cfg).unwrap();
        assert_eq!(m.best[300].velocity, 2500.0);
    }

    #[test]
    fn variants_agree_on_picks() {
        let g = random_gather(31, 12, 120, 1000, 200.0, 0.0, 0.0);
        let base = scan_cdp(&g, &small_config(KernelVariant::Baseline)).unwrap();
        for kernel in [KernelVariant::Blocked, KernelVariant::Vectorized] {
            let m = scan_cdp(&g, &small_config(kernel)).unwrap();
            assert_eq!(m.valid_hits, base.valid_hits);
            for k in 0..g.ns {
                if m.best[k].index != base.best[k].index {
                    let mut row = base.row(k).to_vec();
                    row.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    assert!((row[0] - row[1]) / row[0] < 1e-4, "sample {k}");
                }
            }
            for (a, b) in m.values.iter().zip(&base.values) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let gathers: Vec<_> = (0..6)
            .map(|i| random_gather(40 + i, 6, 80, 1000, 100.0, 0.0, 0.0))
            .collect();
        let ds = Dataset::new(gathers, 6, None).unwrap();
        let cfg = small_config(KernelVariant::Vectorized);
        let one = run_cmp(&ds, &cfg, 1).unwrap();
        for workers in [2, 3, 8] {
            assert_eq!(run_cmp(&ds, &cfg, workers).unwrap(), one);
        }
        assert_eq!(one.iter().map(|m| m.cdp_id).collect::<Vec<_>>(), vec![40, 41, 42, 43, 44, 45]);
    }

    #[test]
    fn empty_dataset_and_bad_inputs() {
        let cfg = small_config(KernelVariant::Blocked);
        assert!(run_cmp(&Dataset::empty(), &cfg, 4).unwrap().is_empty());
        assert!(run_cmp(&Dataset::empty(), &cfg, 0).is_err());
        let bad = ScanConfig {
            tile_size: Some(1 << 20),
            ..cfg.clone()
        };
        assert!(matches!(run_cmp(&Dataset::empty(), &bad, 1), Err(Error::Config(_))));
        let g = CdpGather::new(0, 10, 1000, vec![]).unwrap();
        assert!(matches!(scan_cdp(&g, &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn tile_partitioning_does_not_change_results() {
        let g = random_gather(50, 8, 90, 1000, 120.0, 0.0, 0.0);
        let mut reference = None;
        for tile in [1, 7, 16, 100, 500] {
            let cfg = ScanConfig {
                tile_size: Some(tile),
                ..small_config(KernelVariant::Blocked)
            };
            let mut m = scan_cdp(&g, &cfg).unwrap();
            m.cache = CacheStats::default();
            match &reference {
                None => reference = Some(m),
                Some(r) => assert_eq!(&m, r, "tile {tile}"),
            }
        }
    }

    #[test]
    fn kernel_variant_names() {
        for v in [KernelVariant::Baseline, KernelVariant::Blocked, KernelVariant::Vectorized] {
            assert_eq!(v.to_string().parse::<KernelVariant>().unwrap(), v);
        }
        assert!("avx".parse::<KernelVariant>().is_err());
    }
}
