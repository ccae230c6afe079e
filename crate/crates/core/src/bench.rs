//! Throughput measurement in semblance-trace/s, thread-scaling sweeps and
//! the roofline operational-intensity model.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::cmp::{run_cmp, KernelVariant, ScanConfig, SemblanceMatrix};
use crate::crs::{run_crs, CrsOptions};
use crate::data::{read_dataset, Dataset};
use crate::error::{Error, Result};

/// Flop and byte constants of the operational-intensity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflineConstants {
    pub base_flops: f64,
    pub flops_per_sample: f64,
    pub bytes_per_sample: f64,
}

impl Default for RooflineConstants {
    fn default() -> Self {
        Self {
            base_flops: 12.0,
            flops_per_sample: 7.0,
            bytes_per_sample: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflineInput {
    /// Pairs per sweep.
    pub tile: f64,
    pub w: f64,
    /// Samples per coalesced fetch.
    pub size_get: f64,
}

impl RooflineInput {
    /// Takes `size_get` from measured cache counters.
    pub fn from_stats(tile: usize, w: usize, stats: &CacheStats) -> Result<Self> {
        let size_get = stats
            .size_get()
            .ok_or_else(|| Error::param("no fetches recorded, size_get is undefined"))?;
        Ok(Self {
            tile: tile as f64,
            w: w as f64,
            size_get,
        })
    }
}

/// `tile * (12 + 7 w) / (size_get * 4)` flops per byte.
pub fn operational_intensity(input: &RooflineInput) -> Result<f64> {
    operational_intensity_with(input, &RooflineConstants::default())
}

pub fn operational_intensity_with(input: &RooflineInput, k: &RooflineConstants) -> Result<f64> {
    for (name, v) in [("tile", input.tile), ("w", input.w), ("size_get", input.size_get)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
    }
    if !(k.bytes_per_sample > 0.0) {
        return Err(Error::param("bytes per sample must be positive"));
    }
    Ok(input.tile * (k.base_flops + k.flops_per_sample * input.w) / (input.size_get * k.bytes_per_sample))
}

pub fn throughput(semblance_traces: u64, elapsed_s: f64) -> Result<f64> {
    if !(elapsed_s > 0.0) {
        return Err(Error::param(format!("elapsed time must be positive, got {elapsed_s}")));
    }
    Ok(semblance_traces as f64 / elapsed_s)
}

#[derive(Debug, Clone)]
pub enum BenchMode {
    Cmp,
    Crs(CrsOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: String,
    pub kernel: KernelVariant,
    pub workers: usize,
    pub repeats: usize,
    pub ncdps: usize,
    /// Valid curve/trace intersections of one run.
    pub semblance_traces: u64,
    /// Median compute time of the measured repeats, in seconds.
    pub elapsed: f64,
    pub runs: Vec<f64>,
    pub throughput: f64,
    pub cache: CacheStats,
    pub tile: usize,
    pub operational_intensity: Option<f64>,
    pub config: ScanConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apm: Option<f64>,
}

fn run_once(
    dataset: &Dataset,
    config: &ScanConfig,
    mode: &BenchMode,
    workers: usize,
) -> Result<Vec<SemblanceMatrix>> {
    match mode {
        BenchMode::Cmp => run_cmp(dataset, config, workers),
        BenchMode::Crs(opts) => {
            let mut opts = opts.clone();
            opts.workers_per_shard = workers;
            Ok(run_crs(dataset, config, &opts)?.matrices)
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// One discarded warm-up run, then the median of `repeats` timed runs.
pub fn bench(
    dataset: &Dataset,
    config: &ScanConfig,
    mode: &BenchMode,
    workers: usize,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::param("repeats must be at least 1"));
    }
    let scan = config.resolve()?;
    let warm = run_once(dataset, config, mode, workers)?;
    let semblance_traces: u64 = warm.iter().map(|m| m.valid_hits).sum();
    let cache = CacheStats::sum(warm.iter().map(|m| &m.cache));
    if cache.naive_fetches != semblance_traces {
        return Err(Error::Internal(format!(
            "valid-hit count {semblance_traces} disagrees with kernel counter {}",
            cache.naive_fetches
        )));
    }
    drop(warm);

    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = run_once(dataset, config, mode, workers)?;
        runs.push(start.elapsed().as_secs_f64());
        drop(out);
    }
    let elapsed = median(runs.clone()).max(f64::MIN_POSITIVE);
    let tile = match config.kernel {
        KernelVariant::Baseline => 1,
        _ => scan.tile,
    };
    let operational_intensity = RooflineInput::from_stats(tile, config.window, &cache)
        .and_then(|i| operational_intensity(&i))
        .ok();
    let (mode_name, grid, apm) = match mode {
        BenchMode::Cmp => ("cmp", None, None),
        BenchMode::Crs(o) => ("crs", Some(o.grid), Some(o.apm)),
    };
    Ok(BenchReport {
        mode: mode_name.to_string(),
        kernel: config.kernel,
        workers,
        repeats,
        ncdps: dataset.ncdps(),
        semblance_traces,
        elapsed,
        runs,
        throughput: throughput(semblance_traces, elapsed)?,
        cache,
        tile,
        operational_intensity,
        config: config.clone(),
        grid,
        apm,
    })
}

/// Reads the dataset first so I/O errors surface before any timing.
pub fn bench_file(
    path: impl AsRef<Path>,
    config: &ScanConfig,
    mode: &BenchMode,
    workers: usize,
    repeats: usize,
) -> Result<BenchReport> {
    let dataset = read_dataset(path)?;
    bench(&dataset, config, mode, workers, repeats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub workers: usize,
    pub throughput: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

/// Throughput for each worker count, relative to the first entry.
pub fn scaling_sweep(
    dataset: &Dataset,
    config: &ScanConfig,
    mode: &BenchMode,
    workers: &[usize],
    repeats: usize,
) -> Result<Vec<ScalingRow>> {
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(workers.len());
    for &n in workers {
        let r = bench(dataset, config, mode, n, repeats)?;
        let (base_t, base_n) = rows
            .first()
            .map_or((r.throughput, n), |b| (b.throughput, b.workers));
        let speedup = r.throughput / base_t;
        rows.push(ScalingRow {
            workers: n,
            throughput: r.throughput,
            speedup,
            efficiency: speedup * base_n as f64 / n as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_gather;

    #[test]
    fn intensity_examples() {
        let i = RooflineInput {
            tile: 1.0,
            w: 4.0,
            size_get: 10.0,
        };
        assert_eq!(operational_intensity(&i).unwrap(), 1.0);
        let doubled = RooflineInput { tile: 2.0, ..i };
        assert_eq!(operational_intensity(&doubled).unwrap(), 2.0);
        for bad in [0.0, -1.0, f64::NAN] {
            assert!(operational_intensity(&RooflineInput { size_get: bad, ..i }).is_err());
            assert!(operational_intensity(&RooflineInput { tile: bad, ..i }).is_err());
        }
        let k = RooflineConstants {
            base_flops: 0.0,
            flops_per_sample: 1.0,
            bytes_per_sample: 1.0,
        };
        assert_eq!(operational_intensity_with(&i, &k).unwrap(), 0.4);
    }

    #[test]
    fn throughput_example() {
        assert_eq!(throughput(2 * 3 * 4 * 5, 1.0).unwrap(), 120.0);
        assert!(throughput(10, 0.0).is_err());
    }

    #[test]
    fn bench_counts_valid_hits() {
        let ds = Dataset::new(
            (0..2).map(|i| random_gather(i, 3, 64, 1000, 20.0, 0.0, 0.0)).collect(),
            3,
            None,
        )
        .unwrap();
        let cfg = ScanConfig {
            nc: 5,
            window: 3,
            ..ScanConfig::default()
        };
        let r = bench(&ds, &cfg, &BenchMode::Cmp, 1, 3).unwrap();
        let expect: u64 = run_cmp(&ds, &cfg, 1).unwrap().iter().map(|m| m.valid_hits).sum();
        assert_eq!(r.semblance_traces, expect);
        assert!(expect > 0 && expect <= 2 * 3 * 64 * 5);
        assert_eq!(r.runs.len(), 3);
        assert_eq!(r.throughput, r.semblance_traces as f64 / r.elapsed);
        assert!(r.operational_intensity.unwrap() > 0.0);
        assert!(bench(&ds, &cfg, &BenchMode::Cmp, 1, 0).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
