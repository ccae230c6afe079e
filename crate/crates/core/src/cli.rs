//! `semblance` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    bench, operational_intensity_with, scaling_sweep, BenchMode, RooflineConstants, RooflineInput,
};
use crate::cache::{CacheStats, DEFAULT_MAX_RANGE, DEFAULT_SIZE_H};
use crate::cmp::{run_cmp, KernelVariant, ScanConfig, SemblanceMatrix};
use crate::crs::{run_crs, CrsOptions};
use crate::data::{
    generate_synthetic, read_dataset, write_dataset, Dataset, ReflectorEvent, ReflectorSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::kernel::{DEFAULT_LANES, DEFAULT_SCRATCH_BYTES};
use crate::oracle::{compare, reference_cmp, reference_crs};
use crate::output::write_picks_file;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "semblance", version, about = "CMP/CRS semblance velocity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic SSF1 dataset.
    Gen(GenArgs),
    /// CMP velocity scan of every gather.
    Cmp(RunArgs),
    /// CRS scan over a sharded midpoint grid.
    Crs(CrsArgs),
    /// Compare a pipeline run against the sequential oracle.
    Verify(VerifyArgs),
    /// Measure throughput in semblance-trace/s.
    Bench(BenchArgs),
    /// Operational intensity of the tiled kernel.
    Roofline(RooflineArgs),
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    ncdps: usize,
    #[arg(long, default_value_t = 60)]
    fold: usize,
    #[arg(long, default_value_t = 550)]
    ns: usize,
    /// Sampling interval in microseconds.
    #[arg(long, default_value_t = 220)]
    dt: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Peak amplitude over noise sigma; noise-free when omitted.
    #[arg(long)]
    snr: Option<f64>,
    /// Ricker peak frequency in Hz.
    #[arg(long, default_value_t = 25.0)]
    freq: f64,
    /// Events as `t0:velocity[:amplitude]`, comma separated. Three events
    /// spread over the record when omitted.
    #[arg(long, value_delimiter = ',')]
    events: Vec<String>,
    /// Offset increment in meters.
    #[arg(long)]
    offset_step: Option<f64>,
    /// Distance between neighboring CDP midpoints in meters.
    #[arg(long, default_value_t = 25.0)]
    cdp_spacing: f64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 2000.0)]
    vmin: f64,
    #[arg(long, default_value_t = 3000.0)]
    vmax: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct ScanArgs {
    #[arg(long, default_value_t = 2000.0)]
    vmin: f64,
    #[arg(long, default_value_t = 3000.0)]
    vmax: f64,
    #[arg(long, default_value_t = 64)]
    nc: usize,
    #[arg(long, default_value_t = 11)]
    window: usize,
    /// Pairs per sweep; derived from the scratch budget when omitted.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LANES)]
    lanes: usize,
    #[arg(long, default_value_t = DEFAULT_SIZE_H)]
    size_h: usize,
    #[arg(long, default_value_t = DEFAULT_SCRATCH_BYTES / 1024)]
    scratch_kb: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_RANGE)]
    max_range: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Simd)]
    kernel: KernelArg,
    #[arg(long, env = "SEMBLANCE_THREADS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Baseline,
    Blocked,
    Simd,
}

impl From<KernelArg> for KernelVariant {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Baseline => KernelVariant::Baseline,
            KernelArg::Blocked => KernelVariant::Blocked,
            KernelArg::Simd => KernelVariant::Vectorized,
        }
    }
}

impl ScanArgs {
    fn config(&self) -> ScanConfig {
        ScanConfig {
            vmin: self.vmin,
            vmax: self.vmax,
            nc: self.nc,
            window: self.window,
            tile_size: self.tile,
            lanes: self.lanes,
            kernel: self.kernel.into(),
            size_h: self.size_h,
            scratch_bytes: self.scratch_kb.saturating_mul(1024),
            max_range: self.max_range,
        }
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// SSF1 dataset.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    scan: ScanArgs,
    /// SMB1 pick file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the full semblance matrices in the output.
    #[arg(long)]
    matrix: bool,
    /// Include cache counters in the report.
    #[arg(long)]
    stats: bool,
}

#[derive(Debug, Args)]
struct ShardArgs {
    /// Shard grid as GXxGY.
    #[arg(long, default_value = "1x1", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Neighborhood radius in meters.
    #[arg(long)]
    apm: f64,
    /// Seconds to wait for a halo before reporting a deadlock.
    #[arg(long, default_value_t = 120.0)]
    halo_timeout: f64,
}

impl ShardArgs {
    fn options(&self, workers: usize) -> Result<CrsOptions> {
        if !(self.halo_timeout > 0.0 && self.halo_timeout.is_finite()) {
            return Err(Error::param("halo timeout must be positive"));
        }
        let mut o = CrsOptions::new(self.grid, self.apm);
        o.workers_per_shard = workers;
        o.halo_timeout = Duration::from_secs_f64(self.halo_timeout);
        Ok(o)
    }
}

#[derive(Debug, Args)]
struct CrsArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    shards: ShardArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Cmp,
    Crs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Cmp)]
    mode: Mode,
    #[command(flatten)]
    scan: ScanArgs,
    #[arg(long, default_value = "1x1", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long)]
    apm: Option<f64>,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// SSF1 dataset; a synthetic one is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, value_enum, default_value_t = Mode::Cmp)]
    mode: Mode,
    #[command(flatten)]
    scan: ScanArgs,
    #[arg(long, default_value = "1x1", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long)]
    apm: Option<f64>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Worker counts for a scaling sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
    #[arg(long)]
    stats: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RooflineArgs {
    #[arg(long)]
    w: Option<f64>,
    /// Samples per fetch; measured from a run over `--input` when omitted.
    #[arg(long)]
    size_get: Option<f64>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    scan: ScanArgs,
    #[arg(long, default_value_t = 12.0)]
    base_flops: f64,
    #[arg(long, default_value_t = 7.0)]
    flops_per_sample: f64,
    #[arg(long, default_value_t = 4.0)]
    bytes_per_sample: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected GXxGY, got {s:?}"))?;
    let gx: usize = a.trim().parse().map_err(|e| format!("bad GX in {s:?}: {e}"))?;
    let gy: usize = b.trim().parse().map_err(|e| format!("bad GY in {s:?}: {e}"))?;
    if gx == 0 || gy == 0 {
        return Err(format!("grid dimensions must be at least 1, got {s:?}"));
    }
    Ok((gx, gy))
}

fn parse_event(s: &str) -> Result<ReflectorEvent> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|e| Error::param(format!("bad event {s:?}: {e}")))
    };
    match parts.as_slice() {
        [t0, v] => Ok(ReflectorEvent {
            t0: num(t0)?,
            velocity: num(v)?,
            amplitude: 1.0,
        }),
        [t0, v, a] => Ok(ReflectorEvent {
            t0: num(t0)?,
            velocity: num(v)?,
            amplitude: num(a)?,
        }),
        _ => Err(Error::param(format!("event {s:?} is not t0:velocity[:amplitude]"))),
    }
}

impl SynthArgs {
    fn spec(&self, vmin: f64, vmax: f64) -> Result<SynthSpec> {
        let mut spec = SynthSpec {
            ncdps: self.ncdps,
            fold: self.fold,
            ns: self.ns,
            dt_us: self.dt,
            seed: self.seed,
            snr: self.snr,
            peak_frequency: self.freq,
            offset_step: self.offset_step,
            cdp_spacing: self.cdp_spacing,
            ..SynthSpec::default()
        };
        spec.reflectors = if self.events.is_empty() {
            ReflectorSpec::spread(3, spec.record_length(), vmin, vmax)
        } else {
            ReflectorSpec {
                events: self
                    .events
                    .iter()
                    .map(|e| parse_event(e))
                    .collect::<Result<_>>()?,
                vmin,
                vmax,
            }
        };
        Ok(spec)
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GenReport<'a> {
    path: &'a PathBuf,
    ncdps: usize,
    fold: usize,
    ns: usize,
    dt_us: u32,
    events: &'a [ReflectorEvent],
    bytes: u64,
}

#[derive(Serialize)]
struct RunReport {
    mode: &'static str,
    kernel: KernelVariant,
    workers: usize,
    ncdps: usize,
    elapsed: f64,
    semblance_traces: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache: Option<CacheStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
}

fn finish_run(
    mode: &'static str,
    args: &RunArgs,
    ds: &Dataset,
    matrices: &[SemblanceMatrix],
    elapsed: f64,
) -> Result<()> {
    if let Some(path) = &args.out {
        write_picks_file(path, matrices, args.matrix)?;
    }
    let report = RunReport {
        mode,
        kernel: args.scan.kernel.into(),
        workers: args.scan.workers(),
        ncdps: ds.ncdps(),
        elapsed,
        semblance_traces: matrices.iter().map(|m| m.valid_hits).sum(),
        cache: args
            .stats
            .then(|| CacheStats::sum(matrices.iter().map(|m| &m.cache))),
        output: args.out.clone(),
    };
    emit(&report, None)
}

fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let spec = a.synth.spec(a.vmin, a.vmax)?;
    let ds = generate_synthetic(&spec)?;
    write_dataset(&ds, &a.out)?;
    emit(
        &GenReport {
            path: &a.out,
            ncdps: ds.ncdps(),
            fold: ds.fold,
            ns: spec.ns,
            dt_us: spec.dt_us,
            events: &spec.reflectors.events,
            bytes: fs::metadata(&a.out)?.len(),
        },
        None,
    )?;
    Ok(EXIT_OK)
}

fn cmd_cmp(a: &RunArgs) -> Result<i32> {
    let ds = read_dataset(&a.input)?;
    let start = Instant::now();
    let out = run_cmp(&ds, &a.scan.config(), a.scan.workers())?;
    let elapsed = start.elapsed().as_secs_f64();
    finish_run("cmp", a, &ds, &out, elapsed)?;
    Ok(EXIT_OK)
}

fn cmd_crs(a: &CrsArgs) -> Result<i32> {
    let ds = read_dataset(&a.run.input)?;
    let opts = a.shards.options(a.run.scan.workers())?;
    let start = Instant::now();
    let out = run_crs(&ds, &a.run.scan.config(), &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    finish_run("crs", &a.run, &ds, &out.matrices, elapsed)?;
    Ok(EXIT_OK)
}

fn require_apm(mode: Mode, apm: Option<f64>) -> Result<f64> {
    match (mode, apm) {
        (Mode::Crs, None) => Err(Error::param("--apm is required in crs mode")),
        (_, a) => Ok(a.unwrap_or(0.0)),
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let ds = read_dataset(&a.input)?;
    let cfg = a.scan.config();
    let workers = a.scan.workers();
    let apm = require_apm(a.mode, a.apm)?;
    let (run, reference) = match a.mode {
        Mode::Cmp => (run_cmp(&ds, &cfg, workers)?, reference_cmp(&ds, &cfg)?),
        Mode::Crs => {
            let mut opts = CrsOptions::new(a.grid, apm);
            opts.workers_per_shard = workers;
            (run_crs(&ds, &cfg, &opts)?.matrices, reference_crs(&ds, &cfg, apm)?)
        }
    };
    let report = compare(&run, &reference)?;
    emit(&report, a.out.as_ref())?;
    Ok(if report.within(a.tolerance) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let cfg = a.scan.config();
    let ds = match &a.input {
        Some(path) => read_dataset(path)?,
        None => generate_synthetic(&a.synth.spec(cfg.vmin, cfg.vmax)?)?,
    };
    let mode = match a.mode {
        Mode::Cmp => BenchMode::Cmp,
        Mode::Crs => BenchMode::Crs(CrsOptions::new(a.grid, require_apm(a.mode, a.apm)?)),
    };
    if a.sweep.is_empty() {
        let mut report = bench(&ds, &cfg, &mode, a.scan.workers(), a.repeats)?;
        if !a.stats {
            report.cache = CacheStats::default();
        }
        emit(&report, a.out.as_ref())?;
    } else {
        let rows = scaling_sweep(&ds, &cfg, &mode, &a.sweep, a.repeats)?;
        emit(&rows, a.out.as_ref())?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RooflineReport {
    input: RooflineInput,
    constants: RooflineConstants,
    operational_intensity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache: Option<CacheStats>,
}

fn cmd_roofline(a: &RooflineArgs) -> Result<i32> {
    let constants = RooflineConstants {
        base_flops: a.base_flops,
        flops_per_sample: a.flops_per_sample,
        bytes_per_sample: a.bytes_per_sample,
    };
    let tile = a.scan.tile.map(|t| t as f64);
    let (input, cache) = match (&a.input, tile, a.w, a.size_get) {
        (_, Some(tile), Some(w), Some(size_get)) => (RooflineInput { tile, w, size_get }, None),
        (Some(path), ..) => {
            let ds = read_dataset(path)?;
            let cfg = a.scan.config();
            let scan = cfg.resolve()?;
            let out = run_cmp(&ds, &cfg, a.scan.workers())?;
            let stats = CacheStats::sum(out.iter().map(|m| &m.cache));
            let tile = match cfg.kernel {
                KernelVariant::Baseline => 1,
                _ => scan.tile,
            };
            (RooflineInput::from_stats(tile, cfg.window, &stats)?, Some(stats))
        }
        _ => {
            return Err(Error::param(
                "give --tile, --w and --size-get, or --input to measure them",
            ))
        }
    };
    let report = RooflineReport {
        input,
        constants,
        operational_intensity: operational_intensity_with(&input, &constants)?,
        cache,
    };
    emit(&report, a.out.as_ref())?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Cmp(a) => cmd_cmp(a),
        Command::Crs(a) => cmd_crs(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Roofline(a) => cmd_roofline(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parameter(_) | Error::Config(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}
