//! Cache counters of one tile: coalesced range fetches versus the per-pair
//! window fetches they replace.

use semblance::cache::{CacheStats, TraceCache};
use semblance::cmp::search_pairs;
use semblance::data::{generate_synthetic, SynthSpec};
use semblance::kernel::{accumulate_tile_blocked, KernelParams, TraceSweep};
use semblance::traveltime::VelocityGrid;

fn main() -> semblance::Result<()> {
    let ds = generate_synthetic(&SynthSpec { fold: 48, ns: 550, ..SynthSpec::default() })?;
    let gather = &ds.gathers[0];
    let sweep = TraceSweep::from_gather(gather);
    let grid = VelocityGrid::new(2000.0, 3000.0, 16)?;
    let params = KernelParams::new(11, 4, 64 * 1024)?;
    let pairs = search_pairs(gather.ns, &grid);

    println!("{:>6} {:>8} {:>8} {:>10} {:>10} {:>9}", "tile", "ranges", "naive", "samples", "naive smp", "size_get");
    for p in [1, 4, 16, 64, 256] {
        let start = 200 * grid.len();
        let tile = &pairs[start..start + p];
        let mut cache = TraceCache::default();
        accumulate_tile_blocked(&sweep, tile, &params, &mut cache)?;
        let s: CacheStats = cache.take_stats();
        println!(
            "{:>6} {:>8} {:>8} {:>10} {:>10} {:>9.1}",
            p,
            s.range_fetches,
            s.naive_fetches,
            s.samples_fetched,
            s.naive_fetches * (params.w as u64 + 1),
            s.size_get().unwrap_or(0.0)
        );
    }
    Ok(())
}
