//! CRS over a 2x2 shard grid: region sizes, halo traffic and event timing
//! per shard, and a check against the single-shard run.

use semblance::cmp::ScanConfig;
use semblance::crs::{run_crs, CrsOptions, ShardEvent};
use semblance::data::{generate_synthetic, ReflectorSpec, SynthSpec};

fn main() -> semblance::Result<()> {
    let mut spec = SynthSpec {
        ncdps: 36,
        fold: 24,
        ns: 400,
        dt_us: 1000,
        seed: 11,
        snr: Some(8.0),
        ..SynthSpec::default()
    };
    spec.reflectors = ReflectorSpec::spread(2, spec.record_length(), 2000.0, 3000.0);
    let ds = generate_synthetic(&spec)?;
    let config = ScanConfig { nc: 32, ..ScanConfig::default() };

    // midpoints 25 m apart on a 6x6 grid: apm 30 picks up the 4 nearest neighbors
    let sharded = run_crs(&ds, &config, &CrsOptions::new((2, 2), 30.0))?;
    for r in &sharded.shards {
        let at = |e| r.time_of(e).map_or(0.0, |t| t.as_secs_f64() * 1e3);
        println!(
            "shard {}: inner {:>2} outer {:>2} halo {:>2} cdps, sends {} receives {}, inner done {:.1} ms, halo {:.1} ms",
            r.shard,
            r.inner,
            r.outer,
            r.halo_cdps,
            r.sends,
            r.receives,
            at(ShardEvent::InnerDone),
            at(ShardEvent::HaloReceived),
        );
    }

    let single = run_crs(&ds, &config, &CrsOptions::new((1, 1), 30.0))?;
    let same = single.matrices == sharded.matrices;
    println!("2x2 output identical to 1x1: {same}");
    Ok(())
}
