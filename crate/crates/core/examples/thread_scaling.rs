//! CMP throughput for 1, 2, 4 and 8 workers.

use semblance::bench::{scaling_sweep, BenchMode};
use semblance::cmp::ScanConfig;
use semblance::data::{generate_synthetic, ReflectorSpec, SynthSpec};

fn main() -> semblance::Result<()> {
    let mut spec = SynthSpec { ncdps: 64, fold: 30, ns: 400, dt_us: 1000, ..SynthSpec::default() };
    spec.reflectors = ReflectorSpec::spread(3, spec.record_length(), 2000.0, 3000.0);
    let ds = generate_synthetic(&spec)?;
    let config = ScanConfig { nc: 32, ..ScanConfig::default() };

    let rows = scaling_sweep(&ds, &config, &BenchMode::Cmp, &[1, 2, 4, 8], 3)?;
    println!("{:>7} {:>16} {:>8} {:>10}", "workers", "traces/s", "speedup", "efficiency");
    for r in rows {
        println!("{:>7} {:>16.0} {:>8.2} {:>10.2}", r.workers, r.throughput, r.speedup, r.efficiency);
    }
    Ok(())
}
