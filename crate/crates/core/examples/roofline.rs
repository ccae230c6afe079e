//! Operational intensity for several tile sizes, with size_get measured from
//! the cache counters of a real run.

use semblance::bench::{operational_intensity, RooflineInput};
use semblance::cache::CacheStats;
use semblance::cmp::{run_cmp, KernelVariant, ScanConfig};
use semblance::data::{generate_synthetic, SynthSpec};

fn main() -> semblance::Result<()> {
    let ds = generate_synthetic(&SynthSpec { ncdps: 2, ..SynthSpec::default() })?;
    println!("{:>6} {:>10} {:>12}", "tile", "size_get", "flops/byte");
    for tile in [1, 8, 64, 256, 585] {
        let config = ScanConfig {
            nc: 64,
            window: 11,
            tile_size: Some(tile),
            kernel: KernelVariant::Blocked,
            ..ScanConfig::default()
        };
        let out = run_cmp(&ds, &config, 1)?;
        let stats = CacheStats::sum(out.iter().map(|m| &m.cache));
        let input = RooflineInput::from_stats(tile, config.window, &stats)?;
        println!("{:>6} {:>10.2} {:>12.3}", tile, input.size_get, operational_intensity(&input)?);
    }
    Ok(())
}
