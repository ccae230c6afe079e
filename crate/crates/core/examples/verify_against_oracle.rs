//! Compare the pipelines against the naive sequential reference.

use semblance::cmp::{run_cmp, KernelVariant, ScanConfig};
use semblance::crs::{run_crs, CrsOptions};
use semblance::data::{generate_synthetic, ReflectorSpec, SynthSpec};
use semblance::oracle::{compare, reference_cmp, reference_crs};

fn main() -> semblance::Result<()> {
    let mut spec = SynthSpec { ncdps: 9, fold: 16, ns: 200, dt_us: 1000, snr: Some(4.0), ..SynthSpec::default() };
    spec.reflectors = ReflectorSpec::spread(2, spec.record_length(), 2000.0, 3000.0);
    let ds = generate_synthetic(&spec)?;

    for kernel in [KernelVariant::Blocked, KernelVariant::Vectorized] {
        let config = ScanConfig { nc: 16, window: 8, kernel, ..ScanConfig::default() };
        let report = compare(&run_cmp(&ds, &config, 2)?, &reference_cmp(&ds, &config)?)?;
        println!("cmp {kernel}: {}", serde_json::to_string(&report)?);
    }

    let config = ScanConfig { nc: 16, window: 8, ..ScanConfig::default() };
    let run = run_crs(&ds, &config, &CrsOptions::new((1, 1), 30.0))?;
    let report = compare(&run.matrices, &reference_crs(&ds, &config, 30.0)?)?;
    println!("crs: {}", serde_json::to_string(&report)?);
    Ok(())
}
