//! Baseline, blocked and lane-padded kernels on one gather: agreement and
//! timing.

use std::time::Instant;

use semblance::cmp::{scan_cdp, KernelVariant, ScanConfig};
use semblance::data::{generate_synthetic, ReflectorSpec, SynthSpec};

fn main() -> semblance::Result<()> {
    let mut spec = SynthSpec { fold: 60, ns: 550, dt_us: 220, snr: Some(5.0), ..SynthSpec::default() };
    spec.reflectors = ReflectorSpec::spread(3, spec.record_length(), 2000.0, 3000.0);
    let gather = generate_synthetic(&spec)?.gathers.remove(0);

    let mut reference = None;
    for kernel in [KernelVariant::Baseline, KernelVariant::Blocked, KernelVariant::Vectorized] {
        for lanes in [4, 8] {
            if kernel != KernelVariant::Vectorized && lanes == 8 {
                continue;
            }
            let config = ScanConfig { nc: 64, window: 11, kernel, lanes, ..ScanConfig::default() };
            let start = Instant::now();
            let m = scan_cdp(&gather, &config)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let base = reference.get_or_insert_with(|| m.clone());
            let max_diff = m
                .values
                .iter()
                .zip(&base.values)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))
                .fold(0.0, f64::max);
            let picks_equal = m.best.iter().zip(&base.best).all(|(a, b)| a.index == b.index);
            println!(
                "{kernel:<8} L={lanes}  {ms:>7.1} ms  max rel diff vs baseline {max_diff:.2e}  picks equal: {picks_equal}"
            );
        }
    }
    Ok(())
}
