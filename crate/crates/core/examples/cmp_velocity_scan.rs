//! CMP velocity scan of a noisy synthetic gather, printing the picks at the
//! planted event times.

use semblance::cmp::{run_cmp, ScanConfig};
use semblance::data::{generate_synthetic, ReflectorEvent, ReflectorSpec, SynthSpec};

fn main() -> semblance::Result<()> {
    let events = vec![
        ReflectorEvent { t0: 0.4, velocity: 2200.0, amplitude: 1.0 },
        ReflectorEvent { t0: 0.9, velocity: 2500.0, amplitude: 1.0 },
        ReflectorEvent { t0: 1.4, velocity: 2800.0, amplitude: 1.0 },
    ];
    let spec = SynthSpec {
        ncdps: 4,
        fold: 60,
        ns: 1000,
        dt_us: 2000,
        offset_step: Some(50.0),
        snr: Some(10.0),
        seed: 3,
        reflectors: ReflectorSpec { events: events.clone(), vmin: 2000.0, vmax: 3000.0 },
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec)?;
    let config = ScanConfig { nc: 101, window: 11, ..ScanConfig::default() };

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let matrices = run_cmp(&ds, &config, workers)?;

    for m in &matrices {
        print!("cdp {:>2}:", m.cdp_id);
        for e in &events {
            let k = (e.t0 / spec.dt_seconds()).round() as usize;
            let p = m.best[k];
            print!("  t0={:.1}s v*={} pick={} S={:.1}", e.t0, e.velocity, p.velocity, p.semblance);
        }
        println!();
    }
    Ok(())
}
