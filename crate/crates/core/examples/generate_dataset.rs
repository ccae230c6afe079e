//! Generate a small synthetic dataset, write it as SSF1 and read it back.
//!
//! cargo run --example generate_dataset -- /tmp/demo.ssf

use semblance::data::{generate_synthetic, read_dataset, write_dataset, ReflectorSpec, SynthSpec};

fn main() -> semblance::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("demo.ssf").display().to_string());

    let mut spec = SynthSpec {
        ncdps: 8,
        seed: 7,
        snr: Some(10.0),
        ..SynthSpec::default()
    };
    spec.reflectors = ReflectorSpec::spread(3, spec.record_length(), 2000.0, 3000.0);

    let ds = generate_synthetic(&spec)?;
    write_dataset(&ds, &path)?;
    let back = read_dataset(&path)?;
    assert_eq!(back, ds);

    println!("wrote {} cdps x {} traces x {} samples to {path}", ds.ncdps(), ds.fold, spec.ns);
    for e in &spec.reflectors.events {
        println!("  event t0={:.4} s v={} m/s", e.t0, e.velocity);
    }
    Ok(())
}
