use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{CdpGather, Trace};

/// Gather of `m` traces with uniform random samples in [-1, 1) and offsets
/// up to `max_offset` meters centered on (`mx`, `my`).
pub(crate) fn random_gather(
    seed: u64,
    m: usize,
    ns: usize,
    dt_us: u32,
    max_offset: f64,
    mx: f64,
    my: f64,
) -> CdpGather {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traces = (0..m)
        .map(|i| {
            let half = if m > 1 {
                max_offset * i as f64 / (m - 1) as f64 / 2.0
            } else {
                0.0
            };
            let samples = (0..ns).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            Trace::new((mx - half) as f32, my as f32, (mx + half) as f32, my as f32, samples)
        })
        .collect();
    CdpGather::new(seed as u32, ns, dt_us, traces).unwrap()
}
