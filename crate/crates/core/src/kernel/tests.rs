use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cache::{DirectAccess, TraceCache, DEFAULT_SIZE_H};
use crate::data::Trace;
use crate::testutil::random_gather;

/// Eq. 1 over explicitly materialized windows, written independently of the
/// kernels' accumulation loops.
fn brute_force(sweep: &TraceSweep<'_>, pair: SearchPair, w: usize) -> (Vec<f64>, f64, f64) {
    let t0 = pair.sample as f64 * sweep.dt();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..sweep.len() {
        let offset2 = 4.0 * sweep.halfpoints()[i].h2 + sweep.d2()[i];
        let t = (t0 * t0 + offset2 / (pair.velocity * pair.velocity)).sqrt();
        let s = t / sweep.dt();
        let base = s.floor();
        let x = s - base;
        let k1 = base as i64 - (w / 2) as i64;
        if k1 < 0 || k1 as usize + w >= sweep.ns() {
            continue;
        }
        let tr = sweep.trace(i);
        rows.push(
            (0..w)
                .map(|j| {
                    let a = f64::from(tr[k1 as usize + j]);
                    let b = f64::from(tr[k1 as usize + j + 1]);
                    a + x * (b - a)
                })
                .collect(),
        );
    }
    let num: Vec<f64> = (0..w).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let den: f64 = rows.iter().flatten().map(|v| v * v).sum();
    let s = if den > 0.0 {
        num.iter().map(|n| n * n).sum::<f64>() / den
    } else {
        0.0
    };
    (num, den, s)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn params(w: usize, lanes: usize) -> KernelParams {
    KernelParams::new(w, lanes, DEFAULT_SCRATCH_BYTES).unwrap()
}

fn constant_gather(rows: &[Vec<f32>]) -> CdpGather {
    let ns = rows[0].len();
    let traces = rows
        .iter()
        .map(|r| Trace::new(0.0, 0.0, 0.0, 0.0, r.clone()))
        .collect();
    CdpGather::new(0, ns, 1000, traces).unwrap()
}

#[test]
fn interpolate_examples() {
    assert_eq!(interpolate(1.0, 3.0, 0.5), 2.0);
    assert_eq!(interpolate(-7.25, 100.0, 0.0), -7.25);
    assert_eq!(interpolate(2.0, 6.0, 0.25), 3.0);
}

#[test]
fn finalize_identical_traces_saturates_at_m() {
    let f = [0.3, -1.2, 2.0, 0.7];
    let acc = PairAccumulator {
        num: f.iter().map(|v| 2.0 * v).collect(),
        w: 4,
        den: 2.0 * f.iter().map(|v| v * v).sum::<f64>(),
        ac_linear: 2.0 * f.iter().sum::<f64>(),
        m_used: 2,
    };
    assert!((finalize(&acc).semblance - 2.0).abs() < 1e-12);
}

#[test]
fn finalize_anti_correlated_is_zero() {
    let acc = PairAccumulator {
        num: vec![0.0; 3],
        w: 3,
        den: 2.0 * (1.0 + 4.0 + 9.0),
        ac_linear: 0.0,
        m_used: 2,
    };
    assert_eq!(finalize(&acc).semblance, 0.0);
}

#[test]
fn finalize_hand_computed_window() {
    // trace1 = (1,2,3), trace2 = (2,2,2), x = 0
    let acc = PairAccumulator {
        num: vec![3.0, 4.0, 5.0],
        w: 3,
        den: 26.0,
        ac_linear: 12.0,
        m_used: 2,
    };
    let r = finalize(&acc);
    assert!((r.semblance - 50.0 / 26.0).abs() < 1e-15);
    assert_eq!(r.stack, 2.0);
}

#[test]
fn finalize_dead_window_is_zero_not_nan() {
    let r = finalize(&PairAccumulator::new(5));
    assert_eq!((r.semblance, r.stack, r.m_used), (0.0, 0.0, 0));
}

#[test]
fn finalize_ignores_padded_numerator_slots() {
    let mut acc = PairAccumulator {
        num: vec![1.0, 1.0, 1.0, 1e9],
        w: 3,
        den: 3.0,
        ac_linear: 3.0,
        m_used: 1,
    };
    let r = finalize(&acc);
    acc.num[3] = -5.0;
    assert_eq!(finalize(&acc), r);
}

#[test]
fn baseline_window_matches_hand_example() {
    // zero-offset traces, t0 at sample 4, w = 3 -> window starts at 3
    let mut r1 = vec![0.0f32; 12];
    let mut r2 = vec![0.0f32; 12];
    r1[3..6].copy_from_slice(&[1.0, 2.0, 3.0]);
    r2[3..6].copy_from_slice(&[2.0, 2.0, 2.0]);
    let g = constant_gather(&[r1, r2]);
    let sweep = TraceSweep::from_gather(&g);
    let acc = accumulate_pair_baseline(
        &sweep,
        SearchPair {
            sample: 4,
            velocity: 2000.0,
        },
        3,
        &mut DirectAccess,
    )
    .unwrap();
    assert_eq!(acc.num(), &[3.0, 4.0, 5.0]);
    assert_eq!(acc.den, 26.0);
    assert!((finalize(&acc).semblance - 50.0 / 26.0).abs() < 1e-15);
}

#[test]
fn baseline_zero_gather() {
    let g = constant_gather(&[vec![0.0; 32], vec![0.0; 32], vec![0.0; 32]]);
    let sweep = TraceSweep::from_gather(&g);
    let r = scan_pair_baseline(
        &sweep,
        SearchPair {
            sample: 10,
            velocity: 2500.0,
        },
        4,
        &mut TraceCache::default(),
    )
    .unwrap();
    assert_eq!((r.semblance, r.stack), (0.0, 0.0));
    assert_eq!(r.m_used, 3);
}

#[test]
fn baseline_single_trace_is_one() {
    let g = random_gather(5, 1, 64, 1000, 0.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    for sample in [10, 20, 40] {
        let r = scan_pair_baseline(
            &sweep,
            SearchPair {
                sample,
                velocity: 2200.0,
            },
            5,
            &mut DirectAccess,
        )
        .unwrap();
        assert!((r.semblance - 1.0).abs() < 1e-12, "{}", r.semblance);
    }
}

#[test]
fn baseline_matches_brute_force_on_random_gather() {
    let g = random_gather(21, 8, 64, 1000, 60.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut checked = 0;
    for sample in 0..64 {
        for v in [1500.0, 2000.0, 2750.0] {
            let pair = SearchPair { sample, velocity: v };
            let r = scan_pair_baseline(&sweep, pair, 5, &mut TraceCache::default()).unwrap();
            let (_, den, s) = brute_force(&sweep, pair, 5);
            if den > 0.0 {
                assert!(rel(r.semblance, s) <= 1e-6, "sample {sample} v {v}");
                checked += 1;
            } else {
                assert_eq!(r.semblance, 0.0);
            }
        }
    }
    assert!(checked > 100);
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize, lo: usize, hi: usize) -> Vec<SearchPair> {
    (0..n)
        .map(|_| SearchPair {
            sample: rng.random_range(lo..hi),
            velocity: rng.random_range(1800.0..3200.0),
        })
        .collect()
}

#[test]
fn blocked_single_pair_is_bitwise_baseline() {
    let g = random_gather(3, 12, 128, 1000, 200.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for pair in random_pairs(&mut rng, 20, 0, 128) {
        let base = accumulate_pair_baseline(&sweep, pair, 7, &mut DirectAccess).unwrap();
        let blocked =
            accumulate_tile_blocked(&sweep, &[pair], &params(7, 4), &mut TraceCache::default())
                .unwrap();
        assert_eq!(blocked[0], base);
    }
}

#[test]
fn blocked_tile_matches_baseline() {
    let g = random_gather(8, 16, 256, 1000, 300.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = random_pairs(&mut rng, 32, 0, 256);
    let tile = accumulate_tile_blocked(&sweep, &pairs, &params(6, 4), &mut TraceCache::default())
        .unwrap();
    for (acc, &pair) in tile.iter().zip(&pairs) {
        let base = accumulate_pair_baseline(&sweep, pair, 6, &mut DirectAccess).unwrap();
        assert_eq!(acc.num(), base.num());
        assert_eq!(acc.m_used, base.m_used);
        assert!(rel(acc.den, base.den) <= 1e-6);
        assert!((acc.ac_linear - base.ac_linear).abs() <= 1e-6 * base.ac_linear.abs().max(1.0));
    }
}

#[test]
fn blocked_tile_fetch_accounting() {
    // near-zero offsets, mid-trace samples: every hit is valid
    let (m, p) = (10usize, 24usize);
    let g = random_gather(4, m, 200, 1000, 10.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = random_pairs(&mut rng, p, 40, 150);
    let mut cache = TraceCache::default();
    let accs = accumulate_tile_blocked(&sweep, &pairs, &params(5, 4), &mut cache).unwrap();
    assert!(accs.iter().all(|a| a.m_used == m as u64));
    let s = cache.stats();
    assert_eq!(s.range_fetches, m as u64);
    assert_eq!(s.naive_fetches, (m * p) as u64);
    assert_eq!(s.fallback_fetches, 0);
}

#[test]
fn over_budget_tile_is_config_error() {
    let g = random_gather(4, 2, 64, 1000, 10.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let tight = KernelParams::new(4, 4, 6 * 8 * 3).unwrap();
    assert_eq!(tight.max_tile(), 3);
    let pairs = vec![
        SearchPair {
            sample: 20,
            velocity: 2000.0
        };
        4
    ];
    let mut cache = TraceCache::default();
    assert!(matches!(
        accumulate_tile_blocked(&sweep, &pairs, &tight, &mut cache),
        Err(Error::Config(_))
    ));
    assert_eq!(cache.stats(), Default::default());
    assert!(matches!(KernelParams::new(4, 4, 10), Err(Error::Config(_))));
    assert!(matches!(KernelParams::new(4, 3, 1 << 16), Err(Error::Config(_))));
    assert!(matches!(KernelParams::new(0, 4, 1 << 16), Err(Error::Config(_))));
}

#[test]
fn long_ranges_fall_back_to_window_fetches() {
    let g = random_gather(9, 6, 512, 1000, 800.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs = random_pairs(&mut rng, 16, 0, 512);
    let p = params(4, 4);
    let mut wide = TraceCache::default();
    let mut narrow = TraceCache::new(DEFAULT_SIZE_H, 16).unwrap();
    let a = accumulate_tile_blocked(&sweep, &pairs, &p, &mut wide).unwrap();
    let b = accumulate_tile_blocked(&sweep, &pairs, &p, &mut narrow).unwrap();
    assert_eq!(a, b);
    assert!(narrow.stats().fallback_fetches > 0);
    assert_eq!(narrow.stats().naive_fetches, wide.stats().naive_fetches);
    assert!(narrow.stats().range_fetches <= narrow.stats().naive_fetches);
}

#[test]
fn cache_is_semantically_transparent() {
    let g = random_gather(12, 9, 300, 1000, 400.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs = random_pairs(&mut rng, 40, 0, 300);
    let p = params(9, 8);
    let cached = scan_tile_vectorized(&sweep, &pairs, &p, &mut TraceCache::default()).unwrap();
    let direct = scan_tile_vectorized(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
    assert_eq!(cached, direct);
    let cached = scan_tile_blocked(&sweep, &pairs, &p, &mut TraceCache::new(3, 8).unwrap()).unwrap();
    let direct = scan_tile_blocked(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
    assert_eq!(cached, direct);
}

#[test]
fn vectorized_w11_l4_pads_to_twelve() {
    let p = params(11, 4);
    assert_eq!(p.padded_w(), 12);
    let g = random_gather(13, 7, 200, 1000, 100.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pairs = random_pairs(&mut rng, 10, 0, 200);
    let accs = accumulate_tile_vectorized(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
    let poisoned = accumulate_tile_vectorized_padded(
        &sweep,
        &pairs,
        &p,
        PadFill::Value(f32::NAN),
        &mut DirectAccess,
    )
    .unwrap();
    for (a, b) in accs.iter().zip(&poisoned) {
        assert_eq!(a.num.len(), 12);
        assert!(b.m_used == 0 || b.num[11].is_nan());
        assert_eq!(a.num(), b.num());
        assert_eq!(a.den.to_bits(), b.den.to_bits());
        assert_eq!(finalize(a), finalize(b));
    }
    for (acc, &pair) in accs.iter().zip(&pairs) {
        let base = accumulate_pair_baseline(&sweep, pair, 11, &mut DirectAccess).unwrap();
        assert_eq!(acc.num(), base.num());
        assert!(rel(acc.den, base.den) <= 1e-5);
    }
}

#[test]
fn vectorized_exact_multiple_has_no_padding() {
    let p = params(8, 4);
    assert_eq!(p.padded_w(), 8);
    let g = random_gather(14, 11, 160, 1000, 150.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs = random_pairs(&mut rng, 16, 0, 160);
    let vec = accumulate_tile_vectorized(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
    let blk = accumulate_tile_blocked(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
    for (a, b) in vec.iter().zip(&blk) {
        assert_eq!(a.num, b.num);
        assert!(rel(a.den, b.den) <= 1e-12);
    }
}

#[test]
fn vectorized_w1_matches_baseline() {
    for lanes in [4, 8] {
        let p = params(1, lanes);
        let g = random_gather(15, 5, 100, 1000, 50.0, 0.0, 0.0);
        let sweep = TraceSweep::from_gather(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs = random_pairs(&mut rng, 12, 0, 100);
        let res = scan_tile_vectorized(&sweep, &pairs, &p, &mut DirectAccess).unwrap();
        for (r, &pair) in res.iter().zip(&pairs) {
            let b = scan_pair_baseline(&sweep, pair, 1, &mut DirectAccess).unwrap();
            assert!((r.semblance - b.semblance).abs() <= 1e-6 * b.semblance.max(1e-12));
            assert_eq!(r.m_used, b.m_used);
        }
    }
}

#[test]
fn sweep_with_neighbors_carries_displacement() {
    let c = random_gather(1, 3, 64, 1000, 20.0, 0.0, 0.0);
    let n = random_gather(2, 2, 64, 1000, 20.0, 30.0, 40.0);
    let s = TraceSweep::with_neighbors(&c, &[&n]).unwrap();
    assert_eq!(s.len(), 5);
    assert_eq!(s.d2(), &[0.0, 0.0, 0.0, 2500.0, 2500.0]);
    let bad = random_gather(2, 2, 65, 1000, 20.0, 30.0, 40.0);
    assert!(TraceSweep::with_neighbors(&c, &[&bad]).is_err());
}

#[test]
fn tiles_reject_empty_and_bad_velocity() {
    let g = random_gather(1, 3, 64, 1000, 20.0, 0.0, 0.0);
    let sweep = TraceSweep::from_gather(&g);
    let p = params(4, 4);
    assert!(scan_tile_blocked(&sweep, &[], &p, &mut DirectAccess).is_err());
    let bad = [SearchPair {
        sample: 3,
        velocity: 0.0,
    }];
    assert!(scan_tile_vectorized(&sweep, &bad, &p, &mut DirectAccess).is_err());
    assert!(scan_pair_baseline(&sweep, bad[0], 4, &mut DirectAccess).is_err());
}
