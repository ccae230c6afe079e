use proptest::prelude::*;
use semblance::data::{
    generate_synthetic, midpoint_of, read_dataset, write_dataset, CdpGather, Dataset, ReflectorSpec,
    SynthSpec, Trace,
};

fn gather_strategy(ns: usize) -> impl Strategy<Value = CdpGather> {
    (
        any::<u32>(),
        prop::collection::vec(
            (
                -1e4f32..1e4,
                -1e4f32..1e4,
                -1e4f32..1e4,
                -1e4f32..1e4,
                prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), ns),
            ),
            1..6,
        ),
    )
        .prop_map(move |(id, traces)| {
            let traces = traces
                .into_iter()
                .map(|(sx, sy, gx, gy, s)| Trace::new(sx, sy, gx, gy, s))
                .collect();
            CdpGather::new(id, ns, 250, traces).unwrap()
        })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..40, 0usize..3)
        .prop_flat_map(|(ns, extra)| (prop::collection::vec(gather_strategy(ns), 0..5), Just(extra)))
        .prop_map(|(gathers, extra)| {
            let fold = gathers.iter().map(|g| g.len()).max().unwrap_or(0) + extra;
            if gathers.is_empty() {
                Dataset::empty()
            } else {
                Dataset::new(gathers, fold, None).unwrap()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssf_round_trip_is_identity(ds in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ssf");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        prop_assert_eq!(&back, &ds);
        for (a, b) in back.gathers.iter().zip(&ds.gathers) {
            for (ta, tb) in a.traces.iter().zip(&b.traces) {
                let bits = |t: &Trace| t.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(ta), bits(tb));
            }
        }
    }

    #[test]
    fn generation_is_pure(seed in any::<u64>(), snr in 1.0f64..20.0) {
        let mut spec = SynthSpec { ncdps: 2, fold: 6, ns: 120, dt_us: 1000, seed, snr: Some(snr), ..SynthSpec::default() };
        spec.reflectors = ReflectorSpec::spread(2, spec.record_length(), 2000.0, 3000.0);
        prop_assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }
}

#[test]
fn empty_dataset_file_is_sixteen_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.ssf");
    write_dataset(&Dataset::empty(), &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 16);
    assert_eq!(read_dataset(&path).unwrap().ncdps(), 0);
}

#[test]
fn midpoint_examples() {
    let g = |sx, sy, gx, gy| CdpGather::new(0, 1, 1000, vec![Trace::new(sx, sy, gx, gy, vec![0.0])]).unwrap();
    let m = midpoint_of(&g(0.0, 0.0, 100.0, 0.0)).unwrap();
    assert_eq!((m.mx, m.my), (50.0, 0.0));
    let m = midpoint_of(&g(-10.0, 4.0, 30.0, -4.0)).unwrap();
    assert_eq!((m.mx, m.my), (10.0, 0.0));
    let m = midpoint_of(&g(7.0, 3.0, 7.0, 3.0)).unwrap();
    assert_eq!((m.mx, m.my), (7.0, 3.0));
}
