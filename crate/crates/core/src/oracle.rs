//! Naive sequential reference for the semblance kernels.
//!
//! Every window value is materialized into an `M x w` table before the
//! semblance formula is applied. Only the traveltime and hit rule are shared
//! with the optimized code.

use serde::{Deserialize, Serialize};

use crate::cmp::{Pick, ScanConfig, SemblanceMatrix};
use crate::data::{midpoint_of, CdpGather, Dataset};
use crate::error::{Error, Result};
use crate::kernel::SemblanceResult;
use crate::traveltime::{compute_halfpoints, crs_traveltime, hit_for, VelocityGrid};

/// Relative-error denominator floor.
pub const REL_FLOOR: f64 = 1e-12;
/// Picks whose reference top-2 differ by less than this (relative) are ties.
pub const TIE_TOLERANCE: f64 = 1e-4;

/// Ids of every other CDP whose midpoint lies within `apm` of `central`.
pub fn brute_force_neighbors(dataset: &Dataset, central: usize, apm: f64) -> Result<Vec<u32>> {
    let c = midpoint_of(&dataset.gathers[central])?;
    let mut ids = Vec::new();
    for (i, g) in dataset.gathers.iter().enumerate() {
        if i == central {
            continue;
        }
        let m = midpoint_of(g)?;
        let (dx, dy) = (m.mx - c.mx, m.my - c.my);
        if dx * dx + dy * dy <= apm * apm {
            ids.push(g.cdp_id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Semblance of one (t0, v) pair over `gather` plus those `neighbors` within
/// `apm` of it.
pub fn semblance_reference(
    gather: &CdpGather,
    neighbors: &[&CdpGather],
    t0: f64,
    v: f64,
    w: usize,
    apm: f64,
) -> Result<SemblanceResult> {
    let center = midpoint_of(gather)?;
    let dt = gather.dt_seconds();
    let ns = gather.ns;

    let mut sweep: Vec<(&CdpGather, f64)> = vec![(gather, 0.0)];
    for n in neighbors {
        let m = midpoint_of(n)?;
        let d2 = m.distance_squared(&center);
        if d2 <= apm * apm {
            sweep.push((n, d2));
        }
    }

    // row-major M x w table of interpolated window values
    let mut table: Vec<f64> = Vec::new();
    for (g, d2) in sweep {
        let h2s = compute_halfpoints(g);
        for (trace, hp) in g.traces.iter().zip(h2s) {
            let t = crs_traveltime(t0, hp.h2, d2, v)?;
            let hit = hit_for(t, dt, ns, w);
            if !hit.valid {
                continue;
            }
            let k1 = hit.k1 as usize;
            for j in 0..w {
                let a = f64::from(trace.samples[k1 + j]);
                let b = f64::from(trace.samples[k1 + j + 1]);
                table.push(a + hit.x * (b - a));
            }
        }
    }

    let m = table.len() / w.max(1);
    if m == 0 {
        return Ok(SemblanceResult {
            semblance: 0.0,
            stack: 0.0,
            m_used: 0,
        });
    }
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    let mut total = 0.0;
    for j in 0..w {
        let column: f64 = (0..m).map(|i| table[i * w + j]).sum();
        numerator += column * column;
        denominator += (0..m).map(|i| table[i * w + j] * table[i * w + j]).sum::<f64>();
        total += column;
    }
    let semblance = if denominator == 0.0 { 0.0 } else { numerator / denominator };
    Ok(SemblanceResult {
        semblance,
        stack: total / (m * w) as f64,
        m_used: m as u64,
    })
}

fn reference_matrix(
    gather: &CdpGather,
    neighbors: &[&CdpGather],
    grid: &VelocityGrid,
    w: usize,
    apm: f64,
) -> Result<SemblanceMatrix> {
    let dt = gather.dt_seconds();
    let nc = grid.len();
    let mut values = Vec::with_capacity(gather.ns * nc);
    let mut best = Vec::with_capacity(gather.ns);
    let mut stack_trace = Vec::with_capacity(gather.ns);
    let mut valid_hits = 0;
    for k in 0..gather.ns {
        let t0 = k as f64 * dt;
        let row: Vec<SemblanceResult> = grid
            .values()
            .iter()
            .map(|&v| semblance_reference(gather, neighbors, t0, v, w, apm))
            .collect::<Result<_>>()?;
        let mut top = 0;
        for c in 1..nc {
            if row[c].semblance > row[top].semblance {
                top = c;
            }
        }
        best.push(Pick {
            index: top,
            velocity: grid.values()[top],
            semblance: row[top].semblance,
        });
        stack_trace.push(row[top].stack);
        valid_hits += row.iter().map(|r| r.m_used).sum::<u64>();
        values.extend(row.iter().map(|r| r.semblance));
    }
    let traces = gather.len()
        + neighbors
            .iter()
            .filter(|n| {
                let (a, b) = (midpoint_of(gather), midpoint_of(n));
                matches!((a, b), (Ok(a), Ok(b)) if a.distance_squared(&b) <= apm * apm)
            })
            .map(|n| n.len())
            .sum::<usize>();
    Ok(SemblanceMatrix {
        cdp_id: gather.cdp_id,
        ns: gather.ns,
        velocities: grid.values().to_vec(),
        values,
        best,
        stack_trace,
        valid_hits,
        traces,
        cache: Default::default(),
    })
}

/// Reference CMP matrices, one per gather in dataset order.
pub fn reference_cmp(dataset: &Dataset, config: &ScanConfig) -> Result<Vec<SemblanceMatrix>> {
    let grid = VelocityGrid::new(config.vmin, config.vmax, config.nc)?;
    dataset
        .gathers
        .iter()
        .map(|g| reference_matrix(g, &[], &grid, config.window, 0.0))
        .collect()
}

/// Reference CRS matrices, every gather using all others as candidate
/// neighbors; ordered by `cdp_id`.
pub fn reference_crs(dataset: &Dataset, config: &ScanConfig, apm: f64) -> Result<Vec<SemblanceMatrix>> {
    let grid = VelocityGrid::new(config.vmin, config.vmax, config.nc)?;
    let mut out = dataset
        .gathers
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let others: Vec<&CdpGather> = dataset
                .gathers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| o)
                .collect();
            reference_matrix(g, &others, &grid, config.window, apm)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|m| m.cdp_id);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cdp_id: u32,
    pub sample: usize,
    pub velocity_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub argmax_mismatches: u64,
    pub tie_excused: u64,
    pub cells: u64,
    pub worst: Option<Cell>,
}

impl ErrorReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance && self.argmax_mismatches == 0
    }
}

fn top_two(row: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in row {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first, second)
}

/// Per-cell relative error of `run` against `reference`, plus pick
/// agreement.
pub fn compare(run: &[SemblanceMatrix], reference: &[SemblanceMatrix]) -> Result<ErrorReport> {
    if run.len() != reference.len() {
        return Err(Error::param(format!(
            "output has {} cdps, reference has {}",
            run.len(),
            reference.len()
        )));
    }
    let mut report = ErrorReport {
        max_rel_err: 0.0,
        mean_rel_err: 0.0,
        argmax_mismatches: 0,
        tie_excused: 0,
        cells: 0,
        worst: None,
    };
    let mut sum = 0.0;
    for (a, r) in run.iter().zip(reference) {
        if a.cdp_id != r.cdp_id || a.ns != r.ns || a.nc() != r.nc() || a.values.len() != r.values.len() {
            return Err(Error::param(format!(
                "shape mismatch at cdp {}: {}x{} vs cdp {}: {}x{}",
                a.cdp_id,
                a.ns,
                a.nc(),
                r.cdp_id,
                r.ns,
                r.nc()
            )));
        }
        let nc = r.nc();
        for (i, (&x, &y)) in a.values.iter().zip(&r.values).enumerate() {
            let e = (x - y).abs() / y.abs().max(REL_FLOOR);
            let e = if e.is_nan() { f64::INFINITY } else { e };
            sum += e;
            report.cells += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = Some(Cell {
                    cdp_id: r.cdp_id,
                    sample: i / nc,
                    velocity_index: i % nc,
                });
            }
        }
        for k in 0..r.ns.min(a.best.len()).min(r.best.len()) {
            if a.best[k].index == r.best[k].index {
                continue;
            }
            let (first, second) = top_two(r.row(k));
            if (first - second).abs() / first.abs().max(REL_FLOOR) < TIE_TOLERANCE {
                report.tie_excused += 1;
            } else {
                report.argmax_mismatches += 1;
            }
        }
    }
    if report.cells > 0 {
        report.mean_rel_err = sum / report.cells as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmp::{run_cmp, KernelVariant};
    use crate::data::Trace;
    use crate::testutil::random_gather;

    fn gather(traces: Vec<Vec<f32>>) -> CdpGather {
        let ns = traces[0].len();
        let t = traces
            .into_iter()
            .map(|s| Trace::new(0.0, 0.0, 0.0, 0.0, s))
            .collect();
        CdpGather::new(1, ns, 1000, t).unwrap()
    }

    #[test]
    fn hand_examples() {
        // zero offset, t0 = 1 ms -> k1 = 0 for w = 3
        let g = gather(vec![vec![1.0, 2.0, 3.0, 0.0, 0.0], vec![2.0, 2.0, 2.0, 0.0, 0.0]]);
        let r = semblance_reference(&g, &[], 0.001, 2000.0, 3, 0.0).unwrap();
        assert!((r.semblance - 50.0 / 26.0).abs() < 1e-12);
        assert_eq!(r.m_used, 2);

        let same = gather(vec![vec![0.5, -1.0, 2.0, 0.0, 0.0]; 4]);
        let r = semblance_reference(&same, &[], 0.001, 2000.0, 3, 0.0).unwrap();
        assert!((r.semblance - 4.0).abs() < 1e-12);

        let anti = gather(vec![vec![1.0, 1.0, 1.0, 0.0, 0.0], vec![-1.0, -1.0, -1.0, 0.0, 0.0]]);
        let r = semblance_reference(&anti, &[], 0.001, 2000.0, 3, 0.0).unwrap();
        assert_eq!(r.semblance, 0.0);

        let single = gather(vec![vec![0.3, 0.1, -0.7, 0.0, 0.0]]);
        let r = semblance_reference(&single, &[], 0.001, 2000.0, 3, 0.0).unwrap();
        assert!((r.semblance - 1.0).abs() < 1e-12);

        let dead = gather(vec![vec![0.0; 5]; 3]);
        let r = semblance_reference(&dead, &[], 0.001, 2000.0, 3, 0.0).unwrap();
        assert_eq!((r.semblance, r.m_used), (0.0, 3));
    }

    #[test]
    fn neighbors_outside_apm_are_ignored() {
        let c = random_gather(1, 3, 32, 1000, 30.0, 0.0, 0.0);
        let near = random_gather(2, 3, 32, 1000, 30.0, 5.0, 0.0);
        let far = random_gather(3, 3, 32, 1000, 30.0, 50.0, 0.0);
        let both = semblance_reference(&c, &[&near, &far], 0.01, 2500.0, 4, 10.0).unwrap();
        let one = semblance_reference(&c, &[&near], 0.01, 2500.0, 4, 10.0).unwrap();
        assert_eq!(both, one);
        assert_eq!(one.m_used, 6);
    }

    #[test]
    fn compare_identical_and_perturbed() {
        let ds = Dataset::new(
            (0..2).map(|i| random_gather(i, 6, 48, 1000, 60.0, 0.0, 0.0)).collect(),
            6,
            None,
        )
        .unwrap();
        let cfg = ScanConfig {
            nc: 6,
            window: 4,
            kernel: KernelVariant::Blocked,
            ..ScanConfig::default()
        };
        let reference = reference_cmp(&ds, &cfg).unwrap();
        let zero = compare(&reference, &reference).unwrap();
        assert_eq!((zero.max_rel_err, zero.mean_rel_err, zero.argmax_mismatches), (0.0, 0.0, 0));

        let run = run_cmp(&ds, &cfg, 1).unwrap();
        let r = compare(&run, &reference).unwrap();
        assert!(r.max_rel_err <= 1e-5, "{r:?}");
        assert!(r.max_rel_err >= r.mean_rel_err);

        let mut bumped = reference.clone();
        let cell = 20 * 6 + 3;
        let v = bumped[1].values[cell];
        bumped[1].values[cell] = v * (1.0 + 1e-3);
        let r = compare(&bumped, &reference).unwrap();
        assert!((r.max_rel_err - 1e-3).abs() < 1e-9);
        assert_eq!(
            r.worst,
            Some(Cell {
                cdp_id: reference[1].cdp_id,
                sample: 20,
                velocity_index: 3
            })
        );

        assert!(compare(&run[..1], &reference).is_err());
    }

    #[test]
    fn ties_are_excused() {
        let mut a = SemblanceMatrix {
            cdp_id: 0,
            ns: 1,
            velocities: vec![1.0, 2.0],
            values: vec![1.0, 1.0 + 1e-6],
            best: vec![Pick {
                index: 1,
                velocity: 2.0,
                semblance: 1.0 + 1e-6,
            }],
            stack_trace: vec![0.0],
            valid_hits: 0,
            traces: 0,
            cache: Default::default(),
        };
        let r = a.clone();
        a.best[0].index = 0;
        let rep = compare(std::slice::from_ref(&a), std::slice::from_ref(&r)).unwrap();
        assert_eq!((rep.tie_excused, rep.argmax_mismatches), (1, 0));
        let mut wide = r.clone();
        wide.values[1] = 2.0;
        let rep = compare(&[a], &[wide]).unwrap();
        assert_eq!(rep.argmax_mismatches, 1);
    }
}
