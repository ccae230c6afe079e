//! Moveout curves and the mapping from a traveltime to a sample window.
//!
//! The NMO curve is the usual hyperbola `t^2 = t0^2 + (2h)^2 / v^2` in terms
//! of the half-offset `h`. The CRS surface used here is a one-parameter
//! stand-in that adds the squared midpoint displacement `d^2` from the central
//! CDP to the squared full offset; it is not the wavefront-parameter CRS
//! operator and is kept behind [`crs_traveltime`] so it can be swapped out.

use crate::data::CdpGather;
use crate::error::{Error, Result};

/// Squared half-offset of a trace, in m^2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Halfpoint {
    pub h2: f64,
}

/// Half-offsets for every trace of `gather`, in trace order.
pub fn compute_halfpoints(gather: &CdpGather) -> Vec<Halfpoint> {
    gather
        .traces
        .iter()
        .map(|t| {
            let dx = f64::from(t.gx) - f64::from(t.sx);
            let dy = f64::from(t.gy) - f64::from(t.sy);
            Halfpoint {
                h2: (dx * dx + dy * dy) / 4.0,
            }
        })
        .collect()
}

/// Trial NMO velocities, evenly spaced over `[vmin, vmax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub vmin: f64,
    pub vmax: f64,
    values: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(vmin: f64, vmax: f64, nc: usize) -> Result<Self> {
        if !(vmin > 0.0 && vmin <= vmax && vmax.is_finite()) {
            return Err(Error::param(format!(
                "velocity bounds must satisfy 0 < vmin <= vmax, got [{vmin}, {vmax}]"
            )));
        }
        if nc == 0 {
            return Err(Error::param("nc must be at least 1"));
        }
        let values = if nc == 1 {
            vec![vmin]
        } else {
            let step = (vmax - vmin) / (nc - 1) as f64;
            (0..nc).map(|c| vmin + c as f64 * step).collect()
        };
        Ok(Self { vmin, vmax, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spacing between adjacent velocities (0 for a single-velocity grid).
    pub fn step(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            (self.vmax - self.vmin) / (self.values.len() - 1) as f64
        }
    }
}

#[inline]
fn moveout(t0: f64, offset2: f64, v: f64) -> f64 {
    (t0 * t0 + offset2 / (v * v)).sqrt()
}

fn check_velocity(v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("velocity must be positive, got {v}")))
    }
}

/// Hyperbolic NMO traveltime in seconds.
pub fn nmo_traveltime(t0: f64, h2: f64, v: f64) -> Result<f64> {
    check_velocity(v)?;
    Ok(moveout(t0, 4.0 * h2, v))
}

/// Traveltime over the CRS neighborhood surface. With `d2 == 0` this is the
/// same expression as [`nmo_traveltime`], bit for bit.
pub fn crs_traveltime(t0: f64, h2: f64, d2: f64, v: f64) -> Result<f64> {
    check_velocity(v)?;
    Ok(moveout(t0, 4.0 * h2 + d2, v))
}

/// Unchecked variant for the kernels; callers validate velocities up front.
#[inline]
pub(crate) fn traveltime_unchecked(t0: f64, h2: f64, d2: f64, v: f64) -> f64 {
    moveout(t0, 4.0 * h2 + d2, v)
}

/// Where a traveltime curve meets a trace: window start `k1` and the linear
/// interpolation fraction `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveHit {
    pub k1: i64,
    pub x: f64,
    pub valid: bool,
}

impl CurveHit {
    pub const INVALID: CurveHit = CurveHit {
        k1: 0,
        x: 0.0,
        valid: false,
    };
}

/// Centers a `w`-sample window on the sample under time `t`.
///
/// The hit is valid when samples `k1 ..= k1 + w` are all inside the trace;
/// the extra sample is the interpolation neighbor of the last window slot.
#[inline]
pub fn hit_for(t: f64, dt: f64, ns: usize, w: usize) -> CurveHit {
    let s = t / dt;
    if !s.is_finite() {
        return CurveHit::INVALID;
    }
    let base = s.floor();
    let x = s - base;
    let k1 = base as i64 - (w / 2) as i64;
    let valid = k1 >= 0 && (k1 as u64).saturating_add(w as u64) < ns as u64;
    CurveHit { k1, x, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trace;

    fn gather(coords: &[(f32, f32, f32, f32)]) -> CdpGather {
        let traces = coords
            .iter()
            .map(|&(sx, sy, gx, gy)| Trace::new(sx, sy, gx, gy, vec![0.0; 8]))
            .collect();
        CdpGather::new(1, 8, 1000, traces).unwrap()
    }

    #[test]
    fn halfpoint_examples() {
        let g = gather(&[(0.0, 0.0, 100.0, 0.0), (5.0, 5.0, 5.0, 5.0), (0.0, 0.0, 30.0, 40.0)]);
        let h: Vec<f64> = compute_halfpoints(&g).iter().map(|h| h.h2).collect();
        assert_eq!(h, vec![2500.0, 0.0, 625.0]);
    }

    #[test]
    fn nmo_examples() {
        assert_eq!(nmo_traveltime(0.7, 0.0, 2100.0).unwrap(), 0.7);
        assert_eq!(nmo_traveltime(0.0, 2500.0, 1000.0).unwrap(), 0.1);
        let t = nmo_traveltime(1.0, 2500.0, 2000.0).unwrap();
        // 1 + 4*2500/2000^2 = 1.0025
        assert!((t - 1.0025f64.sqrt()).abs() < 1e-15);
        assert!((t - 1.001_249_22).abs() < 1e-8);
    }

    #[test]
    fn crs_examples() {
        for &(t0, h2, v) in &[(0.3, 100.0, 1800.0), (1.2, 0.0, 2500.0), (0.0, 9e4, 3000.0)] {
            assert_eq!(
                crs_traveltime(t0, h2, 0.0, v).unwrap().to_bits(),
                nmo_traveltime(t0, h2, v).unwrap().to_bits()
            );
        }
        assert_eq!(crs_traveltime(0.0, 0.0, 10000.0, 1000.0).unwrap(), 0.1);
        let t = crs_traveltime(1.0, 2500.0, 400.0, 2000.0).unwrap();
        // 1 + (10000 + 400)/4e6 = 1.0026
        assert!((t - 1.0026f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_velocity_is_rejected() {
        assert!(nmo_traveltime(1.0, 1.0, 0.0).is_err());
        assert!(crs_traveltime(1.0, 1.0, 1.0, -5.0).is_err());
    }

    #[test]
    fn hit_examples() {
        let dt = 220e-6;
        let h = hit_for(100.0 * dt, dt, 550, 4);
        assert_eq!((h.k1, h.x, h.valid), (98, 0.0, true));

        let h = hit_for(0.0, dt, 550, 4);
        assert_eq!(h.k1, -2);
        assert!(!h.valid);

        let dt = 0.5;
        let h = hit_for(10.25 * dt, dt, 64, 3);
        assert_eq!(h.k1, 9);
        assert_eq!(h.x, 0.25);
        assert!(h.valid);
    }

    #[test]
    fn hit_upper_bound_needs_interpolation_neighbor() {
        // window k1..k1+w-1 plus neighbor k1+w must be < ns
        let ns = 20;
        let w = 4;
        // base = 17 -> k1 = 15, last read index 19: valid
        assert!(hit_for(17.0, 1.0, ns, w).valid);
        // base = 18 -> k1 = 16, neighbor index 20: invalid
        assert!(!hit_for(18.0, 1.0, ns, w).valid);
    }

    #[test]
    fn velocity_grid_values() {
        let g = VelocityGrid::new(2000.0, 3000.0, 101).unwrap();
        assert_eq!(g.values()[50], 2500.0);
        assert_eq!(g.values()[100], 3000.0);
        assert_eq!(g.step(), 10.0);
        assert_eq!(VelocityGrid::new(1500.0, 4000.0, 1).unwrap().values(), &[1500.0]);
        assert!(VelocityGrid::new(0.0, 1.0, 3).is_err());
        assert!(VelocityGrid::new(3.0, 1.0, 3).is_err());
        assert!(VelocityGrid::new(1.0, 3.0, 0).is_err());
    }
}
