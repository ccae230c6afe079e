//! Lane-padded window loop.
//!
//! The `w`-long window is covered by `ceil(w / L)` lane groups. Numerator
//! sums live in padded storage; slots at index `>= w` are computed but never
//! read back. The squared and linear sums are kept per lane, with a separate
//! set of lanes for the final partial group, and folded at the end counting
//! only the first `w % L` lanes of that last group. Lanes are plain arrays;
//! instruction selection is left to the compiler.

use super::{sweep_tile, PairAccumulator, SearchPair, TraceSweep};
use crate::cache::SampleSource;
use crate::error::Result;

/// What a padded lane loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PadFill {
    /// Reload the last valid sample pair, staying inside the fetched range.
    Replicate,
    /// Load a fixed value.
    Value(f32),
}

#[derive(Clone)]
struct LaneAcc<const L: usize> {
    num: Vec<[f64; L]>,
    den_full: [f64; L],
    den_tail: [f64; L],
    ac_full: [f64; L],
    ac_tail: [f64; L],
    m_used: u64,
}

impl<const L: usize> LaneAcc<L> {
    fn new(groups: usize) -> Self {
        Self {
            num: vec![[0.0; L]; groups],
            den_full: [0.0; L],
            den_tail: [0.0; L],
            ac_full: [0.0; L],
            ac_tail: [0.0; L],
            m_used: 0,
        }
    }

    #[inline]
    fn add_window(&mut self, buf: &[f32], k: usize, x: f64, w: usize, pad: PadFill) {
        let groups = self.num.len();
        let tail = w % L;
        let window = &buf[k..k + w + 1];
        for g in 0..groups {
            let mut a = [0.0f64; L];
            let mut b = [0.0f64; L];
            for l in 0..L {
                let j = g * L + l;
                if j < w {
                    a[l] = f64::from(window[j]);
                    b[l] = f64::from(window[j + 1]);
                } else {
                    match pad {
                        PadFill::Replicate => {
                            a[l] = f64::from(window[w - 1]);
                            b[l] = f64::from(window[w]);
                        }
                        PadFill::Value(p) => {
                            a[l] = f64::from(p);
                            b[l] = f64::from(p);
                        }
                    }
                }
            }
            let mut v = [0.0f64; L];
            for l in 0..L {
                v[l] = (b[l] - a[l]) * x + a[l];
            }
            let num = &mut self.num[g];
            for l in 0..L {
                num[l] += v[l];
            }
            let (den, ac) = if g + 1 == groups && tail != 0 {
                (&mut self.den_tail, &mut self.ac_tail)
            } else {
                (&mut self.den_full, &mut self.ac_full)
            };
            for l in 0..L {
                den[l] += v[l] * v[l];
                ac[l] += v[l];
            }
        }
        self.m_used += 1;
    }

    fn fold(&self, w: usize) -> PairAccumulator {
        let tail = w % L;
        let den = self.den_full.iter().sum::<f64>() + self.den_tail[..tail].iter().sum::<f64>();
        let ac = self.ac_full.iter().sum::<f64>() + self.ac_tail[..tail].iter().sum::<f64>();
        PairAccumulator {
            num: self.num.iter().flatten().copied().collect(),
            w,
            den,
            ac_linear: ac,
            m_used: self.m_used,
        }
    }
}

pub(super) fn accumulate<const L: usize, S: SampleSource>(
    sweep: &TraceSweep<'_>,
    pairs: &[SearchPair],
    w: usize,
    pad: PadFill,
    source: &mut S,
) -> Result<Vec<PairAccumulator>> {
    let groups = w.div_ceil(L);
    let mut accs = vec![LaneAcc::<L>::new(groups); pairs.len()];
    sweep_tile(sweep, pairs, w, source, |i, buf, k, x| {
        accs[i].add_window(buf, k, x, w, pad)
    })?;
    Ok(accs.iter().map(|a| a.fold(w)).collect())
}
