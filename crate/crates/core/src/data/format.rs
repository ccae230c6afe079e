//! The "SSF1" little-endian trace file.
//!
//! ```text
//! magic  u8[4] = "SSF1"
//! version u32  = 1
//! ncdps  u32
//! per gather:  cdp_id u32, M u32, ns u32, dt_us u32
//!   per trace: sx, sy, gx, gy f32, then ns x f32 samples
//! trailer_len u32, then trailer_len bytes of JSON (may be 0)
//! ```
//!
//! The JSON trailer carries `fold` and the synthetic-generator provenance.
//! It is only written when there is something to record, so a dataset with
//! no gathers and no metadata is exactly 16 bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{CdpGather, Dataset, SynthMeta, Trace};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSF1";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Trailer {
    fold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SynthMeta>,
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    encode(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::param(format!("{what} {v} does not fit in u32")))
}

pub(crate) fn encode<W: Write>(dataset: &Dataset, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(to_u32(dataset.gathers.len(), "ncdps")?)?;
    for g in &dataset.gathers {
        out.write_u32::<LittleEndian>(g.cdp_id)?;
        out.write_u32::<LittleEndian>(to_u32(g.traces.len(), "trace count")?)?;
        out.write_u32::<LittleEndian>(to_u32(g.ns, "ns")?)?;
        out.write_u32::<LittleEndian>(g.dt_us)?;
        for t in &g.traces {
            for c in [t.sx, t.sy, t.gx, t.gy] {
                out.write_f32::<LittleEndian>(c)?;
            }
            for &s in &t.samples {
                out.write_f32::<LittleEndian>(s)?;
            }
        }
    }
    let needs_trailer = dataset.meta.is_some() || dataset.fold != dataset.max_traces();
    if needs_trailer {
        let json = serde_json::to_vec(&Trailer {
            fold: dataset.fold,
            synthetic: dataset.meta.clone(),
        })?;
        out.write_u32::<LittleEndian>(to_u32(json.len(), "trailer length")?)?;
        out.write_all(&json)?;
    } else {
        out.write_u32::<LittleEndian>(0)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.offset(),
                format!("truncated file: need {n} bytes for {what}, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        let mut v = vec![0f32; n];
        LittleEndian::read_f32_into(raw, &mut v);
        Ok(v)
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}, expected \"SSF1\"", magic)));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let ncdps = cur.u32("ncdps")? as usize;

    let mut gathers = Vec::with_capacity(ncdps.min(1 << 16));
    // (offset of gather header, trace count) for the fold check below
    let mut headers = Vec::with_capacity(gathers.capacity());
    let mut shape: Option<(usize, u32)> = None;
    for _ in 0..ncdps {
        let at = cur.offset();
        let cdp_id = cur.u32("cdp_id")?;
        let m = cur.u32("trace count")? as usize;
        let ns = cur.u32("ns")? as usize;
        let dt_us = cur.u32("dt_us")?;
        if m == 0 {
            return Err(Error::format(at, format!("cdp {cdp_id} has no traces")));
        }
        if ns == 0 || dt_us == 0 {
            return Err(Error::format(at, format!("cdp {cdp_id}: ns and dt must be positive")));
        }
        match shape {
            None => shape = Some((ns, dt_us)),
            Some((ns0, dt0)) if ns0 != ns || dt0 != dt_us => {
                return Err(Error::format(
                    at,
                    format!("cdp {cdp_id}: ns={ns} dt={dt_us} differs from ns={ns0} dt={dt0}"),
                ));
            }
            Some(_) => {}
        }
        let per_trace = 16usize.saturating_add(ns.saturating_mul(4));
        if m.saturating_mul(per_trace) > cur.remaining() {
            return Err(Error::format(
                at,
                format!("truncated file: cdp {cdp_id} declares {m} traces of {ns} samples"),
            ));
        }
        let mut traces = Vec::with_capacity(m);
        for _ in 0..m {
            let c = cur.f32s(4, "trace coordinates")?;
            let coord_at = cur.offset() - 16;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(coord_at, "non-finite trace coordinate"));
            }
            let samples = cur.f32s(ns, "trace samples")?;
            traces.push(Trace::new(c[0], c[1], c[2], c[3], samples));
        }
        headers.push((at, m));
        gathers.push(CdpGather {
            cdp_id,
            ns,
            dt_us,
            traces,
        });
    }

    let trailer = if cur.remaining() == 0 {
        None
    } else {
        let at = cur.offset();
        let len = cur.u32("trailer length")? as usize;
        let json = cur.take(len, "JSON trailer")?;
        if cur.remaining() != 0 {
            return Err(Error::format(cur.offset(), "unexpected bytes after trailer"));
        }
        if len == 0 {
            None
        } else {
            Some(
                serde_json::from_slice::<Trailer>(json)
                    .map_err(|e| Error::format(at + 4, format!("bad JSON trailer: {e}")))?,
            )
        }
    };

    let max_m = headers.iter().map(|&(_, m)| m).max().unwrap_or(0);
    let (fold, meta) = match trailer {
        Some(t) => (t.fold, t.synthetic),
        None => (max_m, None),
    };
    if let Some(&(at, m)) = headers.iter().find(|&&(_, m)| m > fold) {
        return Err(Error::format(at, format!("gather has {m} traces, fold is {fold}")));
    }
    Ok(Dataset {
        gathers,
        fold,
        meta,
    })
}
