//! "SMB1" pick files.
//!
//! Little-endian: magic `SMB1`, version u32 = 1, ncdps u32, flags u32
//! (bit 0: full matrices present). Per CDP: cdp_id u32, ns u32, nc u32, then
//! `ns` picks of (velocity f32, semblance f32), then if flagged the `ns x nc`
//! semblance matrix as row-major f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::cmp::SemblanceMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SMB1";
pub const VERSION: u32 = 1;
pub const FLAG_MATRIX: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PickRecord {
    pub cdp_id: u32,
    pub ns: usize,
    pub nc: usize,
    /// `(velocity, semblance)` per sample.
    pub picks: Vec<(f32, f32)>,
    pub matrix: Option<Vec<f32>>,
}

impl PickRecord {
    pub fn from_matrix(m: &SemblanceMatrix, with_matrix: bool) -> Self {
        Self {
            cdp_id: m.cdp_id,
            ns: m.ns,
            nc: m.nc(),
            picks: m
                .best
                .iter()
                .map(|p| (p.velocity as f32, p.semblance as f32))
                .collect(),
            matrix: with_matrix.then(|| m.values.iter().map(|&v| v as f32).collect()),
        }
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::param(format!("{what} {v} does not fit in u32")))
}

pub fn write_picks<W: Write>(out: &mut W, matrices: &[SemblanceMatrix], with_matrix: bool) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(to_u32(matrices.len(), "cdp count")?)?;
    out.write_u32::<LittleEndian>(if with_matrix { FLAG_MATRIX } else { 0 })?;
    for m in matrices {
        out.write_u32::<LittleEndian>(m.cdp_id)?;
        out.write_u32::<LittleEndian>(to_u32(m.ns, "ns")?)?;
        out.write_u32::<LittleEndian>(to_u32(m.nc(), "nc")?)?;
        for p in &m.best {
            out.write_f32::<LittleEndian>(p.velocity as f32)?;
            out.write_f32::<LittleEndian>(p.semblance as f32)?;
        }
        if with_matrix {
            for &v in &m.values {
                out.write_f32::<LittleEndian>(v as f32)?;
            }
        }
    }
    Ok(())
}

struct Counting<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

fn field<R: Read, T>(
    r: &mut Counting<R>,
    read: impl FnOnce(&mut Counting<R>) -> std::io::Result<T>,
) -> Result<T> {
    let at = r.pos;
    read(r).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(at, "truncated file"),
        _ => Error::Io(e),
    })
}

pub fn read_picks<R: Read>(input: R) -> Result<Vec<PickRecord>> {
    let mut r = Counting { inner: input, pos: 0 };
    let mut magic = [0u8; 4];
    field(&mut r, |r| r.read_exact(&mut magic))?;
    if &magic != MAGIC {
        return Err(Error::format(0, "bad magic, expected SMB1"));
    }
    let version = field(&mut r, |r| r.read_u32::<LittleEndian>())?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n = field(&mut r, |r| r.read_u32::<LittleEndian>())?;
    let flags = field(&mut r, |r| r.read_u32::<LittleEndian>())?;
    if flags & !FLAG_MATRIX != 0 {
        return Err(Error::format(12, format!("unknown flags {flags:#x}")));
    }
    let mut out = Vec::new();
    for _ in 0..n {
        let cdp_id = field(&mut r, |r| r.read_u32::<LittleEndian>())?;
        let ns = field(&mut r, |r| r.read_u32::<LittleEndian>())? as usize;
        let nc = field(&mut r, |r| r.read_u32::<LittleEndian>())? as usize;
        let mut picks = Vec::new();
        for _ in 0..ns {
            let v = field(&mut r, |r| r.read_f32::<LittleEndian>())?;
            let s = field(&mut r, |r| r.read_f32::<LittleEndian>())?;
            picks.push((v, s));
        }
        let matrix = if flags & FLAG_MATRIX != 0 {
            let mut m = Vec::new();
            for _ in 0..ns * nc {
                m.push(field(&mut r, |r| r.read_f32::<LittleEndian>())?);
            }
            Some(m)
        } else {
            None
        };
        out.push(PickRecord {
            cdp_id,
            ns,
            nc,
            picks,
            matrix,
        });
    }
    let at = r.pos;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::format(at, "trailing bytes after last cdp"));
    }
    Ok(out)
}

pub fn write_picks_file(path: impl AsRef<Path>, matrices: &[SemblanceMatrix], with_matrix: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_picks(&mut w, matrices, with_matrix)?;
    w.flush()?;
    Ok(())
}

pub fn read_picks_file(path: impl AsRef<Path>) -> Result<Vec<PickRecord>> {
    read_picks(BufReader::new(File::open(path)?))
}
