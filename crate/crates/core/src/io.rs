//! CSV tables, SHA-256 hashing and the little-endian binary cache
//! (`HBL1` header) for grid stacks and path ensembles.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pde::{Axis, DensityStack, ScalarStack, SpatialGrid};
use crate::sde::{Direction, PathEnsemble};

pub const CACHE_MAGIC: &[u8; 4] = b"HBL1";

const KIND_DENSITY: u8 = 1;
const KIND_SCALAR: u8 = 2;
const KIND_ENSEMBLE: u8 = 3;

/// Ensembles above this many stored values are exported as endpoints only
/// unless the caller asks for full paths.
pub const FULL_PATH_LIMIT: usize = 1 << 24;

/// Hex SHA-256 of the JSON serialisation of `config`.
pub fn cache_key<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Shortest round-trip decimal form, so equal numbers print identically.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Rectangular table written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(kind: u8, key: &str) -> Result<Self> {
        let key = hex::decode(key).map_err(|e| Error::Cache(format!("key is not hex: {e}")))?;
        if key.len() != 32 {
            return Err(Error::Cache(format!("key must be 32 bytes, got {}", key.len())));
        }
        let mut buf = CACHE_MAGIC.to_vec();
        buf.push(kind);
        buf.extend_from_slice(&key);
        Ok(Self { buf })
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    fn grid(&mut self, g: &SpatialGrid) {
        self.u64(g.dim() as u64);
        for a in g.axes() {
            self.f64(a.lo);
            self.f64(a.hi);
            self.u64(a.n as u64);
        }
    }

    fn finish(self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.buf)?;
        w.flush()?;
        Ok(())
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn open(buf: &'a [u8], kind: u8, key: Option<&str>) -> Result<Self> {
        if buf.len() < 37 || &buf[..4] != CACHE_MAGIC {
            return Err(Error::Cache("missing HBL1 header".into()));
        }
        if buf[4] != kind {
            return Err(Error::Cache(format!("record kind {} where {kind} was expected", buf[4])));
        }
        let stored = hex::encode(&buf[5..37]);
        if let Some(k) = key {
            if stored != k {
                return Err(Error::Cache(format!("key mismatch: file has {stored}")));
            }
        }
        Ok(Self { buf, pos: 37 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| Error::Cache("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.buf.len() as u64) {
            return Err(Error::Cache(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn grid(&mut self) -> Result<SpatialGrid> {
        let d = self.len()?;
        let axes = (0..d)
            .map(|_| Ok(Axis { lo: self.f64()?, hi: self.f64()?, n: self.len()? }))
            .collect::<Result<Vec<_>>>()?;
        SpatialGrid::new(axes).map_err(|e| Error::Cache(format!("bad grid: {e}")))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Cache(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn write_density_stack(path: &Path, key: &str, stack: &DensityStack) -> Result<()> {
    let mut e = Encoder::new(KIND_DENSITY, key)?;
    e.grid(&stack.grid);
    e.f64(stack.beta);
    e.f64s(&stack.times);
    for s in &stack.values {
        e.f64s(s);
    }
    e.finish(path)
}

/// Reads a density stack; with `key` set, a file written under another key
/// is rejected.
pub fn read_density_stack(path: &Path, key: Option<&str>) -> Result<DensityStack> {
    let bytes = fs::read(path)?;
    let mut d = Decoder::open(&bytes, KIND_DENSITY, key)?;
    let grid = d.grid()?;
    let beta = d.f64()?;
    let times = d.f64s()?;
    let values = (0..times.len()).map(|_| d.f64s()).collect::<Result<Vec<_>>>()?;
    d.done()?;
    if values.iter().any(|v| v.len() != grid.len()) {
        return Err(Error::Cache("slice length does not match the grid".into()));
    }
    Ok(DensityStack { grid, times, values, beta })
}

pub fn write_scalar_stack(path: &Path, key: &str, stack: &ScalarStack) -> Result<()> {
    let mut e = Encoder::new(KIND_SCALAR, key)?;
    e.grid(&stack.grid);
    e.f64s(&stack.times);
    for (s, m) in stack.values.iter().zip(&stack.valid) {
        e.f64s(s);
        e.u64(m.len() as u64);
        e.buf.extend(m.iter().map(|b| *b as u8));
    }
    e.finish(path)
}

pub fn read_scalar_stack(path: &Path, key: Option<&str>) -> Result<ScalarStack> {
    let bytes = fs::read(path)?;
    let mut d = Decoder::open(&bytes, KIND_SCALAR, key)?;
    let grid = d.grid()?;
    let times = d.f64s()?;
    let mut values = Vec::with_capacity(times.len());
    let mut valid = Vec::with_capacity(times.len());
    for _ in 0..times.len() {
        values.push(d.f64s()?);
        let n = d.len()?;
        valid.push(d.take(n)?.iter().map(|b| *b != 0).collect());
    }
    d.done()?;
    Ok(ScalarStack { grid, times, values, valid })
}

/// Writes an ensemble. Without `full`, only the first and last recorded
/// slices are kept; ensembles above [`FULL_PATH_LIMIT`] values need `full`
/// to be stored whole.
pub fn write_ensemble(path: &Path, key: &str, ens: &PathEnsemble, full: bool) -> Result<()> {
    let slots: Vec<usize> = if full {
        (0..ens.recorded.len()).collect()
    } else {
        let mut s = vec![0, ens.recorded.len() - 1];
        s.dedup();
        s
    };
    if full && ens.values.len() > FULL_PATH_LIMIT {
        return Err(Error::InvalidParameter(format!("{} values exceed the full-path export limit", ens.values.len())));
    }
    let mut e = Encoder::new(KIND_ENSEMBLE, key)?;
    e.u64(ens.dim as u64);
    e.u64(ens.paths as u64);
    e.f64(ens.sigma);
    e.u64(matches!(ens.direction, Direction::Reverse) as u64);
    e.u64(ens.seed);
    e.f64s(&ens.times);
    e.u64(slots.len() as u64);
    for &s in &slots {
        e.u64(ens.recorded[s] as u64);
    }
    for p in 0..ens.paths {
        for &s in &slots {
            for v in ens.state(p, s) {
                e.f64(*v);
            }
        }
    }
    e.f64s(&ens.energy);
    e.finish(path)
}

pub fn read_ensemble(path: &Path, key: Option<&str>) -> Result<PathEnsemble> {
    let bytes = fs::read(path)?;
    let mut d = Decoder::open(&bytes, KIND_ENSEMBLE, key)?;
    let dim = d.len()?;
    let paths = d.len()?;
    let sigma = d.f64()?;
    let direction = if d.u64()? == 1 { Direction::Reverse } else { Direction::Forward };
    let seed = d.u64()?;
    let times = d.f64s()?;
    let n_rec = d.len()?;
    let recorded = (0..n_rec).map(|_| d.len()).collect::<Result<Vec<_>>>()?;
    let values = (0..paths * n_rec * dim).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
    let energy = d.f64s()?;
    d.done()?;
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Ok(PathEnsemble { times, recorded, dt, dim, paths, sigma, direction, seed, values, energy })
}
