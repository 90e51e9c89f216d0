//! Binary cache of assembled lattice weights.
//!
//! Layout (little endian): magic `FDWC`, format version `u32`, `dim u32`,
//! `dim` × nodes-per-axis `u64`, `h f64`, `s f64`, diagonal `f64`, coupling
//! count `u64`, couplings `f64`. The weights are translation invariant, so the
//! key is (dim, extents, h, s) and the box origin does not enter.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fracdrift::domain::GridSpec;
use fracdrift::fraclap::NonlocalOperator;

use crate::error::{LabError, LabResult};

const MAGIC: &[u8; 4] = b"FDWC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct WeightCache {
    dir: PathBuf,
}

impl WeightCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, grid: &GridSpec, s: f64) -> PathBuf {
        let mut hasher = Sha256::new();
        hasher.update(FORMAT_VERSION.to_le_bytes());
        hasher.update((grid.dim() as u32).to_le_bytes());
        for &n in grid.nodes_per_axis() {
            hasher.update((n as u64).to_le_bytes());
        }
        hasher.update(grid.h().to_bits().to_le_bytes());
        hasher.update(s.to_bits().to_le_bytes());
        let digest = hasher.finalize();
        let key: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("weights-{key}.bin"))
    }

    /// Loads the operator from the cache, assembling and storing it on a miss
    /// or on a stale/corrupt entry.
    pub fn load_or_assemble(&self, grid: &GridSpec, s: f64) -> LabResult<(NonlocalOperator, bool)> {
        let path = self.path_for(grid, s);
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            if let Ok((diagonal, couplings)) = decode(&bytes, grid, s) {
                return Ok((NonlocalOperator::from_parts(grid, s, diagonal, couplings)?, true));
            }
        }
        let op = NonlocalOperator::assemble(grid, s)?;
        fs::create_dir_all(&self.dir).map_err(|e| LabError::io(&self.dir, e))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, encode(&op)).map_err(|e| LabError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| LabError::io(&path, e))?;
        Ok((op, false))
    }
}

pub fn encode(op: &NonlocalOperator) -> Vec<u8> {
    let grid = op.grid();
    let mut out = Vec::with_capacity(64 + 8 * op.couplings().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &n in grid.nodes_per_axis() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&grid.h().to_le_bytes());
    out.extend_from_slice(&op.order().to_le_bytes());
    out.extend_from_slice(&op.diagonal().to_le_bytes());
    out.extend_from_slice(&(op.couplings().len() as u64).to_le_bytes());
    for w in op.couplings() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], &'static str> {
        if self.bytes.len() < N {
            return Err("truncated");
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, &'static str> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, &'static str> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, &'static str> {
        self.take().map(f64::from_le_bytes)
    }
}

/// Returns `(diagonal, couplings)` if the header matches `grid` and `s`.
pub fn decode(bytes: &[u8], grid: &GridSpec, s: f64) -> Result<(f64, Vec<f64>), &'static str> {
    let mut r = Reader { bytes };
    if &r.take::<4>()? != MAGIC {
        return Err("bad magic");
    }
    if r.u32()? != FORMAT_VERSION {
        return Err("format version mismatch");
    }
    if r.u32()? as usize != grid.dim() {
        return Err("dimension mismatch");
    }
    for &n in grid.nodes_per_axis() {
        if r.u64()? as usize != n {
            return Err("extent mismatch");
        }
    }
    if r.f64()?.to_bits() != grid.h().to_bits() || r.f64()?.to_bits() != s.to_bits() {
        return Err("parameter mismatch");
    }
    let diagonal = r.f64()?;
    let count = r.u64()? as usize;
    if r.bytes.len() != 8 * count {
        return Err("coupling count mismatch");
    }
    let couplings = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok((diagonal, couplings))
}

/// Debug dump: one row per lattice offset.
pub fn dump_weights_csv(op: &NonlocalOperator, path: &Path) -> LabResult<()> {
    let grid = op.grid();
    let dim = grid.dim();
    let reach = op.reach();
    let mut file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut text = String::new();
    text.push_str(if dim == 1 { "k0,weight\n" } else { "k0,k1,weight\n" });
    text.push_str(&format!("{}diagonal,{:.17e}\n", if dim == 1 { "" } else { "," }, op.diagonal()));
    let width0 = 2 * reach[0] + 1;
    for (idx, w) in op.couplings().iter().enumerate() {
        let k0 = (idx % width0) as isize - reach[0] as isize;
        if dim == 1 {
            text.push_str(&format!("{k0},{w:.17e}\n"));
        } else {
            let k1 = (idx / width0) as isize - reach[1] as isize;
            text.push_str(&format!("{k0},{k1},{w:.17e}\n"));
        }
    }
    file.write_all(text.as_bytes()).map_err(|e| LabError::io(path, e))
}
