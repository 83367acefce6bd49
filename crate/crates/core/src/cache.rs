//! On-disk caches for edge tables and backward weights.
//!
//! Layout (little-endian): 4-byte magic, `u32` format version, 32-byte key,
//! `u32` grid width and height, `f64` length band, `u64` slot count, then for
//! DP tables a `u32` depth, then the `f64` values. A file whose key or
//! geometry differs from the request is a miss, not an error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dp::DPTables;
use crate::grammar::GrammarParams;
use crate::grid::EdgeLayout;
use crate::image::GrayImage;
use crate::likelihood::{EdgeScoreTable, LikelihoodConfig};

const EDGE_MAGIC: &[u8; 4] = b"SGET";
const DP_MAGIC: &[u8; 4] = b"SGDP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: corrupt cache file ({reason})")]
    Corrupt { path: String, reason: &'static str },
}

pub type Key = [u8; 32];

/// Key of an edge table: image content, grid, length band and the
/// quadrature settings. `lambda` is not part of it.
pub fn edge_key(image: &GrayImage, layout: &EdgeLayout, cfg: &LikelihoodConfig) -> Key {
    let mut h = Sha256::new();
    h.update(b"edges");
    h.update(image.content_hash().as_bytes());
    let g = layout.grid();
    h.update((g.width as u64).to_le_bytes());
    h.update((g.height as u64).to_le_bytes());
    h.update(layout.l_min().to_bits().to_le_bytes());
    h.update(layout.l_max().to_bits().to_le_bytes());
    h.update(cfg.smooth_sigma.to_bits().to_le_bytes());
    h.update(cfg.sample_spacing.to_bits().to_le_bytes());
    h.finalize().into()
}

/// Key of a set of backward weights computed from the table with `edge_key`.
pub fn dp_key(edge_key: &Key, params: &GrammarParams, lambda: f64, depth: usize) -> Key {
    let mut h = Sha256::new();
    h.update(b"dp");
    h.update(edge_key);
    h.update(serde_json::to_vec(params).expect("params serialize"));
    h.update(lambda.to_bits().to_le_bytes());
    h.update((depth as u64).to_le_bytes());
    h.finalize().into()
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, prefix: &str, key: &Key) -> PathBuf {
        self.dir.join(format!("{prefix}-{}.bin", crate::image::hex(&key[..8])))
    }

    pub fn load_edges(&self, key: &Key, layout: &EdgeLayout) -> Result<Option<EdgeScoreTable>, CacheError> {
        let path = self.path("edges", key);
        let Some(bytes) = read_if_exists(&path)? else {
            return Ok(None);
        };
        let mut r = Reader::new(&bytes, &path);
        if !r.header(EDGE_MAGIC, key, layout)? {
            return Ok(None);
        }
        let values = r.f64s(layout.n_slots())?;
        r.finish()?;
        Ok(Some(EdgeScoreTable::from_values(layout.clone(), values)))
    }

    pub fn store_edges(&self, key: &Key, table: &EdgeScoreTable) -> Result<(), CacheError> {
        let mut buf = header(EDGE_MAGIC, key, table.layout());
        put_f64s(&mut buf, table.values());
        self.write(&self.path("edges", key), &buf)
    }

    pub fn load_dp(&self, key: &Key, layout: &EdgeLayout, depth: usize) -> Result<Option<DPTables>, CacheError> {
        let path = self.path("dp", key);
        let Some(bytes) = read_if_exists(&path)? else {
            return Ok(None);
        };
        let mut r = Reader::new(&bytes, &path);
        if !r.header(DP_MAGIC, key, layout)? || r.u32()? as usize != depth {
            return Ok(None);
        }
        let levels = (0..=depth)
            .map(|_| r.f64s(layout.n_slots()))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Some(DPTables::from_levels(layout.clone(), levels)))
    }

    pub fn store_dp(&self, key: &Key, tables: &DPTables) -> Result<(), CacheError> {
        let mut buf = header(DP_MAGIC, key, tables.layout());
        buf.extend_from_slice(&(tables.depth() as u32).to_le_bytes());
        for level in tables.levels() {
            put_f64s(&mut buf, level);
        }
        self.write(&self.path("dp", key), &buf)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(io)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

fn read_if_exists(path: &Path) -> Result<Option<Vec<u8>>, CacheError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(CacheError::Io {
            path: path.display().to_string(),
            source,
        }),
    }
}

fn header(magic: &[u8; 4], key: &Key, layout: &EdgeLayout) -> Vec<u8> {
    let mut buf = Vec::with_capacity(72 + 8 * layout.n_slots());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(key);
    let g = layout.grid();
    buf.extend_from_slice(&(g.width as u32).to_le_bytes());
    buf.extend_from_slice(&(g.height as u32).to_le_bytes());
    buf.extend_from_slice(&layout.l_min().to_le_bytes());
    buf.extend_from_slice(&layout.l_max().to_le_bytes());
    buf.extend_from_slice(&(layout.n_slots() as u64).to_le_bytes());
    buf
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader { bytes, pos: 0, path }
    }

    fn corrupt(&self, reason: &'static str) -> CacheError {
        CacheError::Corrupt {
            path: self.path.display().to_string(),
            reason,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CacheError> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// `Ok(false)` when the file is valid but describes something else.
    fn header(&mut self, magic: &[u8; 4], key: &Key, layout: &EdgeLayout) -> Result<bool, CacheError> {
        if self.take(4)? != magic {
            return Err(self.corrupt("bad magic"));
        }
        if self.u32()? != VERSION {
            return Ok(false);
        }
        let same_key = self.take(32)? == key;
        let g = layout.grid();
        let same_geometry = self.u32()? as usize == g.width
            && self.u32()? as usize == g.height
            && self.f64()? == layout.l_min()
            && self.f64()? == layout.l_max()
            && self.u64()? as usize == layout.n_slots();
        Ok(same_key && same_geometry)
    }

    fn finish(&self) -> Result<(), CacheError> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt("trailing bytes"));
        }
        Ok(())
    }
}
