//! The FLD1 binary field format.
//!
//! A 36-byte little-endian header (`"FLD1"`, version, d, components, n, time,
//! nu) followed by `components × n^d` little-endian `f64` values, component
//! by component, each in row-major order. Reading back a written file
//! reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

pub const MAGIC: &[u8; 4] = b"FLD1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

/// Decoded FLD1 header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFileHeader {
    pub version: u32,
    pub dim: u32,
    pub components: u32,
    pub n: u32,
    pub time: f64,
    pub nu: f64,
}

/// Serializes `field` with viscosity `nu`.
pub fn encode(field: &Field, nu: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.ncomp() * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(field.ncomp() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&field.time().to_le_bytes());
    out.extend_from_slice(&nu.to_le_bytes());
    for c in field.components() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Parses an FLD1 byte buffer; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(FieldFileHeader, Field)> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(format!("wrong magic {:?}", &bytes[0..4])));
    }
    let header = FieldFileHeader {
        version: u32_at(bytes, 4),
        dim: u32_at(bytes, 8),
        components: u32_at(bytes, 12),
        n: u32_at(bytes, 16),
        time: f64_at(bytes, 20),
        nu: f64_at(bytes, 28),
    };
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let grid = Grid::new(header.dim as usize, header.n as usize).map_err(|e| bad(e.to_string()))?;
    if header.components == 0 {
        return Err(bad("zero components".into()));
    }
    let expected = header.components as usize * grid.len() * 8;
    if bytes.len() - HEADER_LEN != expected {
        return Err(bad(format!(
            "payload is {} bytes, expected {expected}",
            bytes.len() - HEADER_LEN
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let data: Vec<Vec<f64>> = payload
        .chunks_exact(grid.len() * 8)
        .map(|comp| comp.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    let field = Field::new(grid, header.time, data).map_err(|e| bad(e.to_string()))?;
    Ok((header, field))
}

/// Writes `field` to `path`.
pub fn write(path: &Path, field: &Field, nu: f64) -> Result<()> {
    let bytes = encode(field, nu);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an FLD1 file.
pub fn read(path: &Path) -> Result<(FieldFileHeader, Field)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
