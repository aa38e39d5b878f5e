//! NAHT binary tensor container.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `b"NAHT"`           |
//! | 4      | 1    | version (1)               |
//! | 5      | 1    | quantity tag              |
//! | 6      | 2    | reserved, zero            |
//! | 8      | 4    | rows (u32)                |
//! | 12     | 4    | cols (u32)                |
//! | 16     | 32   | manifest hash             |
//! | 48     | 16·n | `(re, im)` f64 pairs      |

use std::path::Path;

use num_complex::Complex64;

use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};

pub const MAGIC: &[u8; 4] = b"NAHT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 48;

/// Largest payload we agree to allocate (2^31 entries).
const MAX_ENTRIES: u64 = 1 << 31;

pub fn encode(field: &ComplexField, hash: &[u8; 32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * field.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(field.quantity().tag());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(field.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(field.cols() as u32).to_le_bytes());
    buf.extend_from_slice(hash);
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<(ComplexField, [u8; 32])> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(NahError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(NahError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(NahError::BadVersion(bytes[4]));
    }
    let quantity = Quantity::from_tag(bytes[5])?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let mut hash = [0u8; 32];
    hash.copy_from_slice(&bytes[16..48]);

    let entries = rows as u64 * cols as u64;
    if entries > MAX_ENTRIES {
        return Err(NahError::ShapeOverflow { rows, cols });
    }
    let expected = HEADER_LEN + 16 * entries as usize;
    if bytes.len() != expected {
        return Err(NahError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<Complex64> = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let field = ComplexField::new(rows as usize, cols as usize, values, quantity)?;
    Ok((field, hash))
}

pub fn write_tensor(path: impl AsRef<Path>, field: &ComplexField, hash: &[u8; 32]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(field, hash)).map_err(|e| NahError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ComplexField> {
    read_tensor_with_hash(path).map(|(f, _)| f)
}

pub fn read_tensor_with_hash(path: impl AsRef<Path>) -> Result<(ComplexField, [u8; 32])> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| NahError::io(path, e))?;
    decode(&bytes)
}
