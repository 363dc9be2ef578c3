//! The `.cscd` dictionary file format.
//!
//! Layout, all little-endian:
//!   magic "CSCD" | version u16 | K u32 | m u32 |
//!   K*m*m f64 payload (filter-major, row-major within each filter) |
//!   CRC32 (IEEE) of every byte after the magic.
//!
//! Raw f64 bits round-trip exactly, so identical dictionaries produce
//! byte-identical files.

use std::path::Path;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSCD";
const VERSION: u16 = 1;

pub fn encode(dict: &Dictionary) -> Vec<u8> {
    let k = dict.num_filters();
    let m = dict.side();
    let mut bytes = Vec::with_capacity(4 + 2 + 8 + k * m * m * 8 + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(k as u32).to_le_bytes());
    bytes.extend_from_slice(&(m as u32).to_le_bytes());
    for v in dict.to_flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes[4..]);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

pub fn decode(bytes: &[u8]) -> Result<Dictionary> {
    let fail = |reason: &str| Error::DictionaryFormat(reason.to_string());
    if bytes.len() < 4 + 2 + 8 + 4 {
        return Err(fail("file too short"));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic (not a .cscd file)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::DictionaryFormat(format!("unsupported version {version}")));
    }
    let k = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload_len = k
        .checked_mul(m)
        .and_then(|v| v.checked_mul(m))
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| fail("dimensions overflow"))?;
    let expected = 14 + payload_len + 4;
    if bytes.len() != expected {
        return Err(Error::DictionaryFormat(format!(
            "length {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let stored_crc = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    let crc = crc32fast::hash(&bytes[4..expected - 4]);
    if crc != stored_crc {
        return Err(fail("CRC mismatch (corrupt file)"));
    }
    let flat: Vec<f64> = bytes[14..14 + payload_len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Dictionary::from_flat(&flat, k, m)
        .map_err(|e| Error::DictionaryFormat(format!("invalid dictionary: {e}")))
}

pub fn save(path: impl AsRef<Path>, dict: &Dictionary) -> Result<()> {
    std::fs::write(path, encode(dict))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dictionary> {
    decode(&std::fs::read(path)?)
}
