use std::path::Path;

use super::{parse_header, HEADER_LEN};
use crate::error::{Error, FormatError, Result};
use crate::hypervector::{words_for, Hypervector};

const MAGIC: &[u8; 4] = b"HDCB";
const VERSION: u32 = 1;

/// Serializes hypervectors of a common dimension. An empty list is written
/// with dimension 0.
pub fn encode_hdcb(vectors: &[Hypervector]) -> Result<Vec<u8>> {
    let dim = vectors.first().map_or(0, Hypervector::dim);
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch { left: dim, right: v.dim() });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + vectors.len() * words_for(dim.max(1)) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in vectors {
        for w in v.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_hdcb(bytes: &[u8], path: &str) -> Result<Vec<Hypervector>> {
    let (count, dim) = parse_header(bytes, MAGIC, VERSION, path)?;
    let payload = &bytes[HEADER_LEN..];
    if count == 0 {
        if !payload.is_empty() {
            return Err(Error::format(path, FormatError::TrailingBytes(payload.len())));
        }
        return Ok(Vec::new());
    }
    if dim == 0 {
        return Err(Error::malformed(path, 0, "dimension 0 with a non-empty payload"));
    }
    let row_bytes = words_for(dim) * 8;
    let mut out = Vec::with_capacity(count);
    for row in 0..count {
        let Some(chunk) = payload.get(row * row_bytes..(row + 1) * row_bytes) else {
            return Err(Error::format(path, FormatError::TruncatedPayload { row }));
        };
        let words: Vec<u64> = chunk
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let v = Hypervector::from_words(dim, words.clone())?;
        if v.words() != words.as_slice() {
            return Err(Error::malformed(path, 0, format!("vector {row} has pad bits set beyond dimension {dim}")));
        }
        out.push(v);
    }
    let used = count * row_bytes;
    if payload.len() > used {
        return Err(Error::format(path, FormatError::TrailingBytes(payload.len() - used)));
    }
    Ok(out)
}

pub fn write_hdcb(path: &Path, vectors: &[Hypervector]) -> Result<()> {
    std::fs::write(path, encode_hdcb(vectors)?)?;
    Ok(())
}

pub fn read_hdcb(path: &Path) -> Result<Vec<Hypervector>> {
    decode_hdcb(&std::fs::read(path)?, &path.display().to_string())
}
