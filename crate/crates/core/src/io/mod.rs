//! Binary codebook dumps (HDCB), embedding matrices (HDCE) and their text
//! index files.

mod hdcb;
mod hdce;

pub use hdcb::{decode_hdcb, encode_hdcb, read_hdcb, write_hdcb};
pub use hdce::{
    decode_hdce, encode_hdce, format_index, load_embeddings, parse_index, read_hdce, save_embeddings, EmbeddingTable,
    IndexEntry,
};

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

/// Checks magic and version, returning the two u32 fields that follow.
fn parse_header(bytes: &[u8], magic: &[u8; 4], version: u32, path: &str) -> crate::Result<(usize, usize)> {
    use crate::error::{Error, FormatError};
    if bytes.len() < 4 {
        return Err(Error::format(path, FormatError::TruncatedHeader));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            },
        ));
    }
    let found = read_u32(bytes, 4).ok_or_else(|| Error::format(path, FormatError::TruncatedHeader))?;
    if found != version {
        return Err(Error::format(
            path,
            FormatError::UnsupportedVersion {
                expected: version,
                found,
            },
        ));
    }
    match (read_u32(bytes, 8), read_u32(bytes, 12)) {
        (Some(a), Some(b)) => Ok((a as usize, b as usize)),
        _ => Err(Error::format(path, FormatError::TruncatedHeader)),
    }
}

const HEADER_LEN: usize = 16;
