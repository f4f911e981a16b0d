//! Reader and writer for the IDX binary array format (unsigned-byte
//! element type only), the classic container for image-classification
//! datasets: a four-byte header `00 00 08 <rank>`, `rank` big-endian u32
//! extents, then the row-major payload.

use thiserror::Error;

/// Failures while decoding an IDX payload.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic: first two bytes must be zero, found {0:#04x} {1:#04x}")]
    BadMagic(u8, u8),
    #[error("unsupported element type {0:#04x}: only unsigned byte (0x08) is supported")]
    UnsupportedElementType(u8),
    #[error("rank {0} outside the supported range 1..=3")]
    BadRank(u8),
    #[error("truncated payload: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("trailing data: expected {expected} bytes total, got {got}")]
    Trailing { expected: usize, got: usize },
}

/// A decoded IDX array: extents plus the flat row-major bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decode an unsigned-byte IDX payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            needed: 4,
            got: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic(bytes[0], bytes[1]));
    }
    if bytes[2] != 0x08 {
        return Err(IdxError::UnsupportedElementType(bytes[2]));
    }
    let rank = bytes[3];
    if !(1..=3).contains(&rank) {
        return Err(IdxError::BadRank(rank));
    }
    let rank = rank as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            needed: header,
            got: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(rank);
    for d in 0..rank {
        let off = 4 + 4 * d;
        let extent = u32::from_be_bytes([
            bytes[off],
            bytes[off + 1],
            bytes[off + 2],
            bytes[off + 3],
        ]);
        dims.push(extent as usize);
    }
    let payload: usize = dims.iter().product();
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            needed: expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::Trailing {
            expected,
            got: bytes.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Encode a flat unsigned-byte array with the given extents.
///
/// # Panics
/// If the extents do not multiply to the data length or the rank is
/// outside 1..=3.
pub fn write_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    assert!(
        (1..=3).contains(&dims.len()),
        "rank {} outside 1..=3",
        dims.len()
    );
    let len: usize = dims.iter().product();
    assert_eq!(len, data.len(), "extents do not match the payload length");
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&[0, 0, 0x08, dims.len() as u8]);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}
