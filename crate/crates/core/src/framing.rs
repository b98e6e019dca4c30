//! Binary container shared by model and dataset files:
//!
//! ```text
//! magic (4 bytes) | version u32 LE | meta_len u64 LE | meta (UTF-8 JSON)
//! | payload (f64 LE) | CRC32 LE of everything before it
//! ```

use thiserror::Error;

const HEADER: usize = 4 + 4 + 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FramingError {
    #[error("not a {kind} file (bad magic)")]
    BadMagic { kind: &'static str },
    #[error("unsupported {kind} format version {found} (supported: {supported})")]
    Version {
        kind: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("{kind} file truncated: {detail}")]
    Truncated { kind: &'static str, detail: String },
    #[error("{kind} file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum {
        kind: &'static str,
        stored: u32,
        computed: u32,
    },
    #[error("{kind} metadata invalid: {detail}")]
    Metadata { kind: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Format {
    pub magic: [u8; 4],
    pub version: u32,
    pub kind: &'static str,
}

pub(crate) fn encode(format: Format, meta: &[u8], payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + meta.len() + payload.len() * 8 + 4);
    out.extend_from_slice(&format.magic);
    out.extend_from_slice(&format.version.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Validates the frame and returns `(meta, payload)`.
pub(crate) fn decode(format: Format, bytes: &[u8]) -> Result<(Vec<u8>, Vec<f64>), FramingError> {
    let kind = format.kind;
    if bytes.len() < 4 || bytes[..4] != format.magic {
        return Err(FramingError::BadMagic { kind });
    }
    if bytes.len() < HEADER + 4 {
        return Err(FramingError::Truncated {
            kind,
            detail: format!("{} bytes is shorter than the fixed header", bytes.len()),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != format.version {
        return Err(FramingError::Version {
            kind,
            found: version,
            supported: format.version,
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FramingError::Checksum { kind, stored, computed });
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|l| HEADER.checked_add(l))
        .filter(|&end| end <= body_end)
        .ok_or_else(|| FramingError::Truncated {
            kind,
            detail: format!("metadata length {meta_len} runs past end of file"),
        })?;
    let payload_bytes = &bytes[meta_end..body_end];
    if payload_bytes.len() % 8 != 0 {
        return Err(FramingError::Truncated {
            kind,
            detail: format!("payload of {} bytes is not a whole number of f64", payload_bytes.len()),
        });
    }
    let payload = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((bytes[HEADER..meta_end].to_vec(), payload))
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
