//! GIS1 binary stack format, bit-exact by construction.
//!
//! Layout (all scalars little-endian):
//!
//! ```text
//! bytes 0..4    magic "GIS1"
//! byte  4       version, = 1
//! byte  5       dtype,   = 1 (u16 pixels)
//! bytes 6..8    reserved, zero
//! bytes 8..12   width  (u32)
//! bytes 12..16  height (u32)
//! bytes 16..20  n_frames (u32)
//! bytes 20..24  meta block length M (u32)
//! bytes 24..24+M  UTF-8 "key=value\n" lines
//! then width*height*n_frames u16 pixel values, frame-major, row-major
//! ```
//!
//! Writes are deterministic: the meta map is ordered, so the same stack
//! always produces the same bytes. Reads widen u16 payloads to f64
//! losslessly, which makes `read(write(s)) == s` hold bit-exactly for every
//! valid quantized stack.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{FrameError, FrameStack, Meta};

const MAGIC: [u8; 4] = *b"GIS1";
const VERSION: u8 = 1;
const DTYPE_U16: u8 = 1;
const HEADER_LEN: usize = 24;

/// Serialize a quantized stack to GIS1 bytes.
pub fn to_bytes(stack: &FrameStack) -> Result<Vec<u8>, FrameError> {
    let meta_block = encode_meta(&stack.meta)?;
    let n_pixels = stack.pixels().len();
    let mut out = Vec::with_capacity(HEADER_LEN + meta_block.len() + 2 * n_pixels);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_U16);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&stack.width().to_le_bytes());
    out.extend_from_slice(&stack.height().to_le_bytes());
    out.extend_from_slice(&stack.n_frames().to_le_bytes());
    out.extend_from_slice(&(meta_block.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_block);

    let frame_area = stack.width() as usize * stack.height() as usize;
    for (i, &v) in stack.pixels().iter().enumerate() {
        if !(0.0..=65535.0).contains(&v) || v.fract() != 0.0 {
            let frame = (i / frame_area) as u32;
            let in_frame = i % frame_area;
            return Err(FrameError::QuantizationRange {
                frame,
                row: (in_frame / stack.width() as usize) as u32,
                col: (in_frame % stack.width() as usize) as u32,
                value: v,
            });
        }
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    Ok(out)
}

/// Parse GIS1 bytes into a stack.
pub fn from_bytes(bytes: &[u8]) -> Result<FrameStack, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(FrameError::UnsupportedField {
            field: "version",
            value: bytes[4],
        });
    }
    if bytes[5] != DTYPE_U16 {
        return Err(FrameError::UnsupportedField {
            field: "dtype",
            value: bytes[5],
        });
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(FrameError::ReservedNonzero);
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let n_frames = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let meta_len = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as u64;

    let n_pixels = width as u64 * height as u64 * n_frames as u64;
    let expected = HEADER_LEN as u64 + meta_len + 2 * n_pixels;
    if (bytes.len() as u64) < expected {
        return Err(FrameError::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(FrameError::TrailingBytes {
            extra: bytes.len() as u64 - expected,
        });
    }

    let meta_end = HEADER_LEN + meta_len as usize;
    let meta = decode_meta(&bytes[HEADER_LEN..meta_end])?;

    let mut pixels = Vec::with_capacity(n_pixels as usize);
    for chunk in bytes[meta_end..].chunks_exact(2) {
        pixels.push(u16::from_le_bytes([chunk[0], chunk[1]]) as f64);
    }
    FrameStack::new(width, height, n_frames, pixels, meta)
}

/// Write a stack to `path` atomically (temp file in the same directory, then
/// rename), so a failed write never leaves a partial file behind.
pub fn write_stack(stack: &FrameStack, path: &Path) -> Result<(), FrameError> {
    let bytes = to_bytes(stack)?;
    atomic_write(path, &bytes)
}

/// Read a GIS1 file into a stack.
pub fn read_stack(path: &Path) -> Result<FrameStack, FrameError> {
    let bytes = fs::read(path).map_err(|e| FrameError::io(path, e))?;
    from_bytes(&bytes)
}

/// Write `bytes` to `path` through a temp file plus rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), FrameError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile_in(d),
        None => tempfile_in(Path::new(".")),
    }
    .map_err(|e| FrameError::io(path, e))?;
    tmp.1.write_all(bytes).map_err(|e| FrameError::io(path, e))?;
    tmp.1.flush().map_err(|e| FrameError::io(path, e))?;
    drop(tmp.1);
    fs::rename(&tmp.0, path).map_err(|e| {
        let _ = fs::remove_file(&tmp.0);
        FrameError::io(path, e)
    })
}

fn tempfile_in(dir: &Path) -> std::io::Result<(std::path::PathBuf, fs::File)> {
    // Process id plus a counter keeps concurrent writers in one directory apart.
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = format!(".gis1-tmp-{}-{}", std::process::id(), n);
    let path = dir.join(name);
    let file = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)?;
    Ok((path, file))
}

fn encode_meta(meta: &Meta) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::new();
    for (k, v) in meta {
        if k.is_empty() {
            return Err(FrameError::BadMetaEntry {
                key: k.clone(),
                reason: "empty key",
            });
        }
        if k.contains('=') || k.contains('\n') {
            return Err(FrameError::BadMetaEntry {
                key: k.clone(),
                reason: "key contains '=' or newline",
            });
        }
        if v.contains('\n') {
            return Err(FrameError::BadMetaEntry {
                key: k.clone(),
                reason: "value contains newline",
            });
        }
        out.extend_from_slice(k.as_bytes());
        out.push(b'=');
        out.extend_from_slice(v.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

fn decode_meta(block: &[u8]) -> Result<Meta, FrameError> {
    let text = std::str::from_utf8(block).map_err(|e| FrameError::BadMeta {
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut meta = Meta::new();
    for line in text.split('\n') {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FrameError::BadMeta {
            reason: format!("line without '=': {line:?}"),
        })?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Meta;

    fn quantized(width: u32, height: u32, n_frames: u32, values: &[u16]) -> FrameStack {
        let pixels = values.iter().map(|&v| v as f64).collect();
        let mut meta = Meta::new();
        meta.insert("arm".into(), "1".into());
        meta.insert("seed".into(), "42".into());
        FrameStack::new(width, height, n_frames, pixels, meta).unwrap()
    }

    #[test]
    fn round_trip_identity() {
        let s = quantized(2, 2, 1, &[0, 1, 2, 3]);
        let bytes = to_bytes(&s).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.pixels(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn writes_are_deterministic() {
        let s = quantized(3, 2, 2, &[9, 8, 7, 6, 5, 4, 3, 2, 1, 0, 11, 12]);
        assert_eq!(to_bytes(&s).unwrap(), to_bytes(&s).unwrap());
    }

    #[test]
    fn header_encodes_dimensions_little_endian() {
        let pixels = vec![0.0; 658 * 498];
        let s = FrameStack::new(658, 498, 1, pixels, Meta::new()).unwrap();
        let bytes = to_bytes(&s).unwrap();
        assert_eq!(&bytes[8..12], &658u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &498u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
    }

    #[test]
    fn bad_magic_is_format_error() {
        let s = quantized(1, 1, 1, &[5]);
        let mut bytes = to_bytes(&s).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            from_bytes(&bytes),
            Err(FrameError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncation_reports_expected_and_actual() {
        let s = quantized(2, 2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let bytes = to_bytes(&s).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match from_bytes(cut) {
            Err(FrameError::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, cut.len() as u64);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let s = quantized(1, 1, 1, &[1]);
        let mut bytes = to_bytes(&s).unwrap();
        bytes.push(0);
        assert!(matches!(
            from_bytes(&bytes),
            Err(FrameError::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn non_integer_value_is_range_error() {
        let s = FrameStack::new(2, 1, 1, vec![1.5, 2.0], Meta::new()).unwrap();
        match to_bytes(&s) {
            Err(FrameError::QuantizationRange {
                frame, row, col, ..
            }) => {
                assert_eq!((frame, row, col), (0, 0, 0));
            }
            other => panic!("expected quantization error, got {other:?}"),
        }
    }

    #[test]
    fn overflow_value_is_range_error_with_location() {
        let s = FrameStack::new(2, 1, 2, vec![0.0, 1.0, 2.0, 70000.0], Meta::new()).unwrap();
        match to_bytes(&s) {
            Err(FrameError::QuantizationRange { frame, row, col, value }) => {
                assert_eq!((frame, row, col), (1, 0, 1));
                assert_eq!(value, 70000.0);
            }
            other => panic!("expected quantization error, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.gis1");
        let s = quantized(4, 3, 2, &(0..24).map(|v| v as u16).collect::<Vec<_>>());
        write_stack(&s, &path).unwrap();
        let back = read_stack(&path).unwrap();
        assert_eq!(s, back);
        // No temp litter left behind.
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
