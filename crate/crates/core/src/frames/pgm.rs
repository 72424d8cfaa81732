//! Binary PGM (P5) import/export.
//!
//! Used for object masks, rendered frames and correlation heatmaps. Per the
//! netpbm convention, 16-bit samples are stored most-significant byte first.

use std::fs;
use std::path::Path;

use super::{gis1::atomic_write, FrameError};

/// A decoded P5 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    /// Row-major samples, one per pixel, already widened to u16.
    pub samples: Vec<u16>,
}

/// Outcome of min-max normalizing real data for rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderScale {
    pub min: f64,
    pub max: f64,
    /// Pixels rendered as the sentinel value 0 because they were undefined.
    pub undefined: usize,
    /// True when the data had zero dynamic range and mid-gray was emitted.
    pub degenerate: bool,
}

/// Serialize a P5 image.
pub fn to_bytes(img: &PgmImage) -> Result<Vec<u8>, FrameError> {
    if img.width == 0 || img.height == 0 {
        return Err(FrameError::BadPgm {
            reason: "zero dimension".into(),
        });
    }
    if img.maxval == 0 {
        return Err(FrameError::BadPgm {
            reason: "maxval must be >= 1".into(),
        });
    }
    let n = img.width as usize * img.height as usize;
    if img.samples.len() != n {
        return Err(FrameError::BadPgm {
            reason: format!("expected {} samples, got {}", n, img.samples.len()),
        });
    }
    if let Some(&v) = img.samples.iter().find(|&&v| v > img.maxval) {
        return Err(FrameError::BadPgm {
            reason: format!("sample {} exceeds maxval {}", v, img.maxval),
        });
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval < 256 {
        out.extend(img.samples.iter().map(|&v| v as u8));
    } else {
        for &v in &img.samples {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

/// Parse a P5 image, accepting whitespace and `#` comments in the header.
pub fn from_bytes(bytes: &[u8]) -> Result<PgmImage, FrameError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(FrameError::BadPgm {
            reason: format!("magic {:?}, expected P5", String::from_utf8_lossy(&magic)),
        });
    }
    let width: u32 = parse_number(&next_token(bytes, &mut pos)?)?;
    let height: u32 = parse_number(&next_token(bytes, &mut pos)?)?;
    let maxval: u32 = parse_number(&next_token(bytes, &mut pos)?)?;
    if width == 0 || height == 0 {
        return Err(FrameError::BadPgm {
            reason: "zero dimension".into(),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(FrameError::BadPgm {
            reason: format!("maxval {maxval} out of range 1..=65535"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FrameError::BadPgm {
            reason: "missing raster separator".into(),
        });
    }
    pos += 1;
    let n = width as usize * height as usize;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = n * bytes_per;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(FrameError::BadPgm {
            reason: format!("raster truncated: expected {} bytes, got {}", need, raster.len()),
        });
    }
    let mut samples = Vec::with_capacity(n);
    if bytes_per == 1 {
        samples.extend(raster[..need].iter().map(|&b| b as u16));
    } else {
        for chunk in raster[..need].chunks_exact(2) {
            samples.push(u16::from_be_bytes([chunk[0], chunk[1]]));
        }
    }
    if let Some(&v) = samples.iter().find(|&&v| v as u32 > maxval) {
        return Err(FrameError::BadPgm {
            reason: format!("sample {v} exceeds maxval {maxval}"),
        });
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn write_pgm(img: &PgmImage, path: &Path) -> Result<(), FrameError> {
    let bytes = to_bytes(img)?;
    atomic_write(path, &bytes)
}

pub fn read_pgm(path: &Path) -> Result<PgmImage, FrameError> {
    let bytes = fs::read(path).map_err(|e| FrameError::io(path, e))?;
    from_bytes(&bytes)
}

/// Min-max normalize real-valued data to a 16-bit P5 image.
///
/// `None` entries are undefined pixels; they render as the sentinel value 0
/// and are counted in the returned scale. Zero dynamic range renders at
/// mid-gray (`maxval / 2`) so flat data stays total rather than failing.
pub fn render_f64(
    width: u32,
    height: u32,
    values: &[Option<f64>],
) -> Result<(PgmImage, RenderScale), FrameError> {
    const MAXVAL: u16 = 65535;
    let n = width as usize * height as usize;
    if values.len() != n {
        return Err(FrameError::BadPgm {
            reason: format!("expected {} values, got {}", n, values.len()),
        });
    }
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let undefined = n - defined.len();
    let (min, max) = defined.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let degenerate = defined.is_empty() || min == max;
    let samples: Vec<u16> = values
        .iter()
        .map(|v| match v {
            None => 0u16,
            Some(x) if degenerate => {
                let _ = x;
                MAXVAL / 2
            }
            Some(x) => (((x - min) / (max - min)) * MAXVAL as f64).round() as u16,
        })
        .collect();
    let scale = RenderScale {
        min: if defined.is_empty() { f64::NAN } else { min },
        max: if defined.is_empty() { f64::NAN } else { max },
        undefined,
        degenerate,
    };
    Ok((
        PgmImage {
            width,
            height,
            maxval: MAXVAL,
            samples,
        },
        scale,
    ))
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>, FrameError> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FrameError::BadPgm {
            reason: "unexpected end of header".into(),
        });
    }
    Ok(bytes[start..*pos].to_vec())
}

fn parse_number(token: &[u8]) -> Result<u32, FrameError> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FrameError::BadPgm {
            reason: format!("bad header number {:?}", String::from_utf8_lossy(token)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_8bit() {
        let img = PgmImage {
            width: 3,
            height: 2,
            maxval: 255,
            samples: vec![0, 10, 255, 128, 1, 2],
        };
        let back = from_bytes(&to_bytes(&img).unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn round_trip_16bit_big_endian() {
        let img = PgmImage {
            width: 2,
            height: 1,
            maxval: 65535,
            samples: vec![0x0102, 0xFFEE],
        };
        let bytes = to_bytes(&img).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0x01, 0x02, 0xFF, 0xEE]);
        assert_eq!(from_bytes(&bytes).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5 # comment\n# another\n 2 1\n255\n\x05\x06".to_vec();
        let img = from_bytes(&bytes).unwrap();
        assert_eq!(img.samples, vec![5, 6]);
    }

    #[test]
    fn render_constant_data_is_mid_gray() {
        let values = vec![Some(3.5); 4];
        let (img, scale) = render_f64(2, 2, &values).unwrap();
        assert!(scale.degenerate);
        assert!(img.samples.iter().all(|&v| v == 65535 / 2));
    }

    #[test]
    fn render_undefined_pixels_are_zero() {
        let values = vec![Some(0.0), None, Some(1.0), Some(0.5)];
        let (img, scale) = render_f64(2, 2, &values).unwrap();
        assert_eq!(scale.undefined, 1);
        assert_eq!(img.samples[1], 0);
        assert_eq!(img.samples[0], 0);
        assert_eq!(img.samples[2], 65535);
        assert_eq!(img.samples[3], 32768);
    }

    #[test]
    fn render_is_deterministic() {
        let values: Vec<Option<f64>> = (0..9).map(|v| Some(v as f64 * 0.37)).collect();
        let a = render_f64(3, 3, &values).unwrap();
        let b = render_f64(3, 3, &values).unwrap();
        assert_eq!(to_bytes(&a.0).unwrap(), to_bytes(&b.0).unwrap());
    }
}
