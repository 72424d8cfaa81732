//! File artifacts shared by the commands: atomic text output, key=value
//! records, and ghost-image CSV round trips.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ghostlab_core::frames::gis1::atomic_write;
use ghostlab_core::imaging::{ghost_image_from_values, GhostImage};

/// Write UTF-8 text through a temp file plus rename.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Serialize key=value lines in the given order.
pub fn key_values_to_text(kv: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in kv {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Parse a key=value text record (the registration report, sidecars).
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

/// Load a ghost image from its CSV artifact plus sidecar.
///
/// The CSV carries `x,y,value` rows with `nan` for undefined pixels; the
/// sidecar supplies the order and frame count.
pub fn read_ghost_csv(csv_path: &Path) -> Result<GhostImage> {
    let text = std::fs::read_to_string(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,value") => {}
        other => bail!(
            "{}: expected header \"x,y,value\", got {:?}",
            csv_path.display(),
            other
        ),
    }
    let mut cells: Vec<(u32, u32, Option<f64>)> = Vec::new();
    let mut width = 0u32;
    let mut height = 0u32;
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(xs), Some(ys), Some(vs), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            bail!("{}:{}: malformed row {:?}", csv_path.display(), i + 2, line);
        };
        let x: u32 = xs
            .parse()
            .with_context(|| format!("{}:{}: bad x {:?}", csv_path.display(), i + 2, xs))?;
        let y: u32 = ys
            .parse()
            .with_context(|| format!("{}:{}: bad y {:?}", csv_path.display(), i + 2, ys))?;
        let v = if vs == "nan" {
            None
        } else {
            Some(vs.parse::<f64>().with_context(|| {
                format!("{}:{}: bad value {:?}", csv_path.display(), i + 2, vs)
            })?)
        };
        width = width.max(x + 1);
        height = height.max(y + 1);
        cells.push((x, y, v));
    }
    if cells.is_empty() {
        bail!("{}: no pixel rows", csv_path.display());
    }
    let mut values: Vec<Option<f64>> = vec![None; (width * height) as usize];
    let mut seen = vec![false; (width * height) as usize];
    for (x, y, v) in cells {
        let idx = (y * width + x) as usize;
        if seen[idx] {
            bail!("{}: duplicate pixel ({x}, {y})", csv_path.display());
        }
        seen[idx] = true;
        values[idx] = v;
    }
    if !seen.iter().all(|&s| s) {
        bail!("{}: missing pixels for a dense {width}x{height} image", csv_path.display());
    }

    let sidecar = sidecar_path(csv_path);
    let meta = std::fs::read_to_string(&sidecar)
        .map(|t| parse_key_values(&t))
        .unwrap_or_default();
    let order: u8 = meta.get("order").and_then(|s| s.parse().ok()).unwrap_or(2);
    let n_frames: u32 = meta
        .get("n_frames")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let mut img = ghost_image_from_values(order, width, height, values, n_frames)?;
    img.provenance = meta;
    Ok(img)
}

/// The `.txt` sidecar next to an artifact.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("txt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghost_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ghost_image_from_values(
            3,
            3,
            2,
            vec![Some(0.25), None, Some(-0.5), Some(1.0), Some(0.0), Some(0.125)],
            400,
        )
        .unwrap();
        let csv = dir.path().join("ghost.csv");
        write_text(&csv, &img.to_csv()).unwrap();
        write_text(
            &sidecar_path(&csv),
            &key_values_to_text(&[
                ("order".into(), "3".into()),
                ("n_frames".into(), "400".into()),
            ]),
        )
        .unwrap();
        let back = read_ghost_csv(&csv).unwrap();
        assert_eq!(back.order, 3);
        assert_eq!(back.n_frames, 400);
        assert_eq!(back.width, 3);
        assert_eq!(back.values, img.values);
    }

    #[test]
    fn ghost_csv_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("bad.csv");
        write_text(&csv, "a,b,c\n0,0,1\n").unwrap();
        assert!(read_ghost_csv(&csv).is_err());
    }
}
