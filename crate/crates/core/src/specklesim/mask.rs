//! Transmission masks modeling the object in the test arm.
//!
//! A mask holds one transmission value per pixel in `[0, 1]`: 0 is opaque,
//! 1 is transparent. Builtins cover the shapes used in ghost-imaging
//! experiments (a curled wire, a double slit, a disk); arbitrary masks load
//! from 8- or 16-bit P5 PGM files.

use crate::frames::pgm::PgmImage;

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    width: u32,
    height: u32,
    /// Row-major transmission values in [0, 1].
    transmission: Vec<f64>,
}

impl ObjectMask {
    pub fn new(width: u32, height: u32, transmission: Vec<f64>) -> Result<Self, SimError> {
        if width == 0 || height == 0 {
            return Err(SimError::BadParams("mask dimensions must be nonzero".into()));
        }
        if transmission.len() != width as usize * height as usize {
            return Err(SimError::BadParams(format!(
                "mask needs {} values, got {}",
                width as usize * height as usize,
                transmission.len()
            )));
        }
        if transmission.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(SimError::BadParams(
                "mask transmission values must lie in [0, 1]".into(),
            ));
        }
        Ok(ObjectMask {
            width,
            height,
            transmission,
        })
    }

    /// Fully transparent mask (no object).
    pub fn transparent(width: u32, height: u32) -> Result<Self, SimError> {
        let n = width as usize * height as usize;
        ObjectMask::new(width, height, vec![1.0; n])
    }

    /// Centered opaque disk. The disk is open (strictly inside the radius),
    /// so radius 0 degenerates to a fully transparent mask.
    pub fn disk(width: u32, height: u32, radius: f64) -> Result<Self, SimError> {
        if radius < 0.0 || 2.0 * radius > width.min(height) as f64 {
            return Err(SimError::MaskGeometry(format!(
                "disk radius {radius} does not fit in {width}x{height}"
            )));
        }
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let mut t = vec![1.0; width as usize * height as usize];
        for y in 0..height {
            for x in 0..width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy < radius * radius {
                    t[(y * width + x) as usize] = 0.0;
                }
            }
        }
        ObjectMask::new(width, height, t)
    }

    /// Opaque screen with two full-height transparent slits of `slit_width`
    /// columns, separated edge-to-edge by `separation` columns, centered.
    pub fn double_slit(
        width: u32,
        height: u32,
        slit_width: u32,
        separation: u32,
    ) -> Result<Self, SimError> {
        if slit_width == 0 {
            return Err(SimError::MaskGeometry("slit width must be >= 1".into()));
        }
        let span = 2 * slit_width + separation;
        if span > width {
            return Err(SimError::MaskGeometry(format!(
                "double slit span {span} exceeds mask width {width}"
            )));
        }
        let c0 = (width - span) / 2;
        let mut t = vec![0.0; width as usize * height as usize];
        for y in 0..height {
            for x in 0..width {
                let in_left = x >= c0 && x < c0 + slit_width;
                let in_right = x >= c0 + slit_width + separation && x < c0 + span;
                if in_left || in_right {
                    t[(y * width + x) as usize] = 1.0;
                }
            }
        }
        ObjectMask::new(width, height, t)
    }

    /// Opaque curled wire: an Archimedean spiral stroke of constant
    /// `thickness`, winding `turns` times from `r_start` out to `r_end`
    /// around the mask center.
    pub fn wire_curl(
        width: u32,
        height: u32,
        thickness: f64,
        turns: f64,
        r_start: f64,
        r_end: f64,
    ) -> Result<Self, SimError> {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Self::wire_curl_at(width, height, cx, cy, thickness, turns, r_start, r_end)
    }

    /// [`ObjectMask::wire_curl`] with an explicit curl center.
    #[allow(clippy::too_many_arguments)]
    pub fn wire_curl_at(
        width: u32,
        height: u32,
        center_x: f64,
        center_y: f64,
        thickness: f64,
        turns: f64,
        r_start: f64,
        r_end: f64,
    ) -> Result<Self, SimError> {
        if !(thickness > 0.0 && turns > 0.0 && r_start >= 0.0 && r_end >= r_start) {
            return Err(SimError::MaskGeometry(format!(
                "bad wire geometry: thickness {thickness}, turns {turns}, radii {r_start}..{r_end}"
            )));
        }
        let reach = r_end + thickness / 2.0;
        if center_x - reach < -0.5
            || center_x + reach > width as f64 - 0.5
            || center_y - reach < -0.5
            || center_y + reach > height as f64 - 0.5
        {
            return Err(SimError::MaskGeometry(format!(
                "wire reach {reach} at ({center_x}, {center_y}) does not fit in {width}x{height}"
            )));
        }
        let mut t = vec![1.0; width as usize * height as usize];
        let theta_max = turns * std::f64::consts::TAU;
        let half = thickness / 2.0;
        let mut theta = 0.0f64;
        while theta <= theta_max {
            let r = r_start + (r_end - r_start) * theta / theta_max;
            let px = center_x + r * theta.cos();
            let py = center_y + r * theta.sin();
            stamp_disk(&mut t, width, height, px, py, half);
            // Advance by ~0.25 px of arc length so the stroke stays solid.
            theta += 0.25 / r.max(1.0);
        }
        ObjectMask::new(width, height, t)
    }

    /// Mask from a P5 image: transmission = sample / maxval.
    pub fn from_pgm(img: &PgmImage) -> Result<Self, SimError> {
        let t = img
            .samples
            .iter()
            .map(|&v| v as f64 / img.maxval as f64)
            .collect();
        ObjectMask::new(img.width, img.height, t)
    }

    /// Render as a 16-bit P5 image (transmission scaled to 0..=65535).
    pub fn to_pgm(&self) -> PgmImage {
        PgmImage {
            width: self.width,
            height: self.height,
            maxval: 65535,
            samples: self
                .transmission
                .iter()
                .map(|&t| (t * 65535.0).round() as u16)
                .collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.transmission
    }

    #[inline]
    pub fn value(&self, row: u32, col: u32) -> f64 {
        self.transmission[(row * self.width + col) as usize]
    }

    /// Fraction of fully opaque pixels, a quick summary for reports.
    pub fn opaque_fraction(&self) -> f64 {
        let opaque = self.transmission.iter().filter(|&&t| t == 0.0).count();
        opaque as f64 / self.transmission.len() as f64
    }
}

fn stamp_disk(t: &mut [f64], width: u32, height: u32, px: f64, py: f64, radius: f64) {
    let x_lo = ((px - radius).floor().max(0.0)) as u32;
    let x_hi = ((px + radius).ceil().min(width as f64 - 1.0)) as u32;
    let y_lo = ((py - radius).floor().max(0.0)) as u32;
    let y_hi = ((py + radius).ceil().min(height as f64 - 1.0)) as u32;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - px;
            let dy = y as f64 - py;
            if dx * dx + dy * dy <= radius * radius {
                t[(y * width + x) as usize] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_disk_is_transparent() {
        let m = ObjectMask::disk(16, 16, 0.0).unwrap();
        assert!(m.values().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn disk_blocks_center() {
        let m = ObjectMask::disk(17, 17, 4.0).unwrap();
        assert_eq!(m.value(8, 8), 0.0);
        assert_eq!(m.value(0, 0), 1.0);
    }

    #[test]
    fn double_slit_transparent_pixel_count() {
        let (w, h, sw, sep) = (32, 10, 3, 5);
        let m = ObjectMask::double_slit(w, h, sw, sep).unwrap();
        let transparent = m.values().iter().filter(|&&t| t == 1.0).count();
        assert_eq!(transparent, (2 * sw * h) as usize);
    }

    #[test]
    fn double_slit_too_wide_is_geometry_error() {
        assert!(matches!(
            ObjectMask::double_slit(8, 8, 4, 4),
            Err(SimError::MaskGeometry(_))
        ));
    }

    #[test]
    fn wire_curl_is_opaque_stroke_inside_bounds() {
        let m = ObjectMask::wire_curl(64, 64, 4.0, 2.0, 6.0, 24.0).unwrap();
        let opaque = m.opaque_fraction();
        assert!(opaque > 0.05 && opaque < 0.6, "opaque fraction {opaque}");
        // Corners stay clear.
        assert_eq!(m.value(0, 0), 1.0);
        assert_eq!(m.value(63, 63), 1.0);
    }

    #[test]
    fn wire_curl_reach_checked() {
        assert!(matches!(
            ObjectMask::wire_curl(32, 32, 4.0, 2.0, 4.0, 20.0),
            Err(SimError::MaskGeometry(_))
        ));
    }

    #[test]
    fn all_zero_pgm_is_fully_opaque() {
        let img = PgmImage {
            width: 4,
            height: 3,
            maxval: 255,
            samples: vec![0; 12],
        };
        let m = ObjectMask::from_pgm(&img).unwrap();
        assert!(m.values().iter().all(|&t| t == 0.0));
        assert_eq!(m.opaque_fraction(), 1.0);
    }

    #[test]
    fn pgm_round_trip_preserves_binary_masks() {
        let m = ObjectMask::disk(9, 9, 3.0).unwrap();
        let back = ObjectMask::from_pgm(&m.to_pgm()).unwrap();
        assert_eq!(m, back);
    }
}
