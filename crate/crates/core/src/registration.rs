//! Inter-arm registration by exhaustive displacement search.
//!
//! For every integer displacement in a search window, the probe region is
//! shifted and the spatial correlation coefficient against the reference
//! region is computed per frame, then averaged over frames. The argmax of
//! the resulting [`CorrelationMap`] is the displacement between correlated
//! regions; the FWHM of the peak measures the speckle size.
//!
//! The search is deliberately exhaustive and pixel-by-pixel: every map cell
//! is the plain per-frame spatial correlation estimator, with no transform
//! shortcuts, so the map values are directly interpretable.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::CorrelationValue;
use crate::frames::pgm::{render_f64, PgmImage, RenderScale};
use crate::frames::{Displacement, FrameError, FrameStack, FrameView, Region};

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("region views differ in shape: {a_w}x{a_h} vs {b_w}x{b_h}")]
    ViewMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("regions need at least 2 pixels for a spatial correlation")]
    RegionTooSmall,
    #[error("stacks have different frame counts: {a} vs {b}")]
    FrameCountMismatch { a: u32, b: u32 },
    #[error("search bounds {0:?} are empty")]
    EmptyBounds(SearchBounds),
    #[error("correlation map has no defined values")]
    AllUndefined,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Inclusive displacement search window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    pub dx_min: i32,
    pub dx_max: i32,
    pub dy_min: i32,
    pub dy_max: i32,
}

impl SearchBounds {
    /// Window of +/- `rx` columns and +/- `ry` rows around zero.
    pub fn symmetric(rx: i32, ry: i32) -> Self {
        SearchBounds {
            dx_min: -rx,
            dx_max: rx,
            dy_min: -ry,
            dy_max: ry,
        }
    }

    pub fn n_cols(&self) -> usize {
        (self.dx_max - self.dx_min + 1).max(0) as usize
    }

    pub fn n_rows(&self) -> usize {
        (self.dy_max - self.dy_min + 1).max(0) as usize
    }

    pub fn contains(&self, d: Displacement) -> bool {
        d.dx >= self.dx_min && d.dx <= self.dx_max && d.dy >= self.dy_min && d.dy <= self.dy_max
    }

    fn displacements(&self) -> Vec<Displacement> {
        let mut out = Vec::with_capacity(self.n_rows() * self.n_cols());
        for dy in self.dy_min..=self.dy_max {
            for dx in self.dx_min..=self.dx_max {
                out.push(Displacement::new(dx, dy));
            }
        }
        out
    }
}

/// Mean-over-frames spatial correlation for every displacement in a window.
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    bounds: SearchBounds,
    /// Row-major over (dy, dx); `None` where no frame gave a defined value.
    values: Vec<Option<f64>>,
    /// Frames that contributed per cell (undefined frames are skipped).
    frames_used: Vec<u32>,
    n_frames: u32,
}

impl CorrelationMap {
    pub fn bounds(&self) -> SearchBounds {
        self.bounds
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    fn index(&self, d: Displacement) -> Option<usize> {
        if !self.bounds.contains(d) {
            return None;
        }
        let row = (d.dy - self.bounds.dy_min) as usize;
        let col = (d.dx - self.bounds.dx_min) as usize;
        Some(row * self.bounds.n_cols() + col)
    }

    pub fn value(&self, d: Displacement) -> Option<f64> {
        self.index(d).and_then(|i| self.values[i])
    }

    pub fn frames_used(&self, d: Displacement) -> Option<u32> {
        self.index(d).map(|i| self.frames_used[i])
    }

    /// Total frame evaluations skipped for zero spatial variance.
    pub fn skipped_frames(&self) -> u64 {
        self.frames_used
            .iter()
            .map(|&u| (self.n_frames - u) as u64)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Displacement, Option<f64>)> + '_ {
        self.bounds
            .displacements()
            .into_iter()
            .zip(self.values.iter().copied())
    }

    /// CSV with a `dx,dy,value` header; undefined cells print as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dx,dy,value\n");
        for (d, v) in self.iter() {
            match v {
                Some(v) => out.push_str(&format!("{},{},{}\n", d.dx, d.dy, v)),
                None => out.push_str(&format!("{},{},nan\n", d.dx, d.dy)),
            }
        }
        out
    }

    /// Min-max normalized 16-bit heatmap.
    pub fn to_pgm(&self) -> Result<(PgmImage, RenderScale), FrameError> {
        render_f64(
            self.bounds.n_cols() as u32,
            self.bounds.n_rows() as u32,
            &self.values,
        )
    }
}

/// Where the correlation peak sits and how wide it is.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Displacement maximizing the mean correlation.
    pub d_max: Displacement,
    pub peak_value: f64,
    /// Peak full width at half maximum along dx, in pixels.
    pub fwhm_x: f64,
    /// Peak full width at half maximum along dy, in pixels.
    pub fwhm_y: f64,
    /// Euclidean distance between the region centers after applying `d_max`.
    pub distance: f64,
    /// True when the argmax landed on the search window edge, which usually
    /// means the window excluded the true offset.
    pub on_boundary: bool,
}

/// Spatial correlation coefficient of two equally shaped single-frame views.
///
/// Averages run over the pixels of the views (one frame), not over time.
/// Returns the undefined marker when either view has zero spatial variance.
pub fn frame_spatial_c2(
    a: &FrameView<'_>,
    b: &FrameView<'_>,
) -> Result<CorrelationValue, RegistrationError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(RegistrationError::ViewMismatch {
            a_w: a.width(),
            a_h: a.height(),
            b_w: b.width(),
            b_h: b.height(),
        });
    }
    if a.area() < 2 {
        return Err(RegistrationError::RegionTooSmall);
    }
    let n = a.area() as f64;
    let mut sa = 0.0;
    let mut saa = 0.0;
    let mut sb = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (ra, rb) in a.rows().zip(b.rows()) {
        for (&x, &y) in ra.iter().zip(rb) {
            sa += x;
            saa += x * x;
            sb += y;
            sbb += y * y;
            sab += x * y;
        }
    }
    let ma = sa / n;
    let mb = sb / n;
    let mu2a = saa / n - ma * ma;
    let mu2b = sbb / n - mb * mb;
    if mu2a <= 0.0 || mu2b <= 0.0 {
        return Ok(CorrelationValue::undefined(a.area() as u64));
    }
    let cov = sab / n - ma * mb;
    Ok(CorrelationValue::defined(
        cov / (mu2a.sqrt() * mu2b.sqrt()),
        a.area() as u64,
    ))
}

/// Build the correlation map of a probe stack against a reference region.
///
/// For each displacement `D` in `search`, the probe region (same shape as
/// the reference region, origin at `probe_origin` shifted by `D`) is
/// correlated against the reference region frame by frame and the defined
/// frame values are averaged. Every shifted region is bounds-checked before
/// any computation starts.
pub fn correlation_map(
    stack_ref: &FrameStack,
    region_ref: Region,
    stack_probe: &FrameStack,
    probe_origin: Region,
    search: SearchBounds,
) -> Result<CorrelationMap, RegistrationError> {
    if search.n_cols() == 0 || search.n_rows() == 0 {
        return Err(RegistrationError::EmptyBounds(search));
    }
    if region_ref.width != probe_origin.width || region_ref.height != probe_origin.height {
        return Err(RegistrationError::ViewMismatch {
            a_w: region_ref.width as usize,
            a_h: region_ref.height as usize,
            b_w: probe_origin.width as usize,
            b_h: probe_origin.height as usize,
        });
    }
    if region_ref.area() < 2 {
        return Err(RegistrationError::RegionTooSmall);
    }
    if stack_ref.n_frames() != stack_probe.n_frames() {
        return Err(RegistrationError::FrameCountMismatch {
            a: stack_ref.n_frames(),
            b: stack_probe.n_frames(),
        });
    }
    // Checking the four extreme corners covers the whole rectangle of
    // displacements.
    stack_ref.view(0, region_ref)?;
    for (dx, dy) in [
        (search.dx_min, search.dy_min),
        (search.dx_min, search.dy_max),
        (search.dx_max, search.dy_min),
        (search.dx_max, search.dy_max),
    ] {
        probe_origin.shift(
            Displacement::new(dx, dy),
            stack_probe.width(),
            stack_probe.height(),
        )?;
    }

    let n_frames = stack_ref.n_frames();
    // Reference statistics do not depend on the displacement.
    let ref_stats: Vec<Option<(f64, f64)>> = (0..n_frames)
        .map(|f| {
            let view = stack_ref.view(f, region_ref).expect("checked above");
            let n = view.area() as f64;
            let mut s = 0.0;
            let mut ss = 0.0;
            for row in view.rows() {
                for &x in row {
                    s += x;
                    ss += x * x;
                }
            }
            let mean = s / n;
            let mu2 = ss / n - mean * mean;
            (mu2 > 0.0).then_some((mean, mu2))
        })
        .collect();

    let displacements = search.displacements();
    let cells: Vec<(Option<f64>, u32)> = displacements
        .par_iter()
        .map(|&d| {
            let region = probe_origin
                .shift(d, stack_probe.width(), stack_probe.height())
                .expect("corner check covers all displacements");
            let n = region.area() as f64;
            let mut sum = 0.0;
            let mut used = 0u32;
            for f in 0..n_frames {
                let Some((ma, mu2a)) = ref_stats[f as usize] else {
                    continue;
                };
                let va = stack_ref.view(f, region_ref).expect("checked");
                let vb = stack_probe.view(f, region).expect("checked");
                let mut sb = 0.0;
                let mut sbb = 0.0;
                let mut sab = 0.0;
                for (ra, rb) in va.rows().zip(vb.rows()) {
                    for (&x, &y) in ra.iter().zip(rb) {
                        sb += y;
                        sbb += y * y;
                        sab += x * y;
                    }
                }
                let mb = sb / n;
                let mu2b = sbb / n - mb * mb;
                if mu2b <= 0.0 {
                    continue;
                }
                let cov = sab / n - ma * mb;
                sum += cov / (mu2a.sqrt() * mu2b.sqrt());
                used += 1;
            }
            if used == 0 {
                (None, 0)
            } else {
                (Some(sum / used as f64), used)
            }
        })
        .collect();

    let (values, frames_used) = cells.into_iter().unzip();
    Ok(CorrelationMap {
        bounds: search,
        values,
        frames_used,
        n_frames,
    })
}

/// Locate the correlation peak and measure it.
///
/// Argmax ties break deterministically: smallest |D|, then smallest dy,
/// then smallest dx. The FWHM per axis comes from linear interpolation of
/// the half-maximum crossings of the 1-D profile through the peak, with the
/// half level referenced to the map's median background.
pub fn register(
    map: &CorrelationMap,
    ref_anchor: Region,
    probe_origin: Region,
) -> Result<RegistrationResult, RegistrationError> {
    let mut best: Option<(f64, Displacement)> = None;
    for (d, v) in map.iter() {
        let Some(v) = v else { continue };
        let better = match best {
            None => true,
            Some((bv, bd)) => {
                v > bv
                    || (v == bv
                        && (d.norm_sq(), d.dy, d.dx) < (bd.norm_sq(), bd.dy, bd.dx))
            }
        };
        if better {
            best = Some((v, d));
        }
    }
    let (peak_value, d_max) = best.ok_or(RegistrationError::AllUndefined)?;

    let background = median_background(map);
    let bounds = map.bounds();
    let profile_x: Vec<Option<f64>> = (bounds.dx_min..=bounds.dx_max)
        .map(|dx| map.value(Displacement::new(dx, d_max.dy)))
        .collect();
    let profile_y: Vec<Option<f64>> = (bounds.dy_min..=bounds.dy_max)
        .map(|dy| map.value(Displacement::new(d_max.dx, dy)))
        .collect();
    let fwhm_x = fwhm_interp(
        &profile_x,
        (d_max.dx - bounds.dx_min) as usize,
        peak_value,
        background,
    );
    let fwhm_y = fwhm_interp(
        &profile_y,
        (d_max.dy - bounds.dy_min) as usize,
        peak_value,
        background,
    );

    let (cx_ref, cy_ref) = ref_anchor.center();
    let probe_center = (
        probe_origin.x0 as f64 + d_max.dx as f64 + (probe_origin.width as f64 - 1.0) / 2.0,
        probe_origin.y0 as f64 + d_max.dy as f64 + (probe_origin.height as f64 - 1.0) / 2.0,
    );
    let distance = ((probe_center.0 - cx_ref).powi(2) + (probe_center.1 - cy_ref).powi(2)).sqrt();

    let on_boundary = d_max.dx == bounds.dx_min
        || d_max.dx == bounds.dx_max
        || d_max.dy == bounds.dy_min
        || d_max.dy == bounds.dy_max;

    Ok(RegistrationResult {
        d_max,
        peak_value,
        fwhm_x,
        fwhm_y,
        distance,
        on_boundary,
    })
}

/// A pair registration bundled with the map it came from.
#[derive(Debug, Clone)]
pub struct PairRegistration {
    pub map: CorrelationMap,
    pub result: RegistrationResult,
}

/// Register `probe` against `reference` over one anchor region.
pub fn register_pair(
    stack_ref: &FrameStack,
    anchor: Region,
    stack_probe: &FrameStack,
    probe_origin: Region,
    search: SearchBounds,
) -> Result<PairRegistration, RegistrationError> {
    let map = correlation_map(stack_ref, anchor, stack_probe, probe_origin, search)?;
    let result = register(&map, anchor, probe_origin)?;
    Ok(PairRegistration { map, result })
}

/// Chain registration across the three arms: arm 2 against arm 1 on an
/// object-free anchor region, then arm 3 against the arm-2 region found in
/// the first step.
pub fn chain_register(
    arm1: &FrameStack,
    arm2: &FrameStack,
    arm3: &FrameStack,
    anchor: Region,
    search: SearchBounds,
) -> Result<(PairRegistration, PairRegistration), RegistrationError> {
    let pair12 = register_pair(arm1, anchor, arm2, anchor, search)?;
    let anchor2 = anchor.shift(pair12.result.d_max, arm2.width(), arm2.height())?;
    let pair23 = register_pair(arm2, anchor2, arm3, anchor2, search)?;
    Ok((pair12, pair23))
}

fn median_background(map: &CorrelationMap) -> f64 {
    let mut defined: Vec<f64> = map.values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return 0.0;
    }
    defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = defined.len();
    if n % 2 == 1 {
        defined[n / 2]
    } else {
        0.5 * (defined[n / 2 - 1] + defined[n / 2])
    }
}

/// Interpolated full width at half maximum of a sampled 1-D profile.
///
/// The half level is `background + (peak - background) / 2`. Walks from the
/// peak outward to the first samples below the level and interpolates the
/// crossings linearly; if a side never crosses inside the window, it clamps
/// at the window edge. Undefined samples count as background.
fn fwhm_interp(profile: &[Option<f64>], peak_idx: usize, peak: f64, background: f64) -> f64 {
    let level = background + 0.5 * (peak - background);
    let at = |i: usize| profile[i].unwrap_or(background);

    let mut left = 0.0f64;
    let mut found_left = false;
    for i in (0..peak_idx).rev() {
        if at(i) < level {
            let hi = at(i + 1);
            let lo = at(i);
            left = i as f64 + (level - lo) / (hi - lo);
            found_left = true;
            break;
        }
    }
    if !found_left {
        left = 0.0;
    }

    let mut right = (profile.len() - 1) as f64;
    let mut found_right = false;
    for i in peak_idx + 1..profile.len() {
        if at(i) < level {
            let hi = at(i - 1);
            let lo = at(i);
            right = i as f64 - (level - lo) / (hi - lo);
            found_right = true;
            break;
        }
    }
    if !found_right {
        right = (profile.len() - 1) as f64;
    }

    (right - left).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Meta;

    fn stack_from(frames: Vec<Vec<f64>>, w: u32, h: u32) -> FrameStack {
        let n = frames.len() as u32;
        let pixels = frames.into_iter().flatten().collect();
        FrameStack::new(w, h, n, pixels, Meta::new()).unwrap()
    }

    #[test]
    fn region_against_itself_is_one() {
        let s = stack_from(vec![vec![1.0, 2.0, 3.0, 4.0]], 2, 2);
        let v = s.view(0, s.full_region()).unwrap();
        let c = frame_spatial_c2(&v, &v).unwrap();
        assert!((c.value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_region_is_one() {
        let a = stack_from(vec![vec![1.0, 2.0, 3.0, 4.0]], 2, 2);
        let b = stack_from(vec![vec![2.0, 4.0, 6.0, 8.0]], 2, 2);
        let c = frame_spatial_c2(
            &a.view(0, a.full_region()).unwrap(),
            &b.view(0, b.full_region()).unwrap(),
        )
        .unwrap();
        assert!((c.value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_minus_one() {
        let a = stack_from(vec![vec![0.0, 1.0, 1.0, 0.0]], 2, 2);
        let b = stack_from(vec![vec![1.0, 0.0, 0.0, 1.0]], 2, 2);
        let c = frame_spatial_c2(
            &a.view(0, a.full_region()).unwrap(),
            &b.view(0, b.full_region()).unwrap(),
        )
        .unwrap();
        assert!((c.value.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_region_is_undefined() {
        let a = stack_from(vec![vec![5.0; 4]], 2, 2);
        let b = stack_from(vec![vec![1.0, 2.0, 3.0, 4.0]], 2, 2);
        let c = frame_spatial_c2(
            &a.view(0, a.full_region()).unwrap(),
            &b.view(0, b.full_region()).unwrap(),
        )
        .unwrap();
        assert!(!c.is_defined());
    }

    #[test]
    fn self_map_peaks_at_zero() {
        // Random-ish but fixed pattern, correlated only at zero shift.
        let w = 16;
        let vals: Vec<f64> = (0..w * w)
            .map(|i| ((i * 2654435761usize) % 97) as f64)
            .collect();
        let s = stack_from(vec![vals], w as u32, w as u32);
        let inner = Region::new(4, 4, 8, 8).unwrap();
        let map = correlation_map(&s, inner, &s, inner, SearchBounds::symmetric(3, 3)).unwrap();
        assert!((map.value(Displacement::new(0, 0)).unwrap() - 1.0).abs() < 1e-12);
        let result = register(&map, inner, inner).unwrap();
        assert_eq!(result.d_max, Displacement::new(0, 0));
        assert!((result.peak_value - 1.0).abs() < 1e-12);
        assert!(!result.on_boundary);
        assert!((result.distance - 0.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_search_fails_before_compute() {
        let s = stack_from(vec![vec![0.0; 64]], 8, 8);
        let inner = Region::new(2, 2, 4, 4).unwrap();
        let err = correlation_map(&s, inner, &s, inner, SearchBounds::symmetric(5, 5));
        assert!(matches!(err, Err(RegistrationError::Frame(_))));
    }

    #[test]
    fn delta_peak_has_narrow_fwhm() {
        let bounds = SearchBounds::symmetric(4, 4);
        let mut values = vec![Some(0.0); 81];
        values[4 * 9 + 4] = Some(1.0);
        let map = CorrelationMap {
            bounds,
            values,
            frames_used: vec![1; 81],
            n_frames: 1,
        };
        let anchor = Region::new(0, 0, 4, 4).unwrap();
        let r = register(&map, anchor, anchor).unwrap();
        assert_eq!(r.d_max, Displacement::new(0, 0));
        assert!(r.fwhm_x > 0.0 && r.fwhm_x <= 2.0, "fwhm_x = {}", r.fwhm_x);
        assert!(r.fwhm_y > 0.0 && r.fwhm_y <= 2.0);
    }

    #[test]
    fn gaussian_peak_fwhm_matches_closed_form() {
        let bounds = SearchBounds::symmetric(10, 10);
        let sigma = 2.0f64;
        let mut values = Vec::new();
        for dy in -10i32..=10 {
            for dx in -10i32..=10 {
                let r2 = (dx * dx + dy * dy) as f64;
                values.push(Some((-r2 / (2.0 * sigma * sigma)).exp()));
            }
        }
        let map = CorrelationMap {
            bounds,
            values,
            frames_used: vec![1; 441],
            n_frames: 1,
        };
        let anchor = Region::new(0, 0, 4, 4).unwrap();
        let r = register(&map, anchor, anchor).unwrap();
        let expected = 2.354820045 * sigma;
        assert!(
            (r.fwhm_x - expected).abs() / expected < 0.1,
            "fwhm_x {} vs {}",
            r.fwhm_x,
            expected
        );
        assert!((r.fwhm_y - expected).abs() / expected < 0.1);
    }

    #[test]
    fn all_undefined_map_is_registration_error() {
        let map = CorrelationMap {
            bounds: SearchBounds::symmetric(1, 1),
            values: vec![None; 9],
            frames_used: vec![0; 9],
            n_frames: 3,
        };
        let anchor = Region::new(0, 0, 2, 2).unwrap();
        assert!(matches!(
            register(&map, anchor, anchor),
            Err(RegistrationError::AllUndefined)
        ));
    }

    #[test]
    fn csv_lists_every_cell() {
        let map = CorrelationMap {
            bounds: SearchBounds::symmetric(1, 0),
            values: vec![Some(0.25), None, Some(-0.5)],
            frames_used: vec![2, 0, 2],
            n_frames: 2,
        };
        let csv = map.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dx,dy,value");
        assert_eq!(lines[1], "-1,0,0.25");
        assert_eq!(lines[2], "0,0,nan");
        assert_eq!(lines[3], "1,0,-0.5");
    }
}
