//! Ghost-image reconstruction and the visibility figure of merit.
//!
//! The test arm is collapsed to a bucket series (the per-frame pixel sum
//! over its region), then correlated pixel by pixel against one reference
//! region (second order) or against the registered pair of reference
//! regions (third order, evaluated on the diagonal of corresponding
//! reference coordinates). Because the coefficients are normalized by
//! central moments, per-arm gain factors cancel and the images depend only
//! on the correlation structure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::MomentSummary;
use crate::frames::pgm::{render_f64, PgmImage, RenderScale};
use crate::frames::{FrameError, FrameStack, Region};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("stacks have different frame counts: {a} vs {b}")]
    FrameCountMismatch { a: u32, b: u32 },
    #[error("bucket has {bucket} frames but the reference stack has {stack}")]
    BucketAlignment { bucket: u32, stack: u32 },
    #[error("reference regions differ in shape: {a_w}x{a_h} vs {b_w}x{b_h}")]
    RegionShapeMismatch {
        a_w: u32,
        a_h: u32,
        b_w: u32,
        b_h: u32,
    },
    #[error("region {name} {region:?} does not fit in a {width}x{height} image")]
    RegionOutsideImage {
        name: &'static str,
        region: Region,
        width: u32,
        height: u32,
    },
    #[error("region {name} contains no defined pixels")]
    NoDefinedPixels { name: &'static str },
    #[error("visibility undefined: both region means are zero")]
    ZeroContrastDenominator,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Per-frame pixel sums over the test-arm region: the bucket detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSeries {
    values: Vec<f64>,
    region: Region,
}

impl BucketSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn n_frames(&self) -> u32 {
        self.values.len() as u32
    }
}

/// Sum the region's pixels per frame.
pub fn bucket(stack: &FrameStack, region: Region) -> Result<BucketSeries, ImagingError> {
    let values = (0..stack.n_frames())
        .map(|f| {
            let view = stack.view(f, region)?;
            Ok(view.rows().map(|row| row.iter().sum::<f64>()).sum())
        })
        .collect::<Result<Vec<f64>, FrameError>>()?;
    Ok(BucketSeries { values, region })
}

/// A reconstructed ghost image: one correlation value per reference pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub order: u8,
    pub width: u32,
    pub height: u32,
    /// Row-major; `None` marks pixels whose normalizing moment vanished.
    pub values: Vec<Option<f64>>,
    pub n_frames: u32,
    /// Arms and registered displacements that produced the image.
    pub provenance: BTreeMap<String, String>,
}

impl GhostImage {
    #[inline]
    pub fn value(&self, row: u32, col: u32) -> Option<f64> {
        self.values[(row * self.width + col) as usize]
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// CSV with an `x,y,value` header; undefined pixels print as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for y in 0..self.height {
            for x in 0..self.width {
                match self.value(y, x) {
                    Some(v) => out.push_str(&format!("{x},{y},{v}\n")),
                    None => out.push_str(&format!("{x},{y},nan\n")),
                }
            }
        }
        out
    }

    /// Min-max normalized 16-bit heatmap plus the scale used.
    pub fn to_pgm(&self) -> Result<(PgmImage, RenderScale), FrameError> {
        Ok(render_f64(self.width, self.height, &self.values)?)
    }
}

/// Second-order ghost image: c2 of the bucket against every pixel of the
/// (already registered) reference region.
pub fn ghost2(
    bucket: &BucketSeries,
    ref_stack: &FrameStack,
    ref_region: Region,
) -> Result<GhostImage, ImagingError> {
    if bucket.n_frames() != ref_stack.n_frames() {
        return Err(ImagingError::BucketAlignment {
            bucket: bucket.n_frames(),
            stack: ref_stack.n_frames(),
        });
    }
    ref_stack.view(0, ref_region)?;

    let n_frames = ref_stack.n_frames();
    let width = ref_region.width;
    let height = ref_region.height;
    let values: Vec<Option<f64>> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut summaries = vec![MomentSummary::<2>::new(); width as usize];
            for f in 0..n_frames {
                let b = bucket.values()[f as usize];
                let view = ref_stack.view(f, ref_region).expect("checked");
                for (s, &y) in summaries.iter_mut().zip(view.row(row as usize)) {
                    s.accumulate([b, y]);
                }
            }
            summaries.into_iter().map(|s| s.c2().value)
        })
        .collect();

    let mut provenance = BTreeMap::new();
    provenance.insert("order".into(), "2".into());
    provenance.insert(
        "ref_region".into(),
        format!(
            "{},{},{},{}",
            ref_region.x0, ref_region.y0, ref_region.width, ref_region.height
        ),
    );
    provenance.insert(
        "bucket_region".into(),
        format!(
            "{},{},{},{}",
            bucket.region.x0, bucket.region.y0, bucket.region.width, bucket.region.height
        ),
    );
    Ok(GhostImage {
        order: 2,
        width,
        height,
        values,
        n_frames,
        provenance,
    })
}

/// Third-order ghost image on the diagonal of registered reference
/// coordinates: c3 of the bucket against corresponding pixels of the two
/// reference regions.
pub fn ghost3(
    bucket: &BucketSeries,
    ref2_stack: &FrameStack,
    ref2_region: Region,
    ref3_stack: &FrameStack,
    ref3_region: Region,
) -> Result<GhostImage, ImagingError> {
    if ref2_stack.n_frames() != ref3_stack.n_frames() {
        return Err(ImagingError::FrameCountMismatch {
            a: ref2_stack.n_frames(),
            b: ref3_stack.n_frames(),
        });
    }
    if bucket.n_frames() != ref2_stack.n_frames() {
        return Err(ImagingError::BucketAlignment {
            bucket: bucket.n_frames(),
            stack: ref2_stack.n_frames(),
        });
    }
    if ref2_region.width != ref3_region.width || ref2_region.height != ref3_region.height {
        return Err(ImagingError::RegionShapeMismatch {
            a_w: ref2_region.width,
            a_h: ref2_region.height,
            b_w: ref3_region.width,
            b_h: ref3_region.height,
        });
    }
    ref2_stack.view(0, ref2_region)?;
    ref3_stack.view(0, ref3_region)?;

    let n_frames = ref2_stack.n_frames();
    let width = ref2_region.width;
    let height = ref2_region.height;
    let values: Vec<Option<f64>> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut summaries = vec![MomentSummary::<3>::new(); width as usize];
            for f in 0..n_frames {
                let b = bucket.values()[f as usize];
                let v2 = ref2_stack.view(f, ref2_region).expect("checked");
                let v3 = ref3_stack.view(f, ref3_region).expect("checked");
                for ((s, &y2), &y3) in summaries
                    .iter_mut()
                    .zip(v2.row(row as usize))
                    .zip(v3.row(row as usize))
                {
                    s.accumulate([b, y2, y3]);
                }
            }
            summaries.into_iter().map(|s| s.c3().value)
        })
        .collect();

    let mut provenance = BTreeMap::new();
    provenance.insert("order".into(), "3".into());
    provenance.insert(
        "ref2_region".into(),
        format!(
            "{},{},{},{}",
            ref2_region.x0, ref2_region.y0, ref2_region.width, ref2_region.height
        ),
    );
    provenance.insert(
        "ref3_region".into(),
        format!(
            "{},{},{},{}",
            ref3_region.x0, ref3_region.y0, ref3_region.width, ref3_region.height
        ),
    );
    provenance.insert(
        "bucket_region".into(),
        format!(
            "{},{},{},{}",
            bucket.region.x0, bucket.region.y0, bucket.region.width, bucket.region.height
        ),
    );
    Ok(GhostImage {
        order: 3,
        width,
        height,
        values,
        n_frames,
        provenance,
    })
}

/// Image contrast between a background region and the object region.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityReport {
    pub order: u8,
    pub v: f64,
    pub v_stderr: f64,
    pub region_back: Region,
    pub region_obj: Region,
    pub cj_back: f64,
    pub cj_obj: f64,
    pub n_back: usize,
    pub n_obj: usize,
}

/// Visibility of a ghost image: (c_back - c_obj) / (c_back + c_obj) over
/// the defined pixels of the two regions, with the standard error obtained
/// by first-order propagation of the two region means' standard errors.
pub fn visibility(
    image: &GhostImage,
    region_back: Region,
    region_obj: Region,
) -> Result<VisibilityReport, ImagingError> {
    let (cj_back, se_back, n_back) = region_mean(image, region_back, "background")?;
    let (cj_obj, se_obj, n_obj) = region_mean(image, region_obj, "object")?;
    let denom = cj_back + cj_obj;
    if denom == 0.0 {
        return Err(ImagingError::ZeroContrastDenominator);
    }
    let v = (cj_back - cj_obj) / denom;
    // dV/d(back) = 2*obj/denom^2, dV/d(obj) = -2*back/denom^2
    let d_back = 2.0 * cj_obj / (denom * denom);
    let d_obj = 2.0 * cj_back / (denom * denom);
    let v_stderr = ((d_back * se_back).powi(2) + (d_obj * se_obj).powi(2)).sqrt();
    Ok(VisibilityReport {
        order: image.order,
        v,
        v_stderr,
        region_back,
        region_obj,
        cj_back,
        cj_obj,
        n_back,
        n_obj,
    })
}

fn region_mean(
    image: &GhostImage,
    region: Region,
    name: &'static str,
) -> Result<(f64, f64, usize), ImagingError> {
    if !region.fits(image.width, image.height) {
        return Err(ImagingError::RegionOutsideImage {
            name,
            region,
            width: image.width,
            height: image.height,
        });
    }
    let mut vals = Vec::with_capacity(region.area());
    for y in region.y0..region.y0 + region.height {
        for x in region.x0..region.x0 + region.width {
            if let Some(v) = image.value(y, x) {
                vals.push(v);
            }
        }
    }
    if vals.is_empty() {
        return Err(ImagingError::NoDefinedPixels { name });
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let se = if vals.len() < 2 {
        0.0
    } else {
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok((mean, se, vals.len()))
}

/// Assemble a ghost image directly from per-pixel values, for re-loading
/// exported artifacts.
pub fn ghost_image_from_values(
    order: u8,
    width: u32,
    height: u32,
    values: Vec<Option<f64>>,
    n_frames: u32,
) -> Result<GhostImage, ImagingError> {
    if values.len() != width as usize * height as usize {
        return Err(ImagingError::RegionShapeMismatch {
            a_w: width,
            a_h: height,
            b_w: values.len() as u32,
            b_h: 1,
        });
    }
    Ok(GhostImage {
        order,
        width,
        height,
        values,
        n_frames,
        provenance: BTreeMap::new(),
    })
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
    fn bucket_of_ones_is_region_area() {
        let s = stack_from(vec![vec![1.0; 16], vec![1.0; 16]], 4, 4);
        let r = Region::new(1, 1, 2, 2).unwrap();
        let b = bucket(&s, r).unwrap();
        assert_eq!(b.values(), &[4.0, 4.0]);
    }

    #[test]
    fn bucket_single_pixel_is_time_series() {
        let s = stack_from(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]], 2, 2);
        let b = bucket(&s, Region::new(1, 0, 1, 1).unwrap()).unwrap();
        assert_eq!(b.values(), &[2.0, 6.0]);
    }

    #[test]
    fn bucket_is_additive_over_disjoint_regions() {
        let s = stack_from(
            vec![(0..16).map(|v| v as f64).collect(), (16..32).map(|v| v as f64).collect()],
            4,
            4,
        );
        let left = bucket(&s, Region::new(0, 0, 2, 4).unwrap()).unwrap();
        let right = bucket(&s, Region::new(2, 0, 2, 4).unwrap()).unwrap();
        let both = bucket(&s, Region::new(0, 0, 4, 4).unwrap()).unwrap();
        for f in 0..2 {
            assert_eq!(left.values()[f] + right.values()[f], both.values()[f]);
        }
    }

    #[test]
    fn bucket_out_of_bounds_errors() {
        let s = stack_from(vec![vec![0.0; 4]], 2, 2);
        assert!(bucket(&s, Region::new(1, 1, 2, 2).unwrap()).is_err());
    }

    #[test]
    fn ghost2_frame_mismatch_is_alignment_error() {
        let a = stack_from(vec![vec![1.0; 4], vec![2.0; 4]], 2, 2);
        let b = stack_from(vec![vec![1.0; 4]], 2, 2);
        let bk = bucket(&a, a.full_region()).unwrap();
        assert!(matches!(
            ghost2(&bk, &b, b.full_region()),
            Err(ImagingError::BucketAlignment { .. })
        ));
    }

    #[test]
    fn ghost3_region_shape_mismatch_errors() {
        let s = stack_from(vec![vec![1.0; 16]; 4], 4, 4);
        let bk = bucket(&s, Region::new(0, 0, 2, 2).unwrap()).unwrap();
        let r2 = Region::new(0, 0, 2, 2).unwrap();
        let r3 = Region::new(0, 0, 3, 2).unwrap();
        assert!(matches!(
            ghost3(&bk, &s, r2, &s, r3),
            Err(ImagingError::RegionShapeMismatch { .. })
        ));
    }

    #[test]
    fn visibility_fixture_half() {
        // Left half 0.3, right half 0.1.
        let mut values = Vec::new();
        for _ in 0..4 {
            for x in 0..8 {
                values.push(Some(if x < 4 { 0.3 } else { 0.1 }));
            }
        }
        let img = ghost_image_from_values(2, 8, 4, values, 100).unwrap();
        let back = Region::new(0, 0, 4, 4).unwrap();
        let obj = Region::new(4, 0, 4, 4).unwrap();
        let rep = visibility(&img, back, obj).unwrap();
        assert!((rep.v - 0.5).abs() < 1e-12);
        assert!(rep.v_stderr < 1e-12);
        assert!((rep.cj_back - 0.3).abs() < 1e-12);
        assert!((rep.cj_obj - 0.1).abs() < 1e-12);
    }

    #[test]
    fn visibility_no_contrast_is_zero() {
        let img = ghost_image_from_values(2, 4, 4, vec![Some(0.2); 16], 10).unwrap();
        let back = Region::new(0, 0, 2, 4).unwrap();
        let obj = Region::new(2, 0, 2, 4).unwrap();
        let rep = visibility(&img, back, obj).unwrap();
        assert_eq!(rep.v, 0.0);
    }

    #[test]
    fn visibility_opaque_object_is_one() {
        let mut values = vec![Some(0.25); 8];
        values.extend(vec![Some(0.0); 8]);
        let img = ghost_image_from_values(2, 4, 4, values, 10).unwrap();
        let back = Region::new(0, 0, 4, 2).unwrap();
        let obj = Region::new(0, 2, 4, 2).unwrap();
        let rep = visibility(&img, back, obj).unwrap();
        assert!((rep.v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn visibility_empty_region_is_metric_error() {
        let mut values = vec![Some(0.1); 8];
        values.extend(vec![None; 8]);
        let img = ghost_image_from_values(2, 4, 4, values, 10).unwrap();
        let back = Region::new(0, 0, 4, 2).unwrap();
        let obj = Region::new(0, 2, 4, 2).unwrap();
        assert!(matches!(
            visibility(&img, back, obj),
            Err(ImagingError::NoDefinedPixels { name: "object" })
        ));
    }

    #[test]
    fn ghost_csv_has_header_and_nan() {
        let img =
            ghost_image_from_values(2, 2, 1, vec![Some(0.5), None], 10).unwrap();
        let csv = img.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines[1], "0,0,0.5");
        assert_eq!(lines[2], "1,0,nan");
    }
}
