//! Frame-stack data model and bit-exact persistence.
//!
//! A [`FrameStack`] holds one detection region's intensity record: a time
//! series of 2-D frames, one frame per laser shot. Stacks are immutable after
//! construction and all operations here are pure, so they can be shared
//! across threads freely. Persistence goes through the GIS1 binary format
//! (see [`gis1`]); rendered views go through binary PGM (see [`pgm`]).

pub mod gis1;
pub mod pgm;

use std::collections::BTreeMap;

use thiserror::Error;

/// Errors from stack construction, region arithmetic and persistence.
#[derive(Debug, Error)]
pub enum FrameError {
    #[error("invalid stack dimensions {width}x{height}x{n_frames}")]
    InvalidDimensions {
        width: u32,
        height: u32,
        n_frames: u32,
    },
    #[error("pixel buffer holds {actual} values, dimensions require {expected}")]
    PixelCountMismatch { expected: usize, actual: usize },
    #[error("negative or non-finite intensity {value} at flat index {index}")]
    NegativeIntensity { index: usize, value: f64 },
    #[error("region {region:?} out of bounds for {width}x{height} sensor")]
    RegionOutOfBounds {
        region: Region,
        width: u32,
        height: u32,
    },
    #[error("region {region:?} shifted by ({dx}, {dy}) leaves the {width}x{height} sensor")]
    ShiftOutOfBounds {
        region: Region,
        dx: i64,
        dy: i64,
        width: u32,
        height: u32,
    },
    #[error("empty region: width and height must be at least 1")]
    EmptyRegion,
    #[error(
        "value {value} at frame {frame}, row {row}, col {col} is not representable as u16 \
         (expected an integer in 0..=65535)"
    )]
    QuantizationRange {
        frame: u32,
        row: u32,
        col: u32,
        value: f64,
    },
    #[error("bad GIS1 magic {found:?}, expected \"GIS1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported GIS1 {field} {value}")]
    UnsupportedField { field: &'static str, value: u8 },
    #[error("GIS1 reserved bytes nonzero")]
    ReservedNonzero,
    #[error("truncated GIS1 payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("{extra} trailing bytes after GIS1 payload")]
    TrailingBytes { extra: u64 },
    #[error("malformed GIS1 meta block: {reason}")]
    BadMeta { reason: String },
    #[error("invalid meta entry {key:?}: {reason}")]
    BadMetaEntry { key: String, reason: &'static str },
    #[error("malformed PGM: {reason}")]
    BadPgm { reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FrameError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FrameError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Axis-aligned rectangular pixel window on a sensor.
///
/// `x0` is the leftmost column, `y0` the topmost row. A region carries no
/// sensor bounds of its own; containment is checked against the stack it is
/// applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl Region {
    pub fn new(x0: u32, y0: u32, width: u32, height: u32) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyRegion);
        }
        Ok(Region {
            x0,
            y0,
            width,
            height,
        })
    }

    /// Number of pixels covered.
    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// True when the region lies fully inside a `width` x `height` sensor.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        let x1 = self.x0 as u64 + self.width as u64;
        let y1 = self.y0 as u64 + self.height as u64;
        x1 <= width as u64 && y1 <= height as u64
    }

    /// Center of the region in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y0 as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }

    /// Translate by `d`, checking the result against sensor bounds.
    ///
    /// The size is unchanged; only the origin moves. Shifting below pixel
    /// (0, 0) or past the sensor edge is an error, so callers searching a
    /// displacement grid must clamp their range beforehand.
    pub fn shift(
        &self,
        d: Displacement,
        sensor_width: u32,
        sensor_height: u32,
    ) -> Result<Region, FrameError> {
        let x0 = self.x0 as i64 + d.dx as i64;
        let y0 = self.y0 as i64 + d.dy as i64;
        let out = |_| FrameError::ShiftOutOfBounds {
            region: *self,
            dx: d.dx as i64,
            dy: d.dy as i64,
            width: sensor_width,
            height: sensor_height,
        };
        let shifted = Region {
            x0: u32::try_from(x0).map_err(out)?,
            y0: u32::try_from(y0).map_err(out)?,
            width: self.width,
            height: self.height,
        };
        if !shifted.fits(sensor_width, sensor_height) {
            return Err(FrameError::ShiftOutOfBounds {
                region: *self,
                dx: d.dx as i64,
                dy: d.dy as i64,
                width: sensor_width,
                height: sensor_height,
            });
        }
        Ok(shifted)
    }
}

/// Integer pixel displacement between two regions.
///
/// Registration is pixel-by-pixel, so components are whole pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Displacement {
    pub dx: i32,
    pub dy: i32,
}

impl Displacement {
    pub fn new(dx: i32, dy: i32) -> Self {
        Displacement { dx, dy }
    }

    /// Squared Euclidean norm, used for argmax tie-breaking.
    pub fn norm_sq(&self) -> i64 {
        self.dx as i64 * self.dx as i64 + self.dy as i64 * self.dy as i64
    }
}

impl std::fmt::Display for Displacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.dx, self.dy)
    }
}

/// Free-form key/value annotations attached to a stack (seed, arm id, gains).
pub type Meta = BTreeMap<String, String>;

/// A sequence of 2-D intensity frames for one detection region.
///
/// Pixels are stored as 64-bit reals indexed `(frame, row, column)`,
/// frame-major then row-major. Values are always `>= 0`; quantized stacks
/// additionally hold integers `<= 65535` so they persist losslessly as u16.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    width: u32,
    height: u32,
    n_frames: u32,
    pixels: Vec<f64>,
    pub meta: Meta,
}

impl FrameStack {
    pub fn new(
        width: u32,
        height: u32,
        n_frames: u32,
        pixels: Vec<f64>,
        meta: Meta,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 || n_frames == 0 {
            return Err(FrameError::InvalidDimensions {
                width,
                height,
                n_frames,
            });
        }
        let expected = width as usize * height as usize * n_frames as usize;
        if pixels.len() != expected {
            return Err(FrameError::PixelCountMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(FrameError::NegativeIntensity { index, value });
        }
        Ok(FrameStack {
            width,
            height,
            n_frames,
            pixels,
            meta,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    /// Full-sensor region.
    pub fn full_region(&self) -> Region {
        Region {
            x0: 0,
            y0: 0,
            width: self.width,
            height: self.height,
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, frame: u32, row: u32, col: u32) -> f64 {
        debug_assert!(frame < self.n_frames && row < self.height && col < self.width);
        let idx = (frame as usize * self.height as usize + row as usize) * self.width as usize
            + col as usize;
        self.pixels[idx]
    }

    /// All pixels of one frame, row-major.
    pub fn frame(&self, frame: u32) -> &[f64] {
        let fs = self.width as usize * self.height as usize;
        &self.pixels[frame as usize * fs..(frame as usize + 1) * fs]
    }

    /// Borrowed 2-D view of `region` within one frame.
    pub fn view(&self, frame: u32, region: Region) -> Result<FrameView<'_>, FrameError> {
        if !region.fits(self.width, self.height) {
            return Err(FrameError::RegionOutOfBounds {
                region,
                width: self.width,
                height: self.height,
            });
        }
        let frame_base = frame as usize * self.height as usize * self.width as usize;
        let origin =
            frame_base + region.y0 as usize * self.width as usize + region.x0 as usize;
        Ok(FrameView {
            data: &self.pixels,
            origin,
            stride: self.width as usize,
            width: region.width as usize,
            height: region.height as usize,
        })
    }

    /// Copy `region` out of every frame into a new stack.
    ///
    /// Pure projection: pixel `(f, r, c)` of the output equals pixel
    /// `(f, r + y0, c + x0)` of the input. Metadata is carried over.
    pub fn crop(&self, region: Region) -> Result<FrameStack, FrameError> {
        if !region.fits(self.width, self.height) {
            return Err(FrameError::RegionOutOfBounds {
                region,
                width: self.width,
                height: self.height,
            });
        }
        let mut pixels =
            Vec::with_capacity(region.area() * self.n_frames as usize);
        for f in 0..self.n_frames {
            let frame = self.frame(f);
            for r in 0..region.height as usize {
                let start = (region.y0 as usize + r) * self.width as usize + region.x0 as usize;
                pixels.extend_from_slice(&frame[start..start + region.width as usize]);
            }
        }
        FrameStack::new(
            region.width,
            region.height,
            self.n_frames,
            pixels,
            self.meta.clone(),
        )
    }

    /// New stack with every pixel multiplied by `factor` (must keep values >= 0).
    pub fn scaled(&self, factor: f64) -> Result<FrameStack, FrameError> {
        let pixels = self.pixels.iter().map(|v| v * factor).collect();
        FrameStack::new(self.width, self.height, self.n_frames, pixels, self.meta.clone())
    }

    /// True when every value is an integer in `0..=65535`.
    pub fn is_quantized(&self) -> bool {
        self.pixels
            .iter()
            .all(|&v| v >= 0.0 && v <= 65535.0 && v.fract() == 0.0)
    }
}

/// Borrowed rectangular window into a single frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    data: &'a [f64],
    origin: usize,
    stride: usize,
    width: usize,
    height: usize,
}

impl<'a> FrameView<'a> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    /// Row `r` of the view as a contiguous slice.
    #[inline]
    pub fn row(&self, r: usize) -> &'a [f64] {
        let start = self.origin + r * self.stride;
        &self.data[start..start + self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..self.height).map(move |r| self.row(r))
    }
}
