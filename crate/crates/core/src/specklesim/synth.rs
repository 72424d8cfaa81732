//! Pseudo-thermal speckle synthesis by spectral filtering.
//!
//! Each frame is an independent realization of a circular complex Gaussian
//! random field: white complex Gaussian noise is drawn directly in the
//! spatial-frequency domain, low-pass filtered by a Gaussian window matched
//! to the requested coherence radius, inverse-transformed, and squared. The
//! resulting intensities are exponentially distributed per pixel with a
//! Gaussian amplitude autocorrelation of 1/e radius `coh_radius`, which is
//! the far-field statistics a rotating ground-glass diffuser produces.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::rng::{stream, StreamPurpose};
use super::SimError;

/// Parameters of one synthetic speckle ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleParams {
    pub grid_width: u32,
    pub grid_height: u32,
    /// Target 1/e amplitude-correlation radius, in pixels.
    pub coh_radius: f64,
    /// Ensemble mean intensity per pixel, analog units.
    pub mean_intensity: f64,
    pub n_frames: u32,
    pub seed: u64,
}

impl SpeckleParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(SimError::BadParams(format!(
                "grid {}x{} must be nonzero",
                self.grid_width, self.grid_height
            )));
        }
        let limit = self.grid_width.min(self.grid_height) as f64 / 4.0;
        if !(self.coh_radius > 0.0 && self.coh_radius < limit) {
            return Err(SimError::BadParams(format!(
                "coh_radius {} outside (0, {limit}) for this grid",
                self.coh_radius
            )));
        }
        if !(self.mean_intensity > 0.0) {
            return Err(SimError::BadParams(format!(
                "mean_intensity {} must be positive",
                self.mean_intensity
            )));
        }
        if self.n_frames == 0 {
            return Err(SimError::BadParams("n_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// FWHM of the intensity correlation peak implied by a coherence radius.
///
/// The filtered field has amplitude correlation exp(-(d/r)^2), so the
/// intensity correlation is exp(-2 (d/r)^2) and its full width at half
/// maximum is r * sqrt(2 ln 2). The experimental convention "speckle
/// radius" is half this width.
pub fn intensity_fwhm(coh_radius: f64) -> f64 {
    coh_radius * (2.0 * std::f64::consts::LN_2).sqrt()
}

/// Coherence radius that yields a given intensity correlation FWHM.
pub fn coh_radius_for_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * std::f64::consts::LN_2).sqrt()
}

/// Reusable synthesizer: caches FFT plans, the spectral filter and the
/// normalization for one parameter set. Cheap to share across threads.
pub struct SpeckleSynth {
    params: SpeckleParams,
    fft_row: Arc<dyn Fft<f64>>,
    fft_col: Arc<dyn Fft<f64>>,
    /// Spectral amplitude filter, row-major over (ky, kx).
    filter: Vec<f64>,
    /// Field amplitude scale making the ensemble mean intensity exact.
    amp_scale: f64,
}

impl SpeckleSynth {
    pub fn new(params: SpeckleParams) -> Result<Self, SimError> {
        params.validate()?;
        let w = params.grid_width as usize;
        let h = params.grid_height as usize;
        let mut planner = FftPlanner::new();
        let fft_row = planner.plan_fft(w, FftDirection::Inverse);
        let fft_col = planner.plan_fft(h, FftDirection::Inverse);

        // Gaussian window: the power spectrum must be the transform of the
        // target amplitude correlation exp(-(d/r)^2), i.e. exp(-q^2 r^2 / 4),
        // so the amplitude filter is exp(-q^2 r^2 / 8).
        let r2 = params.coh_radius * params.coh_radius;
        let mut filter = Vec::with_capacity(w * h);
        let mut power = 0.0f64;
        for ky in 0..h {
            let qy = angular_freq(ky, h);
            for kx in 0..w {
                let qx = angular_freq(kx, w);
                let f = (-(qx * qx + qy * qy) * r2 / 8.0).exp();
                power += f * f;
                filter.push(f);
            }
        }
        // E(x) = sum_k a_k H_k e^{iqx} with <|a_k|^2> = 2, so the raw
        // ensemble mean intensity is 2 * sum |H|^2.
        let amp_scale = (params.mean_intensity / (2.0 * power)).sqrt();
        Ok(SpeckleSynth {
            params,
            fft_row,
            fft_col,
            filter,
            amp_scale,
        })
    }

    pub fn params(&self) -> &SpeckleParams {
        &self.params
    }

    /// One intensity frame, row-major, deterministic in (seed, frame, arm,
    /// purpose). Independent labels give statistically independent fields.
    pub fn synthesize_labeled(&self, frame: u32, arm: u32, purpose: StreamPurpose) -> Vec<f64> {
        let w = self.params.grid_width as usize;
        let h = self.params.grid_height as usize;
        let mut rng = stream(self.params.seed, frame, arm, purpose);

        let mut field: Vec<Complex<f64>> = Vec::with_capacity(w * h);
        for &f in &self.filter {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            field.push(Complex::new(re * f, im * f));
        }

        // Inverse transform rows, then columns through a scratch buffer.
        for row in field.chunks_exact_mut(w) {
            self.fft_row.process(row);
        }
        let mut col_buf = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                col_buf[y] = field[y * w + x];
            }
            self.fft_col.process(&mut col_buf);
            for y in 0..h {
                field[y * w + x] = col_buf[y];
            }
        }

        let s2 = self.amp_scale * self.amp_scale;
        field.iter().map(|e| s2 * e.norm_sqr()).collect()
    }

    /// The master speckle field shared by the three arms of a frame.
    pub fn synthesize_master(&self, frame: u32) -> Vec<f64> {
        self.synthesize_labeled(frame, 0, StreamPurpose::Master)
    }
}

/// Standalone single-frame synthesis.
pub fn synthesize_speckle_frame(params: &SpeckleParams, frame: u32) -> Result<Vec<f64>, SimError> {
    Ok(SpeckleSynth::new(params.clone())?.synthesize_master(frame))
}

/// Angular spatial frequency of FFT bin `k` on an `n`-point grid, in
/// radians per pixel, with the upper half mapped to negative frequencies.
fn angular_freq(k: usize, n: usize) -> f64 {
    let signed = if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    };
    2.0 * std::f64::consts::PI * signed as f64 / n as f64
}
