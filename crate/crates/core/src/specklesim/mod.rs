//! Three-arm pseudo-thermal light simulation.
//!
//! One master speckle field is synthesized per laser shot and distributed to
//! a test arm (arm 1, which carries the object) and two reference arms. Each
//! arm applies its own gain, ground-truth position offset, decorrelation
//! against the master field, and detector noise, then quantizes to 16-bit
//! counts the way an EMCCD digitizer would. Frame `k` of every arm belongs
//! to the same shot, so the arms stay frame-aligned by construction.

pub mod mask;
pub mod rng;
pub mod synth;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::frames::{Displacement, FrameError, FrameStack, Meta};

pub use mask::ObjectMask;
pub use rng::{derive_seed, stream, StreamPurpose};
pub use synth::{
    coh_radius_for_fwhm, intensity_fwhm, synthesize_speckle_frame, SpeckleParams, SpeckleSynth,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    BadParams(String),
    #[error("mask geometry error: {0}")]
    MaskGeometry(String),
    #[error("object mask is {mask_w}x{mask_h} but the arm grid is {grid_w}x{grid_h}")]
    ObjectDimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        grid_w: u32,
        grid_h: u32,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Imperfection model of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmParams {
    /// Intensity gain relative to the master field.
    pub gain: f64,
    /// Ground-truth position of this arm's speckle relative to arm 1.
    pub offset: Displacement,
    /// Fraction in [0, 1] mixed in from an independent speckle field.
    pub decorrelation: f64,
    /// Additive Gaussian read noise sigma, analog units.
    pub read_noise_sigma: f64,
    /// Poisson-resample intensities (analog units read as photoelectrons).
    pub shot_noise: bool,
}

impl Default for ArmParams {
    fn default() -> Self {
        ArmParams {
            gain: 1.0,
            offset: Displacement::default(),
            decorrelation: 0.0,
            read_noise_sigma: 0.0,
            shot_noise: false,
        }
    }
}

impl ArmParams {
    fn validate(&self, idx: usize) -> Result<(), SimError> {
        if !(self.gain > 0.0) {
            return Err(SimError::BadParams(format!(
                "arm {} gain {} must be positive",
                idx + 1,
                self.gain
            )));
        }
        if !(0.0..=1.0).contains(&self.decorrelation) {
            return Err(SimError::BadParams(format!(
                "arm {} decorrelation {} outside [0, 1]",
                idx + 1,
                self.decorrelation
            )));
        }
        if self.read_noise_sigma < 0.0 {
            return Err(SimError::BadParams(format!(
                "arm {} read noise {} must be >= 0",
                idx + 1,
                self.read_noise_sigma
            )));
        }
        Ok(())
    }
}

/// Decorrelation fraction that makes the matched-pixel c2 between a clean
/// arm and a decorrelated arm equal `target`.
///
/// Mixing a fraction `d` of an independent exponential field gives
/// c2 = (1-d) / sqrt((1-d)^2 + d^2); this inverts that relation.
pub fn decorrelation_for_c2(target: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&target),
        "target correlation must be in [0, 1]"
    );
    if target == 0.0 {
        return 1.0;
    }
    let s = (1.0 - target * target).sqrt();
    s / (s + target)
}

/// Full parametric description of a synthetic three-arm experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub speckle: SpeckleParams,
    /// Arm 1 is the test arm; arms 2 and 3 are the references.
    pub arms: [ArmParams; 3],
    /// Transmission mask applied to arm 1.
    pub object: ObjectMask,
    /// Analog-to-count conversion factor applied before rounding.
    pub quantization_gain: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.speckle.validate()?;
        for (i, arm) in self.arms.iter().enumerate() {
            arm.validate(i)?;
        }
        if self.object.width() != self.speckle.grid_width
            || self.object.height() != self.speckle.grid_height
        {
            return Err(SimError::ObjectDimensionMismatch {
                mask_w: self.object.width(),
                mask_h: self.object.height(),
                grid_w: self.speckle.grid_width,
                grid_h: self.speckle.grid_height,
            });
        }
        if !(self.quantization_gain > 0.0) {
            return Err(SimError::BadParams(format!(
                "quantization_gain {} must be positive",
                self.quantization_gain
            )));
        }
        Ok(())
    }
}

/// What the simulator knows that an experimenter would have to measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub offsets: [Displacement; 3],
    pub gains: [f64; 3],
    pub decorrelations: [f64; 3],
    pub object: ObjectMask,
}

impl GroundTruth {
    /// Key/value lines for the ground-truth text record.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![("seed".to_string(), self.seed.to_string())];
        for i in 0..3 {
            let arm = i + 1;
            kv.push((format!("arm{arm}_offset_dx"), self.offsets[i].dx.to_string()));
            kv.push((format!("arm{arm}_offset_dy"), self.offsets[i].dy.to_string()));
            kv.push((format!("arm{arm}_gain"), self.gains[i].to_string()));
            kv.push((
                format!("arm{arm}_decorrelation"),
                self.decorrelations[i].to_string(),
            ));
        }
        kv.push((
            "object_opaque_fraction".to_string(),
            self.object.opaque_fraction().to_string(),
        ));
        kv
    }
}

/// Simulation result: three frame-aligned stacks plus the ground truth.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub arms: [FrameStack; 3],
    pub ground_truth: GroundTruth,
}

/// Run the three-arm simulation with 16-bit quantization.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    simulate_inner(config, true)
}

/// Run the simulation keeping analog (pre-quantization) values.
///
/// Noise is still applied; only the count conversion, clamping and rounding
/// are skipped. With noise off, scaling an arm's gain scales its analog
/// stack exactly.
pub fn simulate_analog(config: &SimConfig) -> Result<SimOutput, SimError> {
    simulate_inner(config, false)
}

fn simulate_inner(config: &SimConfig, quantize: bool) -> Result<SimOutput, SimError> {
    config.validate()?;
    let synth = SpeckleSynth::new(config.speckle.clone())?;
    let w = config.speckle.grid_width as usize;
    let h = config.speckle.grid_height as usize;
    let n_frames = config.speckle.n_frames;
    let frame_area = w * h;

    let mut bufs: [Vec<f64>; 3] = [
        vec![0.0; frame_area * n_frames as usize],
        vec![0.0; frame_area * n_frames as usize],
        vec![0.0; frame_area * n_frames as usize],
    ];
    let [buf0, buf1, buf2] = &mut bufs;

    // Frames are independent given their streams, so the frame loop
    // parallelizes without changing any output bit.
    buf0.par_chunks_mut(frame_area)
        .zip(buf1.par_chunks_mut(frame_area))
        .zip(buf2.par_chunks_mut(frame_area))
        .enumerate()
        .for_each(|(k, ((f0, f1), f2))| {
            render_frame(config, &synth, k as u32, [f0, f1, f2], quantize);
        });

    let mut arms = Vec::with_capacity(3);
    for (i, buf) in bufs.into_iter().enumerate() {
        let mut meta = Meta::new();
        meta.insert("arm".into(), (i + 1).to_string());
        meta.insert("seed".into(), config.speckle.seed.to_string());
        meta.insert("gain".into(), config.arms[i].gain.to_string());
        meta.insert(
            "decorrelation".into(),
            config.arms[i].decorrelation.to_string(),
        );
        meta.insert("offset_dx".into(), config.arms[i].offset.dx.to_string());
        meta.insert("offset_dy".into(), config.arms[i].offset.dy.to_string());
        meta.insert("quantized".into(), quantize.to_string());
        arms.push(FrameStack::new(
            config.speckle.grid_width,
            config.speckle.grid_height,
            n_frames,
            buf,
            meta,
        )?);
    }
    let arms: [FrameStack; 3] = arms.try_into().expect("three arms");

    Ok(SimOutput {
        arms,
        ground_truth: GroundTruth {
            seed: config.speckle.seed,
            offsets: [
                config.arms[0].offset,
                config.arms[1].offset,
                config.arms[2].offset,
            ],
            gains: [
                config.arms[0].gain,
                config.arms[1].gain,
                config.arms[2].gain,
            ],
            decorrelations: [
                config.arms[0].decorrelation,
                config.arms[1].decorrelation,
                config.arms[2].decorrelation,
            ],
            object: config.object.clone(),
        },
    })
}

fn render_frame(
    config: &SimConfig,
    synth: &SpeckleSynth,
    frame: u32,
    outputs: [&mut [f64]; 3],
    quantize: bool,
) {
    let w = config.speckle.grid_width as usize;
    let h = config.speckle.grid_height as usize;
    let seed = config.speckle.seed;
    let master = synth.synthesize_master(frame);

    for (i, out) in outputs.into_iter().enumerate() {
        let arm = &config.arms[i];
        let arm_tag = (i + 1) as u32;

        // Torus translation of the master field: the FFT-synthesized field
        // is periodic, so a circular shift is an exact translation with
        // stationary statistics everywhere on the grid.
        let dx = arm.offset.dx.rem_euclid(w as i32) as usize;
        let dy = arm.offset.dy.rem_euclid(h as i32) as usize;
        for y in 0..h {
            let src_y = (y + h - dy) % h;
            for x in 0..w {
                let src_x = (x + w - dx) % w;
                out[y * w + x] = master[src_y * w + src_x];
            }
        }

        if arm.decorrelation > 0.0 {
            let independent =
                synth.synthesize_labeled(frame, arm_tag, StreamPurpose::Decorrelation);
            let d = arm.decorrelation;
            for (v, &ind) in out.iter_mut().zip(&independent) {
                *v = (1.0 - d) * *v + d * ind;
            }
        }

        if arm.gain != 1.0 {
            for v in out.iter_mut() {
                *v *= arm.gain;
            }
        }

        if i == 0 {
            let mask = config.object.values();
            for (v, &t) in out.iter_mut().zip(mask) {
                *v *= t;
            }
        }

        if arm.shot_noise {
            let mut rng = stream(seed, frame, arm_tag, StreamPurpose::ShotNoise);
            for v in out.iter_mut() {
                *v = if *v > 0.0 {
                    Poisson::new(*v).expect("positive mean").sample(&mut rng)
                } else {
                    0.0
                };
            }
        }

        if arm.read_noise_sigma > 0.0 {
            let mut rng = stream(seed, frame, arm_tag, StreamPurpose::ReadNoise);
            let sigma = arm.read_noise_sigma;
            for v in out.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v += sigma * g;
            }
        }

        if quantize {
            let q = config.quantization_gain;
            for v in out.iter_mut() {
                *v = (*v * q).clamp(0.0, 65535.0).round();
            }
        } else {
            // Analog stacks still honor the nonnegative-intensity invariant.
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(seed: u64, n_frames: u32) -> SimConfig {
        SimConfig {
            speckle: SpeckleParams {
                grid_width: 48,
                grid_height: 48,
                coh_radius: 2.5,
                mean_intensity: 400.0,
                n_frames,
                seed,
            },
            arms: [
                ArmParams::default(),
                ArmParams::default(),
                ArmParams::default(),
            ],
            object: ObjectMask::transparent(48, 48).unwrap(),
            quantization_gain: 1.0,
        }
    }

    #[test]
    fn degenerate_copy_gives_identical_stacks() {
        let out = simulate(&base_config(3, 4)).unwrap();
        assert_eq!(out.arms[0].pixels(), out.arms[1].pixels());
        assert_eq!(out.arms[1].pixels(), out.arms[2].pixels());
    }

    #[test]
    fn simulate_is_deterministic() {
        let a = simulate(&base_config(9, 3)).unwrap();
        let b = simulate(&base_config(9, 3)).unwrap();
        for i in 0..3 {
            assert_eq!(a.arms[i].pixels(), b.arms[i].pixels());
        }
    }

    #[test]
    fn offset_translates_frames_on_overlap() {
        let mut cfg = base_config(4, 2);
        cfg.arms[1].offset = Displacement::new(3, -2);
        let out = simulate(&cfg).unwrap();
        let a1 = &out.arms[0];
        let a2 = &out.arms[1];
        for f in 0..2 {
            for y in 2..40u32 {
                for x in 0..40u32 {
                    assert_eq!(
                        a2.pixel(f, y, x + 3),
                        a1.pixel(f, y + 2, x),
                        "frame {f} at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn gain_scales_analog_stack_exactly() {
        let mut cfg = base_config(5, 2);
        let base = simulate_analog(&cfg).unwrap();
        cfg.arms[2].gain = 2.5;
        let scaled = simulate_analog(&cfg).unwrap();
        for (a, b) in base.arms[2].pixels().iter().zip(scaled.arms[2].pixels()) {
            assert_eq!(*b, *a * 2.5);
        }
        // Other arms untouched.
        assert_eq!(base.arms[0].pixels(), scaled.arms[0].pixels());
    }

    #[test]
    fn object_dimension_mismatch_is_config_error() {
        let mut cfg = base_config(1, 1);
        cfg.object = ObjectMask::transparent(32, 48).unwrap();
        assert!(matches!(
            simulate(&cfg),
            Err(SimError::ObjectDimensionMismatch { .. })
        ));
    }

    #[test]
    fn quantized_output_is_integer_u16() {
        let mut cfg = base_config(7, 3);
        cfg.arms[1].decorrelation = 0.3;
        cfg.arms[1].read_noise_sigma = 10.0;
        let out = simulate(&cfg).unwrap();
        for arm in &out.arms {
            assert!(arm.is_quantized());
        }
    }

    #[test]
    fn decorrelation_calibration_matches_closed_form() {
        let d = decorrelation_for_c2(0.88);
        let c2 = (1.0 - d) / ((1.0 - d) * (1.0 - d) + d * d).sqrt();
        assert!((c2 - 0.88).abs() < 1e-12);
        assert!((decorrelation_for_c2(1.0) - 0.0).abs() < 1e-12);
        assert_eq!(decorrelation_for_c2(0.0), 1.0);
    }

    #[test]
    fn shot_noise_keeps_values_nonnegative_integers() {
        let mut cfg = base_config(8, 2);
        cfg.speckle.mean_intensity = 50.0;
        cfg.arms[0].shot_noise = true;
        let out = simulate(&cfg).unwrap();
        assert!(out.arms[0].is_quantized());
    }
}
