//! Line-oriented `key = value` pipeline configuration.
//!
//! The schema is fixed: unknown keys are rejected with the offending line
//! number, values are validated on parse, and relative paths resolve
//! against the config file's directory. Command-line flags override the
//! seed, frame count and thread count afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ghostlab_core::frames::{Displacement, Region};
use ghostlab_core::specklesim::{ArmParams, ObjectMask, SimConfig, SpeckleParams};

#[derive(Debug)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<u32>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "{}:{}: {}", self.file, n, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parsed and validated pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Directory the config file lives in; relative paths resolve here.
    pub base_dir: PathBuf,
    pub grid_width: u32,
    pub grid_height: u32,
    pub coh_radius: f64,
    pub mean_intensity: f64,
    pub n_frames: u32,
    pub seed: u64,
    pub quantization_gain: f64,
    pub arms: [ArmConfig; 3],
    pub object: ObjectConfig,
    pub threads: Option<u32>,
    /// Object-free anchor region for registration (C1).
    pub anchor: Option<Region>,
    /// Symmetric displacement search half-widths.
    pub search: Option<(i32, i32)>,
    /// Bucket region on the test arm (R1).
    pub r1: Option<Region>,
    /// Visibility regions in ghost-image coordinates.
    pub back: Option<Region>,
    pub obj: Option<Region>,
}

#[derive(Debug, Clone, Default)]
pub struct ArmConfig {
    pub gain: f64,
    pub offset_dx: i32,
    pub offset_dy: i32,
    pub decorrelation: f64,
    pub read_noise: f64,
    pub shot_noise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectConfig {
    None,
    WireCurl {
        thickness: f64,
        turns: f64,
        r_start: f64,
        r_end: f64,
        center: Option<(f64, f64)>,
    },
    DoubleSlit {
        slit_width: u32,
        separation: u32,
    },
    Disk {
        radius: f64,
    },
    Pgm {
        path: PathBuf,
    },
}

const KNOWN_KEYS: &[&str] = &[
    "grid_width",
    "grid_height",
    "coh_radius",
    "mean_intensity",
    "n_frames",
    "seed",
    "quantization_gain",
    "threads",
    "object",
    "object_path",
    "object_thickness",
    "object_turns",
    "object_r_start",
    "object_r_end",
    "object_center_x",
    "object_center_y",
    "object_radius",
    "object_slit_width",
    "object_slit_separation",
    "anchor_x",
    "anchor_y",
    "anchor_width",
    "anchor_height",
    "search_dx",
    "search_dy",
    "r1_x",
    "r1_y",
    "r1_width",
    "r1_height",
    "back_x",
    "back_y",
    "back_width",
    "back_height",
    "obj_x",
    "obj_y",
    "obj_width",
    "obj_height",
    "arm1_gain",
    "arm2_gain",
    "arm3_gain",
    "arm1_offset_dx",
    "arm2_offset_dx",
    "arm3_offset_dx",
    "arm1_offset_dy",
    "arm2_offset_dy",
    "arm3_offset_dy",
    "arm1_decorrelation",
    "arm2_decorrelation",
    "arm3_decorrelation",
    "arm1_read_noise",
    "arm2_read_noise",
    "arm3_read_noise",
    "arm1_shot_noise",
    "arm2_shot_noise",
    "arm3_shot_noise",
];

struct RawConfig {
    file: String,
    entries: BTreeMap<String, (u32, String)>,
}

impl RawConfig {
    fn err(&self, line: Option<u32>, message: String) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line,
            message,
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|_| {
                self.err(
                    Some(*line),
                    format!("invalid value {raw:?} for key \"{key}\""),
                )
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?
            .ok_or_else(|| self.err(None, format!("missing required key \"{key}\"")))
    }

    fn region(&self, prefix: &str) -> Result<Option<Region>, ConfigError> {
        let parts = [
            self.get::<u32>(&format!("{prefix}_x"))?,
            self.get::<u32>(&format!("{prefix}_y"))?,
            self.get::<u32>(&format!("{prefix}_width"))?,
            self.get::<u32>(&format!("{prefix}_height"))?,
        ];
        if parts.iter().all(|p| p.is_none()) {
            return Ok(None);
        }
        let [Some(x), Some(y), Some(w), Some(h)] = parts else {
            return Err(self.err(
                None,
                format!("region \"{prefix}\" needs all of {prefix}_x, {prefix}_y, {prefix}_width, {prefix}_height"),
            ));
        };
        Region::new(x, y, w, h)
            .map(Some)
            .map_err(|e| self.err(None, format!("region \"{prefix}\": {e}")))
    }
}

/// Parse a config file.
pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse(&text, &file, path.parent().unwrap_or(Path::new(".")))
}

/// Parse config text; `base_dir` anchors relative paths.
pub fn parse(text: &str, file: &str, base_dir: &Path) -> Result<PipelineConfig, ConfigError> {
    let mut entries: BTreeMap<String, (u32, String)> = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError {
                file: file.to_string(),
                line: Some(line_no),
                message: format!("expected \"key = value\", got {line:?}"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError {
                file: file.to_string(),
                line: Some(line_no),
                message: format!("unknown key \"{key}\""),
            });
        }
        if let Some((first_line, _)) =
            entries.insert(key.to_string(), (line_no, value.to_string()))
        {
            return Err(ConfigError {
                file: file.to_string(),
                line: Some(line_no),
                message: format!("duplicate key \"{key}\" (first set on line {first_line})"),
            });
        }
    }
    let raw = RawConfig {
        file: file.to_string(),
        entries,
    };

    let mut arms: [ArmConfig; 3] = Default::default();
    for (i, arm) in arms.iter_mut().enumerate() {
        let n = i + 1;
        arm.gain = raw.get(&format!("arm{n}_gain"))?.unwrap_or(1.0);
        arm.offset_dx = raw.get(&format!("arm{n}_offset_dx"))?.unwrap_or(0);
        arm.offset_dy = raw.get(&format!("arm{n}_offset_dy"))?.unwrap_or(0);
        arm.decorrelation = raw.get(&format!("arm{n}_decorrelation"))?.unwrap_or(0.0);
        arm.read_noise = raw.get(&format!("arm{n}_read_noise"))?.unwrap_or(0.0);
        arm.shot_noise = raw.get(&format!("arm{n}_shot_noise"))?.unwrap_or(false);
    }

    let object = match raw.get::<String>("object")?.as_deref() {
        None | Some("none") => ObjectConfig::None,
        Some("wire_curl") => {
            let center_x = raw.get::<f64>("object_center_x")?;
            let center_y = raw.get::<f64>("object_center_y")?;
            let center = match (center_x, center_y) {
                (Some(x), Some(y)) => Some((x, y)),
                (None, None) => None,
                _ => {
                    return Err(raw.err(
                        None,
                        "object_center_x and object_center_y must be given together".into(),
                    ))
                }
            };
            ObjectConfig::WireCurl {
                thickness: raw.require("object_thickness")?,
                turns: raw.require("object_turns")?,
                r_start: raw.require("object_r_start")?,
                r_end: raw.require("object_r_end")?,
                center,
            }
        }
        Some("double_slit") => ObjectConfig::DoubleSlit {
            slit_width: raw.require("object_slit_width")?,
            separation: raw.require("object_slit_separation")?,
        },
        Some("disk") => ObjectConfig::Disk {
            radius: raw.require("object_radius")?,
        },
        Some("pgm") => {
            let rel: String = raw.require("object_path")?;
            ObjectConfig::Pgm {
                path: base_dir.join(rel),
            }
        }
        Some(other) => {
            let line = raw.entries.get("object").map(|(l, _)| *l);
            return Err(raw.err(
                line,
                format!(
                    "unknown object kind {other:?} (expected none, wire_curl, double_slit, disk or pgm)"
                ),
            ));
        }
    };

    let search = {
        let dx = raw.get::<i32>("search_dx")?;
        let dy = raw.get::<i32>("search_dy")?;
        match (dx, dy) {
            (Some(dx), Some(dy)) if dx >= 0 && dy >= 0 => Some((dx, dy)),
            (Some(_), Some(_)) => {
                return Err(raw.err(None, "search_dx and search_dy must be >= 0".into()))
            }
            (None, None) => None,
            _ => {
                return Err(raw.err(
                    None,
                    "search_dx and search_dy must be given together".into(),
                ))
            }
        }
    };

    Ok(PipelineConfig {
        base_dir: base_dir.to_path_buf(),
        grid_width: raw.require("grid_width")?,
        grid_height: raw.require("grid_height")?,
        coh_radius: raw.require("coh_radius")?,
        mean_intensity: raw.require("mean_intensity")?,
        n_frames: raw.require("n_frames")?,
        seed: raw.require("seed")?,
        quantization_gain: raw.get("quantization_gain")?.unwrap_or(1.0),
        arms,
        object,
        threads: raw.get("threads")?,
        anchor: raw.region("anchor")?,
        search,
        r1: raw.region("r1")?,
        back: raw.region("back")?,
        obj: raw.region("obj")?,
    })
}

impl PipelineConfig {
    /// Build the object mask for this configuration.
    pub fn object_mask(&self) -> anyhow::Result<ObjectMask> {
        let (w, h) = (self.grid_width, self.grid_height);
        let mask = match &self.object {
            ObjectConfig::None => ObjectMask::transparent(w, h)?,
            ObjectConfig::WireCurl {
                thickness,
                turns,
                r_start,
                r_end,
                center,
            } => match center {
                Some((cx, cy)) => ObjectMask::wire_curl_at(
                    w, h, *cx, *cy, *thickness, *turns, *r_start, *r_end,
                )?,
                None => ObjectMask::wire_curl(w, h, *thickness, *turns, *r_start, *r_end)?,
            },
            ObjectConfig::DoubleSlit {
                slit_width,
                separation,
            } => ObjectMask::double_slit(w, h, *slit_width, *separation)?,
            ObjectConfig::Disk { radius } => ObjectMask::disk(w, h, *radius)?,
            ObjectConfig::Pgm { path } => {
                let img = ghostlab_core::frames::pgm::read_pgm(path)?;
                ObjectMask::from_pgm(&img)?
            }
        };
        Ok(mask)
    }

    /// Assemble the simulator configuration.
    pub fn sim_config(&self) -> anyhow::Result<SimConfig> {
        let arms = std::array::from_fn(|i| {
            let a = &self.arms[i];
            ArmParams {
                gain: a.gain,
                offset: Displacement::new(a.offset_dx, a.offset_dy),
                decorrelation: a.decorrelation,
                read_noise_sigma: a.read_noise,
                shot_noise: a.shot_noise,
            }
        });
        Ok(SimConfig {
            speckle: SpeckleParams {
                grid_width: self.grid_width,
                grid_height: self.grid_height,
                coh_radius: self.coh_radius,
                mean_intensity: self.mean_intensity,
                n_frames: self.n_frames,
                seed: self.seed,
            },
            arms,
            object: self.object_mask()?,
            quantization_gain: self.quantization_gain,
        })
    }
}
