use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::layout::{DatasetKind, LayoutOptions};
use crate::projection::SensorProfile;
use crate::weather::{WeatherKind, WeatherParams};

/// Output variant of a job; also the name of its output subdirectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Snow,
    Rain,
    IntensityAdapted,
}

impl Variant {
    pub fn dir_name(self) -> &'static str {
        match self {
            Variant::Snow => "snow",
            Variant::Rain => "rain",
            Variant::IntensityAdapted => "intensity_adapted",
        }
    }

    pub fn from_dir_name(name: &str) -> Option<Variant> {
        [Variant::Snow, Variant::Rain, Variant::IntensityAdapted]
            .into_iter()
            .find(|v| v.dir_name() == name)
    }

    pub fn weather(self) -> Option<WeatherKind> {
        match self {
            Variant::Snow => Some(WeatherKind::Snow),
            Variant::Rain => Some(WeatherKind::Rain),
            Variant::IntensityAdapted => None,
        }
    }

    /// Whether the variant keeps every input point in place.
    pub fn preserves_geometry(self) -> bool {
        self == Variant::IntensityAdapted
    }
}

/// Default precipitation rates (mm/h, liquid-water equivalent for snow).
pub const DEFAULT_RAIN_RATE: f64 = 10.0;
pub const DEFAULT_SNOW_RATE: f64 = 5.0;

/// Per-variant weather settings; unset keys take the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherBlock {
    pub rate_mm_h: Option<f64>,
    pub noise_floor: Option<f64>,
    pub beam_divergence_rad: Option<f64>,
    pub alpha_override: Option<f64>,
    pub beta_rain: Option<f64>,
    pub beta_snow: Option<f64>,
    pub r_min: Option<f64>,
}

impl WeatherBlock {
    pub fn resolve(&self, kind: WeatherKind, seed: u64) -> WeatherParams {
        let default_rate = match kind {
            WeatherKind::Rain => DEFAULT_RAIN_RATE,
            WeatherKind::Snow => DEFAULT_SNOW_RATE,
        };
        let mut p = WeatherParams::new(kind, self.rate_mm_h.unwrap_or(default_rate), seed);
        p.alpha_override = self.alpha_override;
        if let Some(v) = self.noise_floor {
            p.noise_floor = v;
        }
        if let Some(v) = self.beam_divergence_rad {
            p.beam_divergence = v;
        }
        if let Some(v) = self.beta_rain {
            p.beta_rain = v;
        }
        if let Some(v) = self.beta_snow {
            p.beta_snow = v;
        }
        if let Some(v) = self.r_min {
            p.r_min = v;
        }
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherSection {
    pub snow: Option<WeatherBlock>,
    pub rain: Option<WeatherBlock>,
}

impl WeatherSection {
    pub fn block(&self, kind: WeatherKind) -> WeatherBlock {
        match kind {
            WeatherKind::Snow => self.snow.clone(),
            WeatherKind::Rain => self.rain.clone(),
        }
        .unwrap_or_default()
    }
}

fn one() -> usize {
    1
}

/// A dataset transformation job, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub dataset: DatasetKind,
    pub source_root: PathBuf,
    pub output_root: PathBuf,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub parallelism: usize,
    /// Defaults to the dataset's native sensor.
    #[serde(default)]
    pub sensor: Option<SensorProfile>,
    /// Reflectance table; required for `intensity_adapted`.
    #[serde(default)]
    pub material_table: Option<PathBuf>,
    /// Skip non-finite and zero-range points instead of failing the frame.
    #[serde(default)]
    pub drop_invalid: bool,
    #[serde(default)]
    pub weather: WeatherSection,
    #[serde(default)]
    pub layout: LayoutOptions,
    /// Directory of range-image dumps (`<frame path>.rimg`) whose intensity
    /// plane replaces the physics reference for `intensity_adapted`.
    #[serde(default)]
    pub intensity_images: Option<PathBuf>,
}

impl JobConfig {
    pub fn new(dataset: DatasetKind, source_root: impl Into<PathBuf>, output_root: impl Into<PathBuf>, variants: Vec<Variant>) -> Self {
        JobConfig {
            dataset,
            source_root: source_root.into(),
            output_root: output_root.into(),
            variants,
            seed: 0,
            parallelism: 1,
            sensor: None,
            material_table: None,
            drop_invalid: false,
            weather: WeatherSection::default(),
            layout: LayoutOptions::default(),
            intensity_images: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Loads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = JobConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.source_root);
        resolve(&mut config.output_root);
        if let Some(p) = config.material_table.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.intensity_images.as_mut() {
            resolve(p);
        }
        Ok(config)
    }

    pub fn sensor_profile(&self) -> SensorProfile {
        self.sensor.unwrap_or(match self.dataset {
            DatasetKind::Nuscenes => SensorProfile::nuscenes32(),
            DatasetKind::SemanticKitti | DatasetKind::Voxelscape => SensorProfile::hdl64(),
        })
    }

    /// Variants deduplicated in canonical order.
    pub fn variant_set(&self) -> Vec<Variant> {
        self.variants.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_owned()));
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if same_location(&self.source_root, &self.output_root) {
            return bad("output_root must differ from source_root");
        }
        if self.variants.contains(&Variant::IntensityAdapted) && self.material_table.is_none() {
            return bad("intensity_adapted requires material_table");
        }
        self.sensor_profile()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for kind in [WeatherKind::Snow, WeatherKind::Rain] {
            self.weather
                .block(kind)
                .resolve(kind, 0)
                .validate()
                .map_err(|e| PipelineError::Config(format!("{} block: {e}", kind.name())))?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn same_location(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}
