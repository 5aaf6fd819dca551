//! Monte-Carlo rain and snow distortion.
//!
//! Precipitation is described by an exponential drop size distribution
//! `N(D) = N0 * exp(-lambda * D)` (`D` in mm, `N` in m^-3 mm^-1):
//!
//! | weather | `N0`                  | `lambda` (mm^-1)        |
//! |---------|-----------------------|-------------------------|
//! | rain    | `8000`                | `4.1 * rate^-0.21`      |
//! | snow    | `3800 * rate^-0.87`   | `2.55 * rate^-0.48`     |
//!
//! with `rate` in mm/h. Extinction uses the geometric-optics efficiency
//! `Q_ext = 2`:
//!
//! ```text
//! alpha = Q_ext * integral (pi D^2 / 4) N(D) dD = Q_ext * (pi / 4) * N0 * 2 / lambda^3   [mm^2 m^-3]
//! ```
//!
//! scaled by `1e-6` to 1/m.
//!
//! Each point draws from its own generator (keyed by seed and point
//! index). The hard-target return is `I * exp(-2 alpha R)`. The number of
//! particles inside the beam cone up to `R` is Poisson with mean
//! `(pi / 4) * divergence^2 * n_v * R^3 / 3`; if any are present, one
//! particle at `R_p ~ U(r_min, R)` with diameter drawn from the DSD gives a
//! soft return `beta * exp(-2 alpha R_p) * min(1, D^2 / (divergence R_p)^2)`.
//! The stronger of the two returns wins if it clears the noise floor.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::physics::{self, AttenuationParams, Condition};
use crate::projection::{Channel, RangeImage, SensorProfile};
use crate::rng::point_rng;

/// Geometric-optics extinction efficiency for drops much larger than the
/// wavelength.
pub const EXTINCTION_EFFICIENCY: f64 = 2.0;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("precipitation rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid weather parameter: {0}")]
    InvalidParams(String),
    #[error("range image was not projected from this cloud")]
    MissingChannels,
    #[error("pixel refers to point {index} but the cloud has {len} points")]
    IndexMismatch { index: usize, len: usize },
    #[error(transparent)]
    Physics(#[from] physics::PhysicsError),
    #[error(transparent)]
    Cloud(#[from] crate::cloud::CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherKind {
    Rain,
    Snow,
}

impl WeatherKind {
    pub fn condition(self) -> Condition {
        match self {
            WeatherKind::Rain => Condition::Rain,
            WeatherKind::Snow => Condition::Snow,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeatherKind::Rain => "rain",
            WeatherKind::Snow => "snow",
        }
    }

    /// Exponential drop size distribution at `rate` mm/h.
    pub fn dsd(self, rate: f64) -> Result<DropSizeDistribution, WeatherError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(WeatherError::NonPositiveRate(rate));
        }
        Ok(match self {
            WeatherKind::Rain => DropSizeDistribution {
                n0: 8000.0,
                lambda: 4.1 * rate.powf(-0.21),
            },
            WeatherKind::Snow => DropSizeDistribution {
                n0: 3800.0 * rate.powf(-0.87),
                lambda: 2.55 * rate.powf(-0.48),
            },
        })
    }
}

impl std::str::FromStr for WeatherKind {
    type Err = WeatherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rain" => Ok(WeatherKind::Rain),
            "snow" => Ok(WeatherKind::Snow),
            other => Err(WeatherError::InvalidParams(format!("unknown weather `{other}`"))),
        }
    }
}

/// `N(D) = n0 * exp(-lambda * D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropSizeDistribution {
    /// Intercept, m^-3 mm^-1.
    pub n0: f64,
    /// Slope, mm^-1.
    pub lambda: f64,
}

impl DropSizeDistribution {
    /// Particles per mm of diameter per cubic metre.
    pub fn density(&self, diameter_mm: f64) -> f64 {
        self.n0 * (-self.lambda * diameter_mm).exp()
    }

    /// Particles per cubic metre.
    pub fn number_density(&self) -> f64 {
        self.n0 / self.lambda
    }

    /// Extinction coefficient in 1/m.
    pub fn extinction(&self) -> f64 {
        EXTINCTION_EFFICIENCY * (PI / 4.0) * self.n0 * 2.0 / self.lambda.powi(3) * 1e-6
    }
}

pub fn extinction_coefficient(weather: WeatherKind, rate: f64) -> Result<f64, WeatherError> {
    Ok(weather.dsd(rate)?.extinction())
}

fn default_noise_floor() -> f64 {
    0.01
}
fn default_divergence() -> f64 {
    0.003
}
fn default_beta_rain() -> f64 {
    0.35
}
fn default_beta_snow() -> f64 {
    0.9
}
fn default_r_min() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherParams {
    pub weather: WeatherKind,
    pub rate_mm_h: f64,
    /// Minimum detectable normalized intensity.
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
    /// Full beam divergence, radians.
    #[serde(default = "default_divergence", rename = "beam_divergence_rad")]
    pub beam_divergence: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fixed extinction coefficient (1/m) in place of the DSD value.
    #[serde(default)]
    pub alpha_override: Option<f64>,
    #[serde(default = "default_beta_rain")]
    pub beta_rain: f64,
    #[serde(default = "default_beta_snow")]
    pub beta_snow: f64,
    /// Returns closer than this are gated by the sensor.
    #[serde(default = "default_r_min")]
    pub r_min: f64,
}

impl WeatherParams {
    pub fn new(weather: WeatherKind, rate_mm_h: f64, seed: u64) -> Self {
        WeatherParams {
            weather,
            rate_mm_h,
            noise_floor: default_noise_floor(),
            beam_divergence: default_divergence(),
            seed,
            alpha_override: None,
            beta_rain: default_beta_rain(),
            beta_snow: default_beta_snow(),
            r_min: default_r_min(),
        }
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(self.rate_mm_h > 0.0 && self.rate_mm_h.is_finite()) {
            return Err(WeatherError::NonPositiveRate(self.rate_mm_h));
        }
        let bad = |m: String| Err(WeatherError::InvalidParams(m));
        if !(self.noise_floor > 0.0 && self.noise_floor < 1.0) {
            return bad(format!("noise_floor must lie in (0, 1), got {}", self.noise_floor));
        }
        if !(self.beam_divergence > 0.0 && self.beam_divergence.is_finite()) {
            return bad(format!("beam divergence must be positive, got {}", self.beam_divergence));
        }
        if let Some(a) = self.alpha_override {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("alpha_override must be >= 0, got {a}"));
            }
        }
        for (name, beta) in [("beta_rain", self.beta_rain), ("beta_snow", self.beta_snow)] {
            if !(0.0..=1.0).contains(&beta) {
                return bad(format!("{name} must lie in [0, 1], got {beta}"));
            }
        }
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return bad(format!("r_min must be >= 0, got {}", self.r_min));
        }
        Ok(())
    }

    /// Extinction coefficient in 1/m, honouring the override.
    pub fn alpha(&self) -> Result<f64, WeatherError> {
        match self.alpha_override {
            Some(a) => Ok(a),
            None => extinction_coefficient(self.weather, self.rate_mm_h),
        }
    }

    pub fn backscatter_ratio(&self) -> f64 {
        match self.weather {
            WeatherKind::Rain => self.beta_rain,
            WeatherKind::Snow => self.beta_snow,
        }
    }
}

/// Fate of one input point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// Hard target still detected; attenuated normalized intensity.
    Kept { intensity: f64 },
    /// Replaced by a particle return on the same beam.
    Relocated { range: f64, intensity: f64 },
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub kept: usize,
    pub relocated: usize,
    pub dropped: usize,
}

impl VerdictCounts {
    pub fn total(&self) -> usize {
        self.kept + self.relocated + self.dropped
    }

    fn tally(&mut self, verdict: &Verdict) {
        match verdict {
            Verdict::Kept { .. } => self.kept += 1,
            Verdict::Relocated { .. } => self.relocated += 1,
            Verdict::Dropped => self.dropped += 1,
        }
    }
}

impl std::ops::Add for VerdictCounts {
    type Output = VerdictCounts;

    fn add(self, rhs: VerdictCounts) -> VerdictCounts {
        VerdictCounts {
            kept: self.kept + rhs.kept,
            relocated: self.relocated + rhs.relocated,
            dropped: self.dropped + rhs.dropped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherOutcome {
    verdicts: Vec<Verdict>,
    summary: VerdictCounts,
    alpha_used: f64,
    weather: WeatherKind,
}

impl WeatherOutcome {
    pub fn weather(&self) -> WeatherKind {
        self.weather
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn summary(&self) -> VerdictCounts {
        self.summary
    }

    pub fn alpha_used(&self) -> f64 {
        self.alpha_used
    }

    pub fn kept_fraction(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 1.0;
        }
        self.summary.kept as f64 / self.verdicts.len() as f64
    }

    /// The weather image: dropped owners clear their pixel, relocated owners
    /// move to the particle range, every owner takes its new intensity.
    pub fn apply_to_image(&self, image: &RangeImage) -> RangeImage {
        let mut out = image.clone();
        for pixel in 0..image.pixel_count() {
            let Some(index) = image.point_at_pixel(pixel) else {
                continue;
            };
            match self.verdicts.get(index) {
                Some(Verdict::Kept { intensity }) => {
                    out.channel_mut(Channel::Intensity)[pixel] = *intensity as f32;
                }
                Some(Verdict::Relocated { range, intensity }) => {
                    out.set_range(pixel, *range);
                    out.channel_mut(Channel::Intensity)[pixel] = *intensity as f32;
                }
                Some(Verdict::Dropped) | None => out.clear_pixel(pixel),
            }
        }
        out.with_weather_onehot(self.weather)
    }
}

/// Per-frame constants shared by every point.
struct Scene {
    profile: SensorProfile,
    attenuation: AttenuationParams,
    dsd: DropSizeDistribution,
    /// `(pi / 4) * divergence^2 * n_v / 3`, multiplied by `R^3` per point.
    cone_factor: f64,
    params: WeatherParams,
}

impl Scene {
    fn verdict(&self, index: usize, point: &Point) -> Verdict {
        let p = &self.params;
        let range = point.range();
        let intensity = self.profile.normalize_intensity(point.intensity) as f64;
        let hard = physics::attenuate(intensity, range, &self.attenuation);

        let mut rng = point_rng(p.seed, index as u64);
        let expected = self.cone_factor * range.powi(3);
        let hits = if expected > 0.0 {
            Poisson::new(expected).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
        } else {
            0.0
        };

        let mut soft = 0.0;
        let mut soft_range = 0.0;
        if hits > 0.0 && range > p.r_min {
            soft_range = rng.random_range(p.r_min..range);
            let diameter_m = Exp::new(self.dsd.lambda)
                .map(|d| d.sample(&mut rng))
                .unwrap_or(0.0)
                * 1e-3;
            let footprint = p.beam_divergence * soft_range;
            let occupancy = (diameter_m * diameter_m / (footprint * footprint)).min(1.0);
            soft = p.backscatter_ratio() * physics::transmittance(soft_range, self.attenuation.alpha()) * occupancy;
        }

        if hard >= p.noise_floor && hard >= soft {
            Verdict::Kept { intensity: hard }
        } else if soft >= p.noise_floor {
            Verdict::Relocated {
                range: soft_range,
                intensity: soft,
            }
        } else {
            Verdict::Dropped
        }
    }
}

/// Converts a clear sweep into its rain or snow counterpart.
///
/// The image supplies the sensor profile used to normalize intensities and
/// must come from projecting `cloud`. Work is spread over the current rayon
/// pool; the result does not depend on its size.
pub fn distort(
    cloud: &PointCloud,
    image: &RangeImage,
    params: &WeatherParams,
) -> Result<(PointCloud, WeatherOutcome), WeatherError> {
    params.validate()?;
    let len = cloud.len();
    if len > 0 && image.occupied_count() + image.unprojected() == 0 {
        return Err(WeatherError::MissingChannels);
    }
    if let Some(index) = (0..image.pixel_count())
        .filter_map(|px| image.point_at_pixel(px))
        .find(|&i| i >= len)
    {
        return Err(WeatherError::IndexMismatch { index, len });
    }

    let alpha = params.alpha()?;
    let dsd = params.weather.dsd(params.rate_mm_h)?;
    let scene = Scene {
        profile: *image.profile(),
        attenuation: AttenuationParams::new(alpha, params.weather.condition())?,
        dsd,
        cone_factor: PI / 4.0 * params.beam_divergence.powi(2) * dsd.number_density() / 3.0,
        params: *params,
    };

    let verdicts: Vec<Verdict> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| scene.verdict(i, p))
        .collect();
    let summary = verdicts
        .par_iter()
        .fold(VerdictCounts::default, |mut acc, v| {
            acc.tally(v);
            acc
        })
        .reduce(VerdictCounts::default, |a, b| a + b);

    let scale = scene.profile.intensity_scale;
    let points = cloud
        .points()
        .iter()
        .zip(&verdicts)
        .filter_map(|(p, v)| match *v {
            Verdict::Kept { intensity } => Some(Point {
                intensity: (intensity * scale) as f32,
                ..*p
            }),
            Verdict::Relocated { range, intensity } => {
                let k = range / p.range();
                Some(Point {
                    x: (p.x as f64 * k) as f32,
                    y: (p.y as f64 * k) as f32,
                    z: (p.z as f64 * k) as f32,
                    intensity: (intensity * scale) as f32,
                    ..*p
                })
            }
            Verdict::Dropped => None,
        })
        .collect();

    let out = cloud.with_points(points)?;
    Ok((
        out,
        WeatherOutcome {
            verdicts,
            summary,
            alpha_used: alpha,
            weather: params.weather,
        },
    ))
}
