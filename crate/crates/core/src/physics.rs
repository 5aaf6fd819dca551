//! Reference intensity model.
//!
//! Clear weather: `I = MR * cos(theta) / R`, clamped to `[0, 1]`, with `R`
//! in metres. Adverse weather multiplies by the two-way Beer-Lambert
//! transmittance `exp(-2 * alpha * R)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{Channel, RangeImage};

/// Shipped default reflectances for SemanticKITTI classes.
pub const DEFAULT_MATERIALS: &str = include_str!("../config/materials_semantickitti.toml");

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("range must be positive and finite, got {0}")]
    NonPositiveRange(f64),
    #[error("reflectance for {key} must lie in (0, 1], got {value}")]
    InvalidReflectance { key: String, value: f64 },
    #[error("malformed material table: {0}")]
    BadTable(String),
    #[error("extinction coefficient must be finite and >= 0, got {0}")]
    InvalidAlpha(f64),
    #[error("clear weather requires alpha = 0, got {0}")]
    ClearWithAttenuation(f64),
    #[error("range image has no {0:?} channel yet")]
    MissingChannel(Channel),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Atmospheric condition attached to an attenuation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clear,
    Rain,
    Snow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationParams {
    alpha: f64,
    condition: Condition,
}

impl AttenuationParams {
    pub const CLEAR: AttenuationParams = AttenuationParams {
        alpha: 0.0,
        condition: Condition::Clear,
    };

    /// `alpha` in 1/m.
    pub fn new(alpha: f64, condition: Condition) -> Result<Self, PhysicsError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(PhysicsError::InvalidAlpha(alpha));
        }
        if condition == Condition::Clear && alpha != 0.0 {
            return Err(PhysicsError::ClearWithAttenuation(alpha));
        }
        Ok(AttenuationParams { alpha, condition })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }
}

/// Semantic class id to material reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    reflectance: BTreeMap<u16, f64>,
    default_reflectance: f64,
}

impl Default for MaterialTable {
    fn default() -> Self {
        MaterialTable::parse(DEFAULT_MATERIALS).expect("bundled material table is valid")
    }
}

impl MaterialTable {
    pub fn new(reflectance: BTreeMap<u16, f64>, default_reflectance: f64) -> Result<Self, PhysicsError> {
        check_reflectance("default", default_reflectance)?;
        for (class, &value) in &reflectance {
            check_reflectance(&class.to_string(), value)?;
        }
        Ok(MaterialTable {
            reflectance,
            default_reflectance,
        })
    }

    /// Parses `class_id = reflectance` lines; `default = x` sets the
    /// fallback. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PhysicsError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| PhysicsError::BadTable(e.to_string()))?;
        let mut default = None;
        let mut reflectance = BTreeMap::new();
        for (key, value) in table {
            let value = value
                .as_float()
                .or_else(|| value.as_integer().map(|i| i as f64))
                .ok_or_else(|| PhysicsError::BadTable(format!("{key} is not a number")))?;
            if key == "default" {
                default = Some(value);
            } else {
                let class: u16 = key
                    .parse()
                    .map_err(|_| PhysicsError::BadTable(format!("{key} is not a class id")))?;
                reflectance.insert(class, value);
            }
        }
        let default = default.ok_or_else(|| PhysicsError::BadTable("missing `default` entry".into()))?;
        MaterialTable::new(reflectance, default)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhysicsError> {
        MaterialTable::parse(&std::fs::read_to_string(path)?)
    }

    /// Uniform reflectance for every class.
    pub fn uniform(value: f64) -> Result<Self, PhysicsError> {
        MaterialTable::new(BTreeMap::new(), value)
    }

    pub fn reflectance(&self, class_id: u16) -> f64 {
        self.reflectance
            .get(&class_id)
            .copied()
            .unwrap_or(self.default_reflectance)
    }

    pub fn default_reflectance(&self) -> f64 {
        self.default_reflectance
    }
}

fn check_reflectance(key: &str, value: f64) -> Result<(), PhysicsError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(PhysicsError::InvalidReflectance {
            key: key.to_owned(),
            value,
        })
    }
}

/// Clear-weather reference intensity, clamped to `[0, 1]`.
pub fn physics_intensity(range: f64, cos_incidence: f64, reflectance: f64) -> Result<f64, PhysicsError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(PhysicsError::NonPositiveRange(range));
    }
    Ok((reflectance * cos_incidence / range).clamp(0.0, 1.0))
}

/// Two-way Beer-Lambert transmittance over `range` metres.
pub fn transmittance(range: f64, alpha: f64) -> f64 {
    (-2.0 * alpha * range).exp()
}

pub fn attenuate(intensity: f64, range: f64, params: &AttenuationParams) -> f64 {
    if params.alpha == 0.0 {
        return intensity;
    }
    intensity * transmittance(range, params.alpha)
}

/// Replaces the intensity channel with the physics reference.
///
/// Pixels carrying a semantic class take their reflectance from `table`
/// (and the reflectance channel is rewritten to match); other pixels use
/// the reflectance already in the image.
pub fn reference_image(
    image: &RangeImage,
    table: &MaterialTable,
    params: &AttenuationParams,
) -> Result<RangeImage, PhysicsError> {
    if !image.has_incidence() {
        return Err(PhysicsError::MissingChannel(Channel::Incidence));
    }
    let max_range = image.profile().max_range;
    let mut out = image.clone();
    for pixel in 0..image.pixel_count() {
        if image.channel(Channel::Mask)[pixel] == 0.0 {
            continue;
        }
        let range = image.channel(Channel::Range)[pixel] as f64 * max_range;
        let cos = image.channel(Channel::Incidence)[pixel] as f64;
        let reflectance = match image.class_at(pixel) {
            Some(class) => {
                let r = table.reflectance(class);
                out.channel_mut(Channel::Reflectance)[pixel] = r as f32;
                r
            }
            None => image.channel(Channel::Reflectance)[pixel] as f64,
        };
        let value = match physics_intensity(range, cos, reflectance) {
            Ok(i) => attenuate(i, range, params),
            // zero stored range only arises from f32 underflow on points at the origin
            Err(_) => 0.0,
        };
        out.channel_mut(Channel::Intensity)[pixel] = value as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn physics_intensity_cases() {
        assert_eq!(physics_intensity(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((physics_intensity(2.0, 0.5, 0.8).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(physics_intensity(0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(physics_intensity(0.0, 1.0, 1.0), Err(PhysicsError::NonPositiveRange(_))));
        assert!(physics_intensity(-3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn attenuate_cases() {
        let rain = AttenuationParams::new(0.01, Condition::Rain).unwrap();
        assert!((attenuate(1.0, 50.0, &rain) - 0.367_879_441_171_442_3).abs() < 1e-12);
        assert_eq!(attenuate(0.0, 80.0, &rain), 0.0);
        for i in [0.0, 0.3, 1.0] {
            assert_eq!(attenuate(i, 12.5, &AttenuationParams::CLEAR), i);
        }
    }

    #[test]
    fn attenuation_params_invariants() {
        assert!(AttenuationParams::new(-0.1, Condition::Rain).is_err());
        assert!(AttenuationParams::new(f64::NAN, Condition::Snow).is_err());
        assert!(matches!(
            AttenuationParams::new(0.01, Condition::Clear),
            Err(PhysicsError::ClearWithAttenuation(_))
        ));
        assert_eq!(AttenuationParams::new(0.0, Condition::Clear).unwrap(), AttenuationParams::CLEAR);
    }

    #[test]
    fn material_table_parsing() {
        let table = MaterialTable::default();
        assert_eq!(table.reflectance(40), 0.15);
        assert_eq!(table.reflectance(81), 0.85);
        assert_eq!(table.reflectance(12345), 0.3);

        let custom = MaterialTable::parse("default = 0.5\n10 = 1\n# comment\n40 = 0.2").unwrap();
        assert_eq!(custom.reflectance(10), 1.0);
        assert_eq!(custom.reflectance(7), 0.5);

        assert!(matches!(MaterialTable::parse("10 = 0.2"), Err(PhysicsError::BadTable(_))));
        assert!(matches!(
            MaterialTable::parse("default = 0.5\n10 = 0"),
            Err(PhysicsError::InvalidReflectance { .. })
        ));
        assert!(matches!(MaterialTable::parse("default = 0.5\nroad = 0.1"), Err(PhysicsError::BadTable(_))));
    }

    proptest! {
        #[test]
        fn intensity_decreases_with_range(cos in 0.001f64..1.0, mr in 0.001f64..1.0, r in 1.0f64..200.0, dr in 0.01f64..50.0) {
            let near = mr * cos / r;
            prop_assume!(near < 1.0);
            prop_assert!(physics_intensity(r + dr, cos, mr).unwrap() < physics_intensity(r, cos, mr).unwrap());
        }

        #[test]
        fn intensity_is_linear_before_clamp(cos in 0.001f64..1.0, mr in 0.001f64..0.5, r in 2.0f64..200.0, k in 0.0f64..2.0) {
            let base = physics_intensity(r, cos, mr).unwrap();
            let scaled_mr = physics_intensity(r, cos, mr * k).unwrap();
            let scaled_cos = physics_intensity(r, (cos * k).min(1.0), mr).unwrap();
            prop_assert!((scaled_mr - k * base).abs() <= 1e-12);
            prop_assert!((scaled_cos - (cos * k).min(1.0) / cos * base).abs() <= 1e-12);
        }

        #[test]
        fn attenuation_composes(i in 0.0f64..1.0, r in 0.1f64..200.0, a1 in 0.0f64..0.05, a2 in 0.0f64..0.05) {
            let p1 = AttenuationParams::new(a1, Condition::Rain).unwrap();
            let p2 = AttenuationParams::new(a2, Condition::Rain).unwrap();
            let p12 = AttenuationParams::new(a1 + a2, Condition::Rain).unwrap();
            let joint = attenuate(i, r, &p12);
            let chained = attenuate(attenuate(i, r, &p1), r, &p2);
            prop_assert!((joint - chained).abs() <= 1e-9 * joint.abs().max(1e-300));
            prop_assert!((0.0..=1.0).contains(&joint));
        }
    }
}
