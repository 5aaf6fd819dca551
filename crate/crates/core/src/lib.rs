//! Physics-based transformation of automotive LiDAR sweeps.
//!
//! The crate turns clear-weather sweeps into sensor-normalized and
//! adverse-weather (rain, snow) counterparts while keeping the on-disk
//! format of the source dataset bit-for-bit intact:
//!
//! - [`cloud`] reads and writes KITTI-style (`x y z i`) and nuScenes-style
//!   (`x y z i ring`) binary sweeps, plus SemanticKITTI label files.
//! - [`layout`] enumerates dataset trees into ordered frame lists.
//! - [`projection`] builds the spherical range-image stack (range,
//!   incidence, reflectance, intensity, mask) and maps it back to points.
//! - [`physics`] evaluates the reference intensity `MR * cos(theta) / R`
//!   and two-way Beer-Lambert attenuation.
//! - [`weather`] is the seeded Monte-Carlo rain/snow distortion.
//! - [`metrics`] holds the adversarial, cycle, physics and total objectives
//!   as plain score functions, plus a histogram Wasserstein distance.
//! - [`pipeline`] drives whole-dataset jobs and checks derived trees.

pub mod cloud;
pub mod layout;
pub mod metrics;
pub mod physics;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod weather;

pub use cloud::{Point, PointCloud, PointFormat};
pub use layout::{DatasetKind, DatasetLayout};
pub use physics::{AttenuationParams, MaterialTable};
pub use projection::{RangeImage, SensorProfile};
pub use weather::{WeatherKind, WeatherOutcome, WeatherParams};

/// Version string recorded in manifests and reported by the CLI.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
