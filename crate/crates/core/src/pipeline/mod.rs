//! Whole-dataset jobs: enumerate, transform every frame per variant, write a
//! mirrored tree plus a manifest, and check derived trees afterwards.

mod config;
mod manifest;
mod stats;
mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{JobConfig, Variant, WeatherBlock, WeatherSection, DEFAULT_RAIN_RATE, DEFAULT_SNOW_RATE};
pub use manifest::{FrameRecord, FrameResult, IntensityMode, Manifest, ManifestHeader, MANIFEST_FILE};
pub use stats::{compare_trees, FrameStats, TreeStats};
pub use validate::{validate_correspondence, validate_tree, CorrespondenceReport, CountDelta};

use crate::cloud::{encode_sweep, read_labels, read_sweep_with, CloudError, PointCloud, ReadOptions};
use crate::layout::{enumerate_frames_with, DatasetLayout, LayoutError};
use crate::physics::{reference_image, AttenuationParams, MaterialTable, PhysicsError};
use crate::projection::{
    compute_incidence, project_with, read_debug_dump, unproject_with, Channel, ProjectionError, SensorProfile,
    SharedPixels, UnprojectPolicy,
};
use crate::rng::frame_seed;
use crate::weather::{distort, WeatherError, WeatherOutcome, WeatherParams};

/// Extension of externally generated range-image dumps.
pub const DUMP_EXTENSION: &str = "rimg";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid job config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
}

/// Projects a sweep, adds incidence and applies one weather draw.
pub fn augment_frame(
    cloud: &PointCloud,
    profile: &SensorProfile,
    params: &WeatherParams,
) -> Result<(PointCloud, WeatherOutcome), PipelineError> {
    let image = compute_incidence(cloud, &project_with(cloud, profile, None)?)?;
    Ok(distort(cloud, &image, params)?)
}

struct Job<'a> {
    config: &'a JobConfig,
    layout: DatasetLayout,
    profile: SensorProfile,
    materials: Option<MaterialTable>,
}

struct FrameOutput {
    cloud: PointCloud,
    mode: IntensityMode,
    outcome: Option<WeatherOutcome>,
}

impl Job<'_> {
    fn read(&self, frame: &str) -> Result<PointCloud, PipelineError> {
        let opts = ReadOptions {
            drop_invalid: self.config.drop_invalid,
        };
        let cloud = read_sweep_with(self.layout.frame_path(frame), self.layout.format(), opts)?;
        match self.layout.label_path(frame) {
            // Dropping records would misalign labels, so only attach them
            // when counts still agree.
            Some(path) => {
                let labels = read_labels(&path)?;
                if labels.len() == cloud.len() || !self.config.drop_invalid {
                    Ok(cloud.with_labels(&labels)?)
                } else {
                    warn!("{frame}: labels skipped after dropping invalid points");
                    Ok(cloud)
                }
            }
            None => Ok(cloud),
        }
    }

    fn transform(&self, variant: Variant, frame: &str, cloud: &PointCloud, seed: u64) -> Result<FrameOutput, PipelineError> {
        let image = project_with(cloud, &self.profile, self.materials.as_ref())?;
        let image = compute_incidence(cloud, &image)?;
        match variant.weather() {
            Some(kind) => {
                let params = self.config.weather.block(kind).resolve(kind, seed);
                let (out, outcome) = distort(cloud, &image, &params)?;
                Ok(FrameOutput {
                    cloud: out,
                    mode: IntensityMode::Weather,
                    outcome: Some(outcome),
                })
            }
            None => {
                let table = self.materials.clone().unwrap_or_default();
                let (adapted, mode) = match &self.config.intensity_images {
                    Some(dir) => {
                        let path = dump_path(dir, frame);
                        let file = fs::File::open(&path).map_err(|source| PipelineError::Io { path, source })?;
                        let dump = read_debug_dump(std::io::BufReader::new(file))?;
                        if (dump.height, dump.width) != (image.height(), image.width())
                            || dump.planes.len() <= Channel::Intensity as usize
                        {
                            return Err(ProjectionError::BadDump(format!(
                                "{}x{} dump with {} planes does not fit a {}x{} image",
                                dump.height,
                                dump.width,
                                dump.planes.len(),
                                image.height(),
                                image.width()
                            ))
                            .into());
                        }
                        (image.with_intensity_plane(dump.plane(Channel::Intensity))?, IntensityMode::External)
                    }
                    None => (
                        reference_image(&image, &table, &AttenuationParams::CLEAR)?,
                        IntensityMode::PhysicsReference,
                    ),
                };
                let policy = UnprojectPolicy {
                    keep_unprojected: true,
                    shared_pixels: SharedPixels::TakeIntensity,
                };
                Ok(FrameOutput {
                    cloud: unproject_with(&adapted, cloud, policy)?,
                    mode,
                    outcome: None,
                })
            }
        }
    }

    fn run_frame(&self, variant: Variant, frame: &str) -> FrameRecord {
        let seed = frame_seed(self.config.seed, frame);
        let result = self.try_frame(variant, frame, seed).unwrap_or_else(|e| {
            warn!("{}/{frame}: {e}", variant.dir_name());
            FrameResult::Error { message: e.to_string() }
        });
        FrameRecord {
            variant,
            path: frame.to_owned(),
            seed,
            result,
        }
    }

    fn try_frame(&self, variant: Variant, frame: &str, seed: u64) -> Result<FrameResult, PipelineError> {
        let cloud = self.read(frame)?;
        let out = self.transform(variant, frame, &cloud, seed)?;
        let bytes = encode_sweep(&out.cloud);
        let path = self.config.output_root.join(variant.dir_name()).join(frame);
        write_file(&path, &bytes)?;
        Ok(FrameResult::Ok {
            input_points: cloud.len(),
            output_points: out.cloud.len(),
            mode: out.mode,
            summary: out.outcome.as_ref().map(WeatherOutcome::summary),
            alpha_used: out.outcome.as_ref().map(WeatherOutcome::alpha_used),
            checksum: sha256_hex(&bytes),
        })
    }
}

/// Path of the external range-image dump for a frame.
pub fn dump_path(dir: &Path, frame: &str) -> PathBuf {
    dir.join(format!("{frame}.{DUMP_EXTENSION}"))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Runs a job to completion. Frame-level failures are recorded in the
/// returned manifest and do not stop the job; config, layout and output
/// I/O problems are fatal.
pub fn run_job(config: &JobConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let layout = enumerate_frames_with(&config.source_root, config.dataset, &config.layout)?;
    let materials = config.material_table.as_ref().map(MaterialTable::load).transpose()?;
    let job = Job {
        config,
        layout,
        profile: config.sensor_profile(),
        materials,
    };
    let variants = config.variant_set();
    info!(
        "{} frames x {} variants with {} workers",
        job.layout.len(),
        variants.len(),
        config.parallelism
    );

    fs::create_dir_all(&config.output_root).map_err(|source| PipelineError::Io {
        path: config.output_root.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;

    let tasks: Vec<(Variant, &str)> = variants
        .iter()
        .flat_map(|&v| job.layout.frame_ids.iter().map(move |f| (v, f.as_str())))
        .collect();
    let records: Vec<FrameRecord> = pool.install(|| tasks.par_iter().map(|&(v, f)| job.run_frame(v, f)).collect());

    let manifest = Manifest {
        header: ManifestHeader {
            tool: "realitygen".into(),
            tool_version: crate::TOOL_VERSION.into(),
            config_digest: config.digest(),
            dataset: config.dataset,
            variants,
        },
        records,
    };
    manifest.write(&config.output_root)?;
    Ok(manifest)
}
