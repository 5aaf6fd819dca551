//! Binary sweep I/O.
//!
//! Both supported formats are headerless arrays of little-endian `f32`
//! records:
//!
//! ```text
//! KITTI4     x | y | z | intensity           16 bytes / point
//! NUSCENES5  x | y | z | intensity | ring    20 bytes / point
//! ```
//!
//! Stored values are kept verbatim. Intensity normalization happens during
//! projection, so `encode(parse(bytes)) == bytes` for every valid buffer.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{len} bytes is not a multiple of the {record}-byte record size")]
    TruncatedFile { len: usize, record: usize },
    #[error("point {index} has a non-finite value")]
    NonFiniteValue { index: usize },
    #[error("point {index} lies at the sensor origin")]
    ZeroRange { index: usize },
    #[error("sweep contains no points")]
    EmptySweep,
    #[error("label file has {labels} entries for {points} points")]
    LabelCountMismatch { points: usize, labels: usize },
    #[error("point {index} does not match the {format:?} record layout")]
    FormatMismatch { index: usize, format: PointFormat },
}

pub type Result<T, E = CloudError> = std::result::Result<T, E>;

/// On-disk record layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    /// `x y z intensity`, intensity stored in `[0, 1]`.
    Kitti4,
    /// `x y z intensity ring`, intensity stored in `[0, 255]`.
    Nuscenes5,
}

impl PointFormat {
    pub const fn fields(self) -> usize {
        match self {
            PointFormat::Kitti4 => 4,
            PointFormat::Nuscenes5 => 5,
        }
    }

    pub const fn record_size(self) -> usize {
        self.fields() * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Raw stored intensity, not normalized.
    pub intensity: f32,
    /// Raw stored ring value (nuScenes keeps the channel index as a float).
    pub ring: Option<f32>,
    /// Raw SemanticKITTI label word; the class lives in the lower 16 bits.
    pub label: Option<u32>,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Point {
            x,
            y,
            z,
            intensity,
            ring: None,
            label: None,
        }
    }

    pub fn with_ring(mut self, ring: f32) -> Self {
        self.ring = Some(ring);
        self
    }

    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    pub fn ring_index(&self) -> Option<u32> {
        self.ring
            .filter(|r| r.is_finite() && *r >= 0.0)
            .map(|r| r as u32)
    }

    pub fn class_id(&self) -> Option<u16> {
        self.label.map(|l| (l & 0xFFFF) as u16)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.intensity.is_finite()
            && self.ring.is_none_or(f32::is_finite)
    }
}

/// An ordered LiDAR sweep. Point order is the file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    format: PointFormat,
    source: String,
}

impl PointCloud {
    /// Builds a validated cloud. Every point must be finite, off the origin
    /// and carry a ring value exactly when the format stores one.
    pub fn new(points: Vec<Point>, format: PointFormat, source: impl Into<String>) -> Result<Self> {
        for (index, p) in points.iter().enumerate() {
            validate_point(p, index, format)?;
        }
        Ok(PointCloud {
            points,
            format,
            source: source.into(),
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn format(&self) -> PointFormat {
        self.format
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn has_labels(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.label.is_some())
    }

    /// Same format and source, new point list.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        PointCloud::new(points, self.format, self.source.clone())
    }

    /// Attaches SemanticKITTI labels positionally.
    pub fn with_labels(mut self, labels: &[u32]) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(CloudError::LabelCountMismatch {
                points: self.points.len(),
                labels: labels.len(),
            });
        }
        for (p, &l) in self.points.iter_mut().zip(labels) {
            p.label = Some(l);
        }
        Ok(self)
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

fn validate_point(p: &Point, index: usize, format: PointFormat) -> Result<()> {
    if !p.is_finite() {
        return Err(CloudError::NonFiniteValue { index });
    }
    if p.range() <= 0.0 {
        return Err(CloudError::ZeroRange { index });
    }
    if p.ring.is_some() != (format == PointFormat::Nuscenes5) {
        return Err(CloudError::FormatMismatch { index, format });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Skip non-finite and zero-range records instead of rejecting the sweep.
    pub drop_invalid: bool,
}

/// Decodes a sweep from raw bytes.
pub fn parse_sweep(
    bytes: &[u8],
    format: PointFormat,
    source: impl Into<String>,
    options: ReadOptions,
) -> Result<PointCloud> {
    let record = format.record_size();
    if !bytes.len().is_multiple_of(record) {
        return Err(CloudError::TruncatedFile {
            len: bytes.len(),
            record,
        });
    }
    if bytes.is_empty() {
        return Err(CloudError::EmptySweep);
    }

    let mut points = Vec::with_capacity(bytes.len() / record);
    for (index, rec) in bytes.chunks_exact(record).enumerate() {
        let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
        let mut p = Point::new(f(0), f(1), f(2), f(3));
        if format == PointFormat::Nuscenes5 {
            p.ring = Some(f(4));
        }
        match validate_point(&p, index, format) {
            Ok(()) => points.push(p),
            Err(_) if options.drop_invalid => continue,
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(CloudError::EmptySweep);
    }
    Ok(PointCloud {
        points,
        format,
        source: source.into(),
    })
}

/// Serializes a cloud into its native record layout.
pub fn encode_sweep(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * cloud.format.record_size());
    for p in &cloud.points {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
        out.extend_from_slice(&p.z.to_le_bytes());
        out.extend_from_slice(&p.intensity.to_le_bytes());
        if cloud.format == PointFormat::Nuscenes5 {
            out.extend_from_slice(&p.ring.unwrap_or(0.0).to_le_bytes());
        }
    }
    out
}

pub fn read_sweep(path: impl AsRef<Path>, format: PointFormat) -> Result<PointCloud> {
    read_sweep_with(path, format, ReadOptions::default())
}

pub fn read_sweep_with(
    path: impl AsRef<Path>,
    format: PointFormat,
    options: ReadOptions,
) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sweep(&bytes, format, path.to_string_lossy(), options)
}

pub fn write_sweep(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sweep(cloud)).map_err(|source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a SemanticKITTI `.label` file (one little-endian `u32` per point).
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() % 4 != 0 {
        return Err(CloudError::TruncatedFile {
            len: bytes.len(),
            record: 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
