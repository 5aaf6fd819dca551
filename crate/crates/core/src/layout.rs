//! Dataset tree enumeration.
//!
//! Frame identifiers are `/`-separated paths relative to the dataset root,
//! e.g. `sequences/00/velodyne/000000.bin`. Derived trees reuse them
//! verbatim under a new root.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointFormat;

/// Sequences that make up the released KITTI-layout splits.
pub const KITTI_SEQUENCES: std::ops::RangeInclusive<u32> = 0..=10;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("dataset root {0} does not exist")]
    RootMissing(PathBuf),
    #[error("expected sequence directory {0} is missing")]
    MissingSequence(String),
    #[error("no frames found under {0}")]
    EmptyDataset(PathBuf),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad nuScenes metadata in {path}: {message}")]
    Metadata { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    SemanticKitti,
    Nuscenes,
    Voxelscape,
}

impl DatasetKind {
    pub fn format(self) -> PointFormat {
        match self {
            DatasetKind::SemanticKitti | DatasetKind::Voxelscape => PointFormat::Kitti4,
            DatasetKind::Nuscenes => PointFormat::Nuscenes5,
        }
    }

    fn uses_sequences(self) -> bool {
        !matches!(self, DatasetKind::Nuscenes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutOptions {
    /// Sweep directory for nuScenes, relative to the root.
    pub nuscenes_keyframe_dir: PathBuf,
    /// Directory holding `sample_data.json` and `lidarseg.json`. When set,
    /// only sweeps with lidarseg annotations are enumerated.
    pub lidarseg_meta: Option<PathBuf>,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        LayoutOptions {
            nuscenes_keyframe_dir: PathBuf::from("samples/LIDAR_TOP"),
            lidarseg_meta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub kind: DatasetKind,
    /// Relative paths, sorted lexicographically, unique.
    pub frame_ids: Vec<String>,
    pub sequence_ids: Option<Vec<String>>,
    /// Per-sequence label directory name (`labels` for SemanticKITTI).
    pub label_dir: Option<PathBuf>,
}

impl DatasetLayout {
    pub fn format(&self) -> PointFormat {
        self.kind.format()
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn frame_path(&self, frame_id: &str) -> PathBuf {
        self.root.join(frame_id)
    }

    /// Label file for a frame, if the dataset ships one and it exists.
    pub fn label_path(&self, frame_id: &str) -> Option<PathBuf> {
        let label_dir = self.label_dir.as_ref()?;
        let rel = Path::new(frame_id);
        let seq_dir = rel.parent()?.parent()?;
        let stem = rel.file_stem()?;
        let path = self
            .root
            .join(seq_dir)
            .join(label_dir)
            .join(stem)
            .with_extension("label");
        path.is_file().then_some(path)
    }
}

pub fn enumerate_frames(root: impl AsRef<Path>, kind: DatasetKind) -> Result<DatasetLayout, LayoutError> {
    enumerate_frames_with(root, kind, &LayoutOptions::default())
}

pub fn enumerate_frames_with(
    root: impl AsRef<Path>,
    kind: DatasetKind,
    options: &LayoutOptions,
) -> Result<DatasetLayout, LayoutError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(LayoutError::RootMissing(root.to_path_buf()));
    }
    let layout = if kind.uses_sequences() {
        enumerate_sequences(root, kind)?
    } else {
        enumerate_nuscenes(root, options)?
    };
    if layout.frame_ids.is_empty() {
        return Err(LayoutError::EmptyDataset(root.to_path_buf()));
    }
    Ok(layout)
}

fn enumerate_sequences(root: &Path, kind: DatasetKind) -> Result<DatasetLayout, LayoutError> {
    let seq_root = root.join("sequences");
    if !seq_root.is_dir() {
        if is_empty_dir(root)? {
            return Err(LayoutError::EmptyDataset(root.to_path_buf()));
        }
        return Err(LayoutError::MissingSequence("sequences".into()));
    }

    let mut frame_ids = Vec::new();
    let mut sequence_ids = Vec::new();
    let mut has_labels = false;
    for seq in KITTI_SEQUENCES {
        let name = format!("{seq:02}");
        let seq_dir = seq_root.join(&name);
        if !seq_dir.is_dir() {
            log::warn!("sequence {name} absent under {}", seq_root.display());
            continue;
        }
        let velodyne = seq_dir.join("velodyne");
        if !velodyne.is_dir() {
            return Err(LayoutError::MissingSequence(format!("sequences/{name}/velodyne")));
        }
        has_labels |= seq_dir.join("labels").is_dir();
        for file in list_files(&velodyne, ".bin")? {
            frame_ids.push(format!("sequences/{name}/velodyne/{file}"));
        }
        sequence_ids.push(name);
    }
    frame_ids.sort();

    Ok(DatasetLayout {
        root: root.to_path_buf(),
        kind,
        frame_ids,
        sequence_ids: Some(sequence_ids),
        label_dir: has_labels.then(|| PathBuf::from("labels")),
    })
}

fn enumerate_nuscenes(root: &Path, options: &LayoutOptions) -> Result<DatasetLayout, LayoutError> {
    let rel_dir = &options.nuscenes_keyframe_dir;
    let dir = root.join(rel_dir);
    if !dir.is_dir() {
        return Err(LayoutError::EmptyDataset(dir));
    }
    let prefix = rel_dir
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/");
    let mut frame_ids: Vec<String> = list_files(&dir, ".bin")?
        .into_iter()
        .map(|f| if prefix.is_empty() { f } else { format!("{prefix}/{f}") })
        .collect();

    if let Some(meta) = &options.lidarseg_meta {
        let annotated = lidarseg_filenames(&root.join(meta))?;
        frame_ids.retain(|f| annotated.contains(f));
    }
    frame_ids.sort();

    Ok(DatasetLayout {
        root: root.to_path_buf(),
        kind: DatasetKind::Nuscenes,
        frame_ids,
        sequence_ids: None,
        label_dir: None,
    })
}

#[derive(Deserialize)]
struct SampleData {
    token: String,
    filename: String,
}

#[derive(Deserialize)]
struct LidarsegRecord {
    sample_data_token: String,
}

/// Relative sweep filenames that carry a lidarseg annotation.
fn lidarseg_filenames(meta: &Path) -> Result<HashSet<String>, LayoutError> {
    fn load<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<Vec<T>, LayoutError> {
        let text = fs::read_to_string(&path).map_err(|source| LayoutError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| LayoutError::Metadata {
            path,
            message: e.to_string(),
        })
    }
    let tokens: HashSet<String> = load::<LidarsegRecord>(meta.join("lidarseg.json"))?
        .into_iter()
        .map(|r| r.sample_data_token)
        .collect();
    Ok(load::<SampleData>(meta.join("sample_data.json"))?
        .into_iter()
        .filter(|s| tokens.contains(&s.token))
        .map(|s| s.filename)
        .collect())
}

fn list_files(dir: &Path, suffix: &str) -> Result<Vec<String>, LayoutError> {
    let entries = fs::read_dir(dir).map_err(|source| LayoutError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| LayoutError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if !entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
            continue;
        }
        if let Some(name) = entry.file_name().to_str() {
            if name.ends_with(suffix) {
                names.push(name.to_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn is_empty_dir(dir: &Path) -> Result<bool, LayoutError> {
    Ok(fs::read_dir(dir)
        .map_err(|source| LayoutError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .next()
        .is_none())
}
