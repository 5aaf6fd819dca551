use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use walkdir::WalkDir;

use super::manifest::{FrameResult, Manifest, MANIFEST_FILE};
use super::{sha256_hex, PipelineError, Variant};
use crate::cloud::{parse_sweep, read_sweep, ReadOptions};
use crate::layout::DatasetLayout;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountDelta {
    pub path: String,
    pub expected: usize,
    pub actual: usize,
}

/// Differences between a source dataset and a derived tree. Paths are
/// relative to the derived root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrespondenceReport {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub format_violations: Vec<(String, String)>,
    pub count_deltas: Vec<CountDelta>,
    pub checksum_mismatches: Vec<String>,
}

impl CorrespondenceReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
            && self.extra.is_empty()
            && self.format_violations.is_empty()
            && self.count_deltas.is_empty()
            && self.checksum_mismatches.is_empty()
    }

    fn merge(&mut self, other: CorrespondenceReport, prefix: &str) {
        let p = |s: String| format!("{prefix}{s}");
        self.missing.extend(other.missing.into_iter().map(p));
        self.extra.extend(other.extra.into_iter().map(p));
        self.format_violations
            .extend(other.format_violations.into_iter().map(|(f, e)| (p(f), e)));
        self.count_deltas.extend(other.count_deltas.into_iter().map(|d| CountDelta {
            path: p(d.path),
            ..d
        }));
        self.checksum_mismatches
            .extend(other.checksum_mismatches.into_iter().map(p));
    }
}

impl fmt::Display for CorrespondenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.missing {
            writeln!(f, "missing {m}")?;
        }
        for e in &self.extra {
            writeln!(f, "extra {e}")?;
        }
        for (path, err) in &self.format_violations {
            writeln!(f, "format {path}: {err}")?;
        }
        for d in &self.count_deltas {
            writeln!(f, "count {}: expected {} got {}", d.path, d.expected, d.actual)?;
        }
        for c in &self.checksum_mismatches {
            writeln!(f, "checksum {c}")?;
        }
        Ok(())
    }
}

/// Checks a derived tree against its source.
///
/// With a manifest at `derived_root`, every variant it lists is checked
/// under `<derived_root>/<variant>`, using the manifest for expected point
/// counts and checksums. Otherwise `derived_root` is treated as a single
/// variant tree.
pub fn validate_correspondence(source: &DatasetLayout, derived_root: &Path) -> Result<CorrespondenceReport, PipelineError> {
    if !derived_root.is_dir() {
        return Err(PipelineError::Io {
            path: derived_root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "derived root is not a directory"),
        });
    }
    if !derived_root.join(MANIFEST_FILE).is_file() {
        return validate_tree(source, derived_root, None);
    }

    let manifest = Manifest::read(derived_root)?;
    let mut report = CorrespondenceReport::default();
    for &variant in &manifest.header.variants {
        let tree = derived_root.join(variant.dir_name());
        let sub = if tree.is_dir() {
            validate_tree(source, &tree, Some(&manifest))?
        } else {
            CorrespondenceReport {
                missing: source.frame_ids.clone(),
                ..Default::default()
            }
        };
        report.merge(sub, &format!("{}/", variant.dir_name()));
    }

    let listed: BTreeSet<&str> = manifest.header.variants.iter().map(|v| v.dir_name()).collect();
    let entries = std::fs::read_dir(derived_root).map_err(|source| PipelineError::Io {
        path: derived_root.to_path_buf(),
        source,
    })?;
    let mut stray = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Io {
            path: derived_root.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE && !listed.contains(name.as_str()) {
            stray.extend(relative_files(&entry.path(), derived_root));
        }
    }
    stray.sort();
    report.extra.extend(stray);
    Ok(report)
}

/// Checks one variant tree. The variant is taken from the directory name;
/// geometry-preserving variants must match source point counts exactly.
pub fn validate_tree(
    source: &DatasetLayout,
    tree: &Path,
    manifest: Option<&Manifest>,
) -> Result<CorrespondenceReport, PipelineError> {
    let variant = tree
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(Variant::from_dir_name);
    let format = source.format();

    let per_frame: Vec<CorrespondenceReport> = source
        .frame_ids
        .par_iter()
        .map(|frame| {
            let mut r = CorrespondenceReport::default();
            let path = tree.join(frame);
            let bytes = match std::fs::read(&path) {
                Ok(b) => b,
                Err(_) => {
                    r.missing.push(frame.clone());
                    return r;
                }
            };
            let cloud = match parse_sweep(&bytes, format, frame, ReadOptions::default()) {
                Ok(c) => c,
                Err(e) => {
                    r.format_violations.push((frame.clone(), e.to_string()));
                    return r;
                }
            };
            let record = variant.and_then(|v| manifest.and_then(|m| m.record(v, frame)));
            let expected = match record.map(|rec| &rec.result) {
                Some(FrameResult::Ok {
                    output_points, checksum, ..
                }) => {
                    if *checksum != sha256_hex(&bytes) {
                        r.checksum_mismatches.push(frame.clone());
                    }
                    Some(*output_points)
                }
                _ if variant.is_some_and(Variant::preserves_geometry) => {
                    read_sweep(source.frame_path(frame), format).ok().map(|c| c.len())
                }
                _ => None,
            };
            if let Some(expected) = expected.filter(|&e| e != cloud.len()) {
                r.count_deltas.push(CountDelta {
                    path: frame.clone(),
                    expected,
                    actual: cloud.len(),
                });
            }
            r
        })
        .collect();

    let mut report = CorrespondenceReport::default();
    for r in per_frame {
        report.merge(r, "");
    }
    let known: BTreeSet<&str> = source.frame_ids.iter().map(String::as_str).collect();
    report.extra = relative_files(tree, tree)
        .into_iter()
        .filter(|f| !known.contains(f.as_str()))
        .collect();
    Ok(report)
}

/// Regular files under `dir`, as sorted `/`-separated paths relative to `base`.
fn relative_files(dir: &Path, base: &Path) -> Vec<String> {
    let mut files: Vec<String> = WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(base).ok()?;
            Some(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
            )
        })
        .collect();
    files.sort();
    files
}
