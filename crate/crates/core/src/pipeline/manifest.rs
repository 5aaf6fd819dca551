//! Line-delimited JSON manifest: one header line, then one line per
//! (variant, frame), sorted by variant then relative path.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Variant;
use super::PipelineError;
use crate::layout::DatasetKind;
use crate::weather::VerdictCounts;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub tool: String,
    pub tool_version: String,
    pub config_digest: String,
    pub dataset: DatasetKind,
    pub variants: Vec<Variant>,
}

/// How the output intensities were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensityMode {
    Weather,
    PhysicsReference,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub variant: Variant,
    pub path: String,
    pub seed: u64,
    #[serde(flatten)]
    pub result: FrameResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FrameResult {
    Ok {
        input_points: usize,
        output_points: usize,
        mode: IntensityMode,
        #[serde(skip_serializing_if = "Option::is_none")]
        summary: Option<VerdictCounts>,
        #[serde(skip_serializing_if = "Option::is_none")]
        alpha_used: Option<f64>,
        checksum: String,
    },
    Error {
        message: String,
    },
}

impl FrameRecord {
    pub fn is_ok(&self) -> bool {
        matches!(self.result, FrameResult::Ok { .. })
    }

    /// `variant/relative path` under the output root.
    pub fn output_path(&self) -> String {
        format!("{}/{}", self.variant.dir_name(), self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Header(ManifestHeader),
    Frame(FrameRecord),
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn record(&self, variant: Variant, path: &str) -> Option<&FrameRecord> {
        self.records.iter().find(|r| r.variant == variant && r.path == path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&Line::Header(self.header.clone())).expect("header serializes"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Frame(r.clone())).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest, PipelineError> {
        let mut header = None;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: Line = serde_json::from_str(line)
                .map_err(|e| PipelineError::Manifest(format!("line {}: {e}", n + 1)))?;
            match parsed {
                Line::Header(h) if header.is_none() && records.is_empty() => header = Some(h),
                Line::Header(_) => return Err(PipelineError::Manifest(format!("line {}: unexpected header", n + 1))),
                Line::Frame(r) => records.push(r),
            }
        }
        let header = header.ok_or_else(|| PipelineError::Manifest("missing header".into()))?;
        Ok(Manifest { header, records })
    }

    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        let mut f = fs::File::create(&path).map_err(io)?;
        f.write_all(self.to_text().as_bytes()).map_err(io)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Manifest, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io { path, source })?;
        Manifest::parse(&text)
    }
}
