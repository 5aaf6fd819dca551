use std::path::Path;

use walkdir::WalkDir;

use super::PipelineError;
use crate::cloud::{read_sweep, PointFormat};
use crate::metrics::{histogram_node, physics_loss, MetricsError};
use crate::projection::{project_with, Channel, RangeImage, SensorProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub path: String,
    pub points_a: usize,
    pub points_b: usize,
    /// Mean absolute intensity difference over pixels occupied in either
    /// image; `None` when both are empty.
    pub intensity_l1: Option<f64>,
    pub histogram_w1: f64,
}

/// Realism statistics between two trees with the same relative layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub bins: usize,
    pub frames: Vec<FrameStats>,
    pub missing_in_b: Vec<String>,
    /// W1 distance between intensity histograms pooled over all frames.
    pub histogram_w1: f64,
    pub mean_intensity_l1: f64,
    pub points_a: usize,
    pub points_b: usize,
}

impl TreeStats {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("frames", self.frames.len().to_string()),
            ("missing_in_b", self.missing_in_b.len().to_string()),
            ("bins", self.bins.to_string()),
            ("histogram_w1", format!("{:.6}", self.histogram_w1)),
            ("mean_intensity_l1", format!("{:.6}", self.mean_intensity_l1)),
            ("points_a", self.points_a.to_string()),
            ("points_b", self.points_b.to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,points_a,points_b,intensity_l1,histogram_w1\n");
        for f in &self.frames {
            let l1 = f.intensity_l1.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                f.path, f.points_a, f.points_b, l1, f.histogram_w1
            ));
        }
        out
    }
}

fn accumulate(counts: &mut [usize], image: &RangeImage) {
    let mask = image.channel(Channel::Mask);
    let intensity = image.channel(Channel::Intensity);
    for p in (0..image.pixel_count()).filter(|&p| mask[p] != 0.0) {
        counts[histogram_node(intensity[p] as f64, counts.len())] += 1;
    }
}

fn w1(a: &[usize], b: &[usize]) -> f64 {
    let (ta, tb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    if ta == 0.0 || tb == 0.0 {
        return 0.0;
    }
    let step = 1.0 / (a.len() - 1) as f64;
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0);
    for k in 0..a.len() - 1 {
        ca += a[k] as f64 / ta;
        cb += b[k] as f64 / tb;
        d += (ca - cb).abs() * step;
    }
    d
}

/// Compares every `.bin` sweep under `a` with the file at the same relative
/// path under `b`. Intensities are compared after projection.
pub fn compare_trees(
    a: &Path,
    b: &Path,
    format: PointFormat,
    profile: &SensorProfile,
    bins: usize,
) -> Result<TreeStats, PipelineError> {
    if bins < 2 {
        return Err(PipelineError::Config(MetricsError::TooFewBins(bins).to_string()));
    }
    let mut files: Vec<_> = WalkDir::new(a)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "bin"))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let mut pooled_a = vec![0usize; bins];
    let mut pooled_b = vec![0usize; bins];
    let mut frames = Vec::new();
    let mut missing_in_b = Vec::new();
    for path_a in files {
        let rel = path_a.strip_prefix(a).expect("walked under a");
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        let path_b = b.join(rel);
        if !path_b.is_file() {
            missing_in_b.push(rel_str);
            continue;
        }
        let ca = read_sweep(&path_a, format)?;
        let cb = read_sweep(&path_b, format)?;
        let ia = project_with(&ca, profile, None)?;
        let ib = project_with(&cb, profile, None)?;
        let mut ha = vec![0usize; bins];
        let mut hb = vec![0usize; bins];
        accumulate(&mut ha, &ia);
        accumulate(&mut hb, &ib);
        pooled_a.iter_mut().zip(&ha).for_each(|(p, h)| *p += h);
        pooled_b.iter_mut().zip(&hb).for_each(|(p, h)| *p += h);
        frames.push(FrameStats {
            path: rel_str,
            points_a: ca.len(),
            points_b: cb.len(),
            intensity_l1: physics_loss(&ib, &ia).ok(),
            histogram_w1: w1(&ha, &hb),
        });
    }

    let l1: Vec<f64> = frames.iter().filter_map(|f| f.intensity_l1).collect();
    Ok(TreeStats {
        bins,
        histogram_w1: w1(&pooled_a, &pooled_b),
        mean_intensity_l1: if l1.is_empty() { 0.0 } else { l1.iter().sum::<f64>() / l1.len() as f64 },
        points_a: frames.iter().map(|f| f.points_a).sum(),
        points_b: frames.iter().map(|f| f.points_b).sum(),
        frames,
        missing_in_b,
    })
}
