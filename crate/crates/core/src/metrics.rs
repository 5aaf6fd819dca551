//! Training objectives as plain score functions, plus realism metrics.
//!
//! Image losses run over pixels that hold a return in at least one of the
//! two images (an empty pixel contributes intensity 0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{Channel, RangeImage};

/// Clamp applied to discriminator scores before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("masks differ at {0} pixels")]
    MaskMismatch(usize),
    #[error("no occupied pixels to compare")]
    EmptyMask,
    #[error("score grid is empty")]
    EmptyScores,
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("loss weights must be finite and non-negative")]
    InvalidWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    pub lambda_phy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cycle: 10.0,
            lambda_phy: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_cycle: f64, lambda_phy: f64) -> Result<Self, MetricsError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(lambda_cycle) && ok(lambda_phy) {
            Ok(LossWeights {
                lambda_cycle,
                lambda_phy,
            })
        } else {
            Err(MetricsError::InvalidWeights)
        }
    }
}

/// `mean(log D(real)) + mean(log(1 - D(fake)))` with scores clamped to
/// `[eps, 1 - eps]`. The two grids may have different sizes.
pub fn adversarial_score(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64, MetricsError> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let clamp = |s: f64| s.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let real = real_scores.iter().map(|&s| clamp(s).ln()).sum::<f64>() / real_scores.len() as f64;
    let fake = fake_scores.iter().map(|&s| (1.0 - clamp(s)).ln()).sum::<f64>() / fake_scores.len() as f64;
    Ok(real + fake)
}

fn check_shape(a: &RangeImage, b: &RangeImage) -> Result<(), MetricsError> {
    let (sa, sb) = ((a.height(), a.width()), (b.height(), b.width()));
    if sa == sb {
        Ok(())
    } else {
        Err(MetricsError::ShapeMismatch(sa, sb))
    }
}

fn masked_l1(a: &RangeImage, b: &RangeImage) -> Result<f64, MetricsError> {
    let (ia, ib) = (a.channel(Channel::Intensity), b.channel(Channel::Intensity));
    let (ma, mb) = (a.channel(Channel::Mask), b.channel(Channel::Mask));
    let (sum, count) = (0..a.pixel_count())
        .filter(|&p| ma[p] != 0.0 || mb[p] != 0.0)
        .fold((0.0, 0usize), |(s, n), p| (s + (ia[p] as f64 - ib[p] as f64).abs(), n + 1));
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Mean absolute intensity error between an image and its round trip
/// through both generators. Masks must agree.
pub fn cycle_loss(original: &RangeImage, reconstructed: &RangeImage) -> Result<f64, MetricsError> {
    check_shape(original, reconstructed)?;
    let (ma, mb) = (original.channel(Channel::Mask), reconstructed.channel(Channel::Mask));
    let differing = ma.iter().zip(mb).filter(|(a, b)| a != b).count();
    if differing > 0 {
        return Err(MetricsError::MaskMismatch(differing));
    }
    masked_l1(original, reconstructed)
}

/// Mean absolute deviation of predicted intensity from the physics
/// reference.
pub fn physics_loss(predicted: &RangeImage, reference: &RangeImage) -> Result<f64, MetricsError> {
    check_shape(predicted, reference)?;
    masked_l1(predicted, reference)
}

pub fn total_objective(adv: f64, cycle: f64, phy: f64, weights: &LossWeights) -> f64 {
    adv + weights.lambda_cycle * cycle + weights.lambda_phy * phy
}

/// Probability mass of occupied-pixel intensities on `bins` equally spaced
/// nodes `0, 1/(bins-1), ..., 1`; each value goes to its nearest node.
pub fn intensity_histogram(image: &RangeImage, bins: usize) -> Result<Vec<f64>, MetricsError> {
    if bins < 2 {
        return Err(MetricsError::TooFewBins(bins));
    }
    let mut counts = vec![0usize; bins];
    let mask = image.channel(Channel::Mask);
    let intensity = image.channel(Channel::Intensity);
    for p in (0..image.pixel_count()).filter(|&p| mask[p] != 0.0) {
        counts[histogram_node(intensity[p] as f64, bins)] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

pub(crate) fn histogram_node(value: f64, bins: usize) -> usize {
    ((value.clamp(0.0, 1.0) * (bins - 1) as f64).round() as usize).min(bins - 1)
}

/// 1-Wasserstein distance between the intensity histograms of two images:
/// `sum_k |CDF_a(k) - CDF_b(k)| / (bins - 1)`.
pub fn intensity_histogram_distance(a: &RangeImage, b: &RangeImage, bins: usize) -> Result<f64, MetricsError> {
    let ha = intensity_histogram(a, bins)?;
    let hb = intensity_histogram(b, bins)?;
    let step = 1.0 / (bins - 1) as f64;
    let mut cdf_a = 0.0;
    let mut cdf_b = 0.0;
    let mut distance = 0.0;
    for k in 0..bins - 1 {
        cdf_a += ha[k];
        cdf_b += hb[k];
        distance += (cdf_a - cdf_b).abs() * step;
    }
    Ok(distance)
}
