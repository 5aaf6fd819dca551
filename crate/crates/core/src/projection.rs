//! Spherical range-image projection.
//!
//! Pixel coordinates for a point at elevation `e` and azimuth
//! `a = atan2(y, x)`:
//!
//! ```text
//! row = floor((1 - (e - fov_down) / (fov_up - fov_down)) * height)
//! col = floor(0.5 * (1 - a / pi) * width)
//! ```
//!
//! both clamped into the grid. Azimuth is measured counterclockwise from
//! the +x (forward) axis, so column `width / 2` looks straight ahead and
//! columns grow towards the sensor's right. Points with elevation outside
//! `[fov_down, fov_up]` are not projected.
//!
//! Every channel is stored as `f32` in `[0, 1]`; `mask` is 0 or 1 and an
//! unoccupied pixel is zero in every channel.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::physics::MaterialTable;
use crate::weather::WeatherKind;

/// Lower clamp on `cos(theta)`.
pub const INCIDENCE_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("pixel refers to point {index} but the cloud has {len} points")]
    IndexMismatch { index: usize, len: usize },
    #[error("invalid sensor profile: {0}")]
    InvalidProfile(String),
    #[error("unknown sensor profile `{0}`")]
    UnknownProfile(String),
    #[error("malformed range-image dump: {0}")]
    BadDump(String),
    #[error("plane has {got} values, expected {expected}")]
    PlaneSize { got: usize, expected: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub channels: u32,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    pub width: u32,
    pub max_range: f64,
    /// Divisor mapping stored intensity to `[0, 1]`.
    pub intensity_scale: f64,
}

impl SensorProfile {
    /// HDL-64E geometry (SemanticKITTI, Voxelscape).
    pub fn hdl64() -> Self {
        SensorProfile {
            channels: 64,
            fov_up_deg: 2.0,
            fov_down_deg: -24.8,
            width: 1048,
            max_range: 120.0,
            intensity_scale: 1.0,
        }
    }

    /// HDL-32E geometry as mounted on the nuScenes vehicle.
    pub fn nuscenes32() -> Self {
        SensorProfile {
            channels: 32,
            fov_up_deg: 10.67,
            fov_down_deg: -30.67,
            width: 1048,
            max_range: 100.0,
            intensity_scale: 255.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, ProjectionError> {
        match name.to_ascii_lowercase().as_str() {
            "hdl64" | "kitti" | "semantickitti" | "voxelscape" => Ok(Self::hdl64()),
            "nuscenes32" | "nuscenes" | "hdl32" => Ok(Self::nuscenes32()),
            other => Err(ProjectionError::UnknownProfile(other.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        let bad = |m: &str| Err(ProjectionError::InvalidProfile(m.to_owned()));
        if self.channels < 1 || self.width < 1 {
            return bad("channels and width must be at least 1");
        }
        if !self.fov_up_deg.is_finite() || !self.fov_down_deg.is_finite() || self.fov_up_deg <= self.fov_down_deg {
            return bad("fov_up must exceed fov_down");
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return bad("max_range must be positive");
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return bad("intensity_scale must be positive");
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.channels as usize
    }

    /// Pixel `(row, col)` hit by the ray through `(x, y, z)`.
    pub fn pixel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize)> {
        let (h, w) = (self.height(), self.width as usize);
        let fov_up = self.fov_up_deg.to_radians();
        let fov_down = self.fov_down_deg.to_radians();
        let elevation = z.atan2(x.hypot(y));
        if !(fov_down..=fov_up).contains(&elevation) {
            return None;
        }
        let azimuth = y.atan2(x);
        let v = (1.0 - (elevation - fov_down) / (fov_up - fov_down)) * h as f64;
        let u = 0.5 * (1.0 - azimuth / PI) * w as f64;
        let row = (v.floor().max(0.0) as usize).min(h - 1);
        let col = (u.floor().max(0.0) as usize).min(w - 1);
        Some((row, col))
    }

    pub fn pixel_of_point(&self, p: &Point) -> Option<(usize, usize)> {
        self.pixel_of(p.x as f64, p.y as f64, p.z as f64)
    }

    /// Unit ray through the centre of a pixel.
    pub fn pixel_ray(&self, row: usize, col: usize) -> [f64; 3] {
        let (h, w) = (self.height() as f64, self.width as f64);
        let fov_up = self.fov_up_deg.to_radians();
        let fov_down = self.fov_down_deg.to_radians();
        let elevation = fov_down + (1.0 - (row as f64 + 0.5) / h) * (fov_up - fov_down);
        let azimuth = PI * (1.0 - 2.0 * (col as f64 + 0.5) / w);
        [
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        ]
    }

    pub fn normalize_intensity(&self, raw: f32) -> f32 {
        ((raw as f64 / self.intensity_scale) as f32).clamp(0.0, 1.0)
    }

    pub fn normalize_range(&self, range: f64) -> f32 {
        (range.min(self.max_range) / self.max_range) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Range = 0,
    Incidence = 1,
    Reflectance = 2,
    Intensity = 3,
    Mask = 4,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Range,
        Channel::Incidence,
        Channel::Reflectance,
        Channel::Intensity,
        Channel::Mask,
    ];
}

const CHANNELS: usize = 5;

/// Multi-channel spherical image plus the pixel-to-point back-reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    profile: SensorProfile,
    /// Channel-major planes, each `height * width`, row-major.
    data: Vec<f32>,
    pixel_to_point: Vec<Option<u32>>,
    classes: Option<Vec<Option<u16>>>,
    incidence_ready: bool,
    unprojected: usize,
    weather: Option<WeatherKind>,
}

impl RangeImage {
    pub fn empty(profile: SensorProfile) -> Self {
        let n = profile.height() * profile.width as usize;
        RangeImage {
            profile,
            data: vec![0.0; n * CHANNELS],
            pixel_to_point: vec![None; n],
            classes: None,
            incidence_ready: false,
            unprojected: 0,
            weather: None,
        }
    }

    pub fn profile(&self) -> &SensorProfile {
        &self.profile
    }

    pub fn height(&self) -> usize {
        self.profile.height()
    }

    pub fn width(&self) -> usize {
        self.profile.width as usize
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_to_point.len()
    }

    pub fn channel(&self, c: Channel) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c as usize * n..(c as usize + 1) * n]
    }

    pub(crate) fn channel_mut(&mut self, c: Channel) -> &mut [f32] {
        let n = self.pixel_count();
        &mut self.data[c as usize * n..(c as usize + 1) * n]
    }

    pub fn get(&self, c: Channel, row: usize, col: usize) -> f32 {
        self.channel(c)[row * self.width() + col]
    }

    pub fn point_at(&self, row: usize, col: usize) -> Option<usize> {
        self.pixel_to_point[row * self.width() + col].map(|i| i as usize)
    }

    pub fn point_at_pixel(&self, pixel: usize) -> Option<usize> {
        self.pixel_to_point[pixel].map(|i| i as usize)
    }

    pub fn is_occupied(&self, pixel: usize) -> bool {
        self.pixel_to_point[pixel].is_some()
    }

    pub fn occupied_count(&self) -> usize {
        self.pixel_to_point.iter().filter(|p| p.is_some()).count()
    }

    /// Points that fell outside the vertical field of view.
    pub fn unprojected(&self) -> usize {
        self.unprojected
    }

    pub fn has_incidence(&self) -> bool {
        self.incidence_ready
    }

    pub fn class_at(&self, pixel: usize) -> Option<u16> {
        self.classes.as_ref().and_then(|c| c[pixel])
    }

    pub fn weather(&self) -> Option<WeatherKind> {
        self.weather
    }

    /// Attaches constant one-hot style planes (`rain`, `snow`).
    pub fn with_weather_onehot(mut self, kind: WeatherKind) -> Self {
        self.weather = Some(kind);
        self
    }

    /// One-hot planes in `[rain, snow]` order, broadcast over the grid.
    pub fn onehot_planes(&self) -> Vec<Vec<f32>> {
        let Some(kind) = self.weather else {
            return Vec::new();
        };
        let n = self.pixel_count();
        [WeatherKind::Rain, WeatherKind::Snow]
            .iter()
            .map(|k| vec![if *k == kind { 1.0 } else { 0.0 }; n])
            .collect()
    }

    /// Returns a copy with `f(pixel, value)` applied to the intensity of
    /// every occupied pixel, clamped to `[0, 1]`.
    pub fn map_intensity(&self, mut f: impl FnMut(usize, f32) -> f32) -> RangeImage {
        let mut out = self.clone();
        for pixel in 0..self.pixel_count() {
            if self.is_occupied(pixel) {
                let v = self.channel(Channel::Intensity)[pixel];
                out.channel_mut(Channel::Intensity)[pixel] = f(pixel, v).clamp(0.0, 1.0);
            }
        }
        out
    }

    /// Splices an externally produced intensity plane (row-major,
    /// `height * width`) into the occupied pixels.
    pub fn with_intensity_plane(&self, plane: &[f32]) -> Result<RangeImage, ProjectionError> {
        if plane.len() != self.pixel_count() {
            return Err(ProjectionError::PlaneSize {
                got: plane.len(),
                expected: self.pixel_count(),
            });
        }
        Ok(self.map_intensity(|pixel, _| plane[pixel]))
    }

    /// Empties a pixel in every channel.
    pub fn clear_pixel(&mut self, pixel: usize) {
        for c in Channel::ALL {
            self.channel_mut(c)[pixel] = 0.0;
        }
        self.pixel_to_point[pixel] = None;
        if let Some(classes) = &mut self.classes {
            classes[pixel] = None;
        }
    }

    /// Stores a new range for an occupied pixel.
    pub(crate) fn set_range(&mut self, pixel: usize, range: f64) {
        let v = self.profile.normalize_range(range);
        self.channel_mut(Channel::Range)[pixel] = v;
    }

    /// Channel-major copy of the five planes.
    pub fn channel_block(&self) -> &[f32] {
        &self.data
    }

    /// Pixel-to-point indices with `-1` for empty pixels.
    pub fn index_grid_i32(&self) -> Vec<i32> {
        self.pixel_to_point
            .iter()
            .map(|p| p.map_or(-1, |i| i as i32))
            .collect()
    }

    /// Flat dump for cross-implementation diffing: `height`, `width` and
    /// plane count as little-endian `u32`, then row-major `f32` planes
    /// (the five channels, then any one-hot planes).
    pub fn write_debug_dump<W: Write>(&self, mut w: W) -> Result<(), ProjectionError> {
        let planes = self.onehot_planes();
        w.write_all(&(self.height() as u32).to_le_bytes())?;
        w.write_all(&(self.width() as u32).to_le_bytes())?;
        w.write_all(&((CHANNELS + planes.len()) as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * (self.data.len() + planes.len() * self.pixel_count()));
        for v in self.data.iter().chain(planes.iter().flatten()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_debug_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_debug_dump(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

/// Decoded debug dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugDump {
    pub height: usize,
    pub width: usize,
    pub planes: Vec<Vec<f32>>,
}

impl DebugDump {
    pub fn plane(&self, c: Channel) -> &[f32] {
        &self.planes[c as usize]
    }
}

pub fn read_debug_dump<R: Read>(mut r: R) -> Result<DebugDump, ProjectionError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(ProjectionError::BadDump("header shorter than 12 bytes".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (height, width, count) = (word(0), word(1), word(2));
    let n = height * width;
    if bytes.len() != 12 + 4 * n * count {
        return Err(ProjectionError::BadDump(format!(
            "expected {} bytes for {count} planes of {height}x{width}, got {}",
            12 + 4 * n * count,
            bytes.len()
        )));
    }
    let floats: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let planes = if n == 0 {
        vec![Vec::new(); count]
    } else {
        floats.chunks(n).map(<[f32]>::to_vec).collect()
    };
    Ok(DebugDump { height, width, planes })
}

/// Projects a sweep with the bundled material table for labelled points.
pub fn project(cloud: &PointCloud, profile: &SensorProfile) -> Result<RangeImage, ProjectionError> {
    project_with(cloud, profile, None)
}

/// Projects a sweep. The nearer point wins a pixel; on exactly equal
/// ranges the lower index wins.
///
/// Reflectance comes from `materials` (or the bundled table) when the cloud
/// carries labels, and from `normalized intensity * range` clamped to
/// `[0, 1]` otherwise.
pub fn project_with(
    cloud: &PointCloud,
    profile: &SensorProfile,
    materials: Option<&MaterialTable>,
) -> Result<RangeImage, ProjectionError> {
    profile.validate()?;
    let mut image = RangeImage::empty(*profile);
    let width = image.width();
    let mut best_range = vec![f64::INFINITY; image.pixel_count()];

    for (index, p) in cloud.points().iter().enumerate() {
        let Some((row, col)) = profile.pixel_of_point(p) else {
            image.unprojected += 1;
            continue;
        };
        let pixel = row * width + col;
        let r = p.range();
        if r < best_range[pixel] {
            best_range[pixel] = r;
            image.pixel_to_point[pixel] = Some(index as u32);
        }
    }

    let labelled = cloud.has_labels();
    let table = match (labelled, materials) {
        (false, _) => None,
        (true, Some(t)) => Some(t.clone()),
        (true, None) => Some(MaterialTable::default()),
    };
    if labelled {
        image.classes = Some(vec![None; image.pixel_count()]);
    }

    for pixel in 0..image.pixel_count() {
        let Some(index) = image.point_at_pixel(pixel) else {
            continue;
        };
        let p = &cloud.points()[index];
        let range = best_range[pixel];
        let intensity = profile.normalize_intensity(p.intensity);
        let reflectance = match (&table, p.class_id()) {
            (Some(table), Some(class)) => {
                image.classes.as_mut().unwrap()[pixel] = Some(class);
                table.reflectance(class) as f32
            }
            _ => ((intensity as f64 * range) as f32).clamp(0.0, 1.0),
        };
        image.channel_mut(Channel::Range)[pixel] = profile.normalize_range(range);
        image.channel_mut(Channel::Reflectance)[pixel] = reflectance;
        image.channel_mut(Channel::Intensity)[pixel] = intensity;
        image.channel_mut(Channel::Mask)[pixel] = 1.0;
    }
    Ok(image)
}

fn check_indices(image: &RangeImage, cloud: &PointCloud) -> Result<(), ProjectionError> {
    let len = cloud.len();
    match image.pixel_to_point.iter().flatten().find(|&&i| i as usize >= len) {
        Some(&i) => Err(ProjectionError::IndexMismatch { index: i as usize, len }),
        None => Ok(()),
    }
}

/// Fills the incidence channel with `cos(theta)` in `[INCIDENCE_EPS, 1]`.
///
/// The surface normal at a pixel is `(right - left) x (down - up)` over the
/// occupied 4-neighbourhood (columns wrap around). A missing neighbour on one
/// side falls back to a one-sided difference against the centre point; a
/// pixel without at least one horizontal and one vertical neighbour gets
/// `cos(theta) = 1`.
pub fn compute_incidence(cloud: &PointCloud, image: &RangeImage) -> Result<RangeImage, ProjectionError> {
    check_indices(image, cloud)?;
    let (h, w) = (image.height(), image.width());
    let pos = |pixel: usize| image.point_at_pixel(pixel).map(|i| cloud.points()[i].position());
    let mut out = image.clone();

    for row in 0..h {
        for col in 0..w {
            let pixel = row * w + col;
            let Some(center) = pos(pixel) else {
                continue;
            };
            let left = if w > 1 { pos(row * w + (col + w - 1) % w) } else { None };
            let right = if w > 1 { pos(row * w + (col + 1) % w) } else { None };
            let up = if row > 0 { pos(pixel - w) } else { None };
            let down = if row + 1 < h { pos(pixel + w) } else { None };

            let cos = match (difference(left, center, right), difference(up, center, down)) {
                (Some(horizontal), Some(vertical)) => incidence_cos(cross(horizontal, vertical), center),
                _ => 1.0,
            };
            out.channel_mut(Channel::Incidence)[pixel] = cos as f32;
        }
    }
    out.incidence_ready = true;
    Ok(out)
}

fn difference(before: Option<[f64; 3]>, center: [f64; 3], after: Option<[f64; 3]>) -> Option<[f64; 3]> {
    match (before, after) {
        (Some(b), Some(a)) => Some(sub(a, b)),
        (None, Some(a)) => Some(sub(a, center)),
        (Some(b), None) => Some(sub(center, b)),
        (None, None) => None,
    }
}

fn incidence_cos(normal: [f64; 3], beam: [f64; 3]) -> f64 {
    let nn = dot(normal, normal).sqrt();
    let bn = dot(beam, beam).sqrt();
    if nn <= f64::EPSILON * bn * bn || bn == 0.0 {
        return 1.0;
    }
    (dot(normal, beam).abs() / (nn * bn)).clamp(INCIDENCE_EPS, 1.0)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// What happens to points that do not own a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SharedPixels {
    /// Points hidden behind a nearer point keep their stored values.
    #[default]
    Retain,
    /// Hidden points take the intensity of the pixel they fall into.
    TakeIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnprojectPolicy {
    /// Keep points outside the vertical field of view unchanged.
    pub keep_unprojected: bool,
    pub shared_pixels: SharedPixels,
}

impl Default for UnprojectPolicy {
    fn default() -> Self {
        UnprojectPolicy {
            keep_unprojected: true,
            shared_pixels: SharedPixels::Retain,
        }
    }
}

pub fn unproject(image: &RangeImage, cloud: &PointCloud) -> Result<PointCloud, ProjectionError> {
    unproject_with(image, cloud, UnprojectPolicy::default())
}

/// Writes image values back into point order.
///
/// The point that owns a pixel takes the pixel's intensity and, when the
/// range channel changed, is moved along its own beam to the new range.
/// Values that still equal what projection would produce leave the stored
/// fields bit-identical. A point whose pixel has been emptied is dropped.
pub fn unproject_with(
    image: &RangeImage,
    cloud: &PointCloud,
    policy: UnprojectPolicy,
) -> Result<PointCloud, ProjectionError> {
    check_indices(image, cloud)?;
    let profile = image.profile();
    let width = image.width();
    let mut points = Vec::with_capacity(cloud.len());

    for (index, p) in cloud.points().iter().enumerate() {
        let Some((row, col)) = profile.pixel_of_point(p) else {
            if policy.keep_unprojected {
                points.push(*p);
            }
            continue;
        };
        let pixel = row * width + col;
        let intensity = image.channel(Channel::Intensity)[pixel];
        match image.point_at_pixel(pixel) {
            None => {}
            Some(owner) if owner == index => {
                let mut q = *p;
                if intensity.to_bits() != profile.normalize_intensity(p.intensity).to_bits() {
                    q.intensity = (intensity as f64 * profile.intensity_scale) as f32;
                }
                let range = image.channel(Channel::Range)[pixel];
                let original = p.range();
                if range.to_bits() != profile.normalize_range(original).to_bits() {
                    let scale = range as f64 * profile.max_range / original;
                    q.x = (p.x as f64 * scale) as f32;
                    q.y = (p.y as f64 * scale) as f32;
                    q.z = (p.z as f64 * scale) as f32;
                }
                points.push(q);
            }
            Some(_) => {
                let mut q = *p;
                if policy.shared_pixels == SharedPixels::TakeIntensity {
                    q.intensity = (intensity as f64 * profile.intensity_scale) as f32;
                }
                points.push(q);
            }
        }
    }
    // Relocated points stay on their beam at a positive range, so this
    // only fails if a range channel was set to zero by hand.
    cloud
        .with_points(points)
        .map_err(|e| ProjectionError::BadDump(format!("unprojected cloud is invalid: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointFormat;

    fn small_profile() -> SensorProfile {
        SensorProfile {
            channels: 16,
            fov_up_deg: 10.0,
            fov_down_deg: -10.0,
            width: 64,
            max_range: 100.0,
            intensity_scale: 1.0,
        }
    }

    fn cloud(points: Vec<Point>) -> PointCloud {
        PointCloud::new(points, PointFormat::Kitti4, "mem").unwrap()
    }

    /// Brute-force binning: scan all bins for the one whose angular
    /// interval contains the point.
    fn brute_force_pixel(profile: &SensorProfile, p: [f64; 3]) -> Option<(usize, usize)> {
        let elevation = p[2].atan2(p[0].hypot(p[1])).to_degrees();
        let azimuth = p[1].atan2(p[0]).to_degrees();
        let (h, w) = (profile.height(), profile.width as usize);
        let rows = (0..h).find(|&r| {
            let top = profile.fov_up_deg - r as f64 * (profile.fov_up_deg - profile.fov_down_deg) / h as f64;
            let bottom = top - (profile.fov_up_deg - profile.fov_down_deg) / h as f64;
            elevation <= top && elevation > bottom
        })?;
        let cols = (0..w).find(|&c| {
            let left = 180.0 - c as f64 * 360.0 / w as f64;
            let right = left - 360.0 / w as f64;
            azimuth <= left && azimuth > right
        })?;
        Some((rows, cols))
    }

    #[test]
    fn forward_point_lands_mid_image() {
        let profile = small_profile();
        let got = profile.pixel_of(10.0, 0.0, 0.3).unwrap();
        assert_eq!(Some(got), brute_force_pixel(&profile, [10.0, 0.0, 0.3]));
        assert_eq!(got.1, 32);
    }

    #[test]
    fn nearer_point_wins_pixel() {
        let c = cloud(vec![Point::new(10.0, 0.0, 0.3, 0.2), Point::new(5.0, 0.0, 0.15, 0.9)]);
        let image = project(&c, &small_profile()).unwrap();
        assert_eq!(image.occupied_count(), 1);
        let (row, col) = small_profile().pixel_of(5.0, 0.0, 0.15).unwrap();
        assert_eq!(image.point_at(row, col), Some(1));
        let expected = (5.0f64.hypot(0.15) / 100.0) as f32;
        assert!((image.get(Channel::Range, row, col) - expected).abs() < 1e-7);
    }

    #[test]
    fn equal_ranges_keep_lower_index() {
        let c = cloud(vec![Point::new(10.0, 0.0, 0.3, 0.2), Point::new(10.0, 0.0, 0.3, 0.9)]);
        let image = project(&c, &small_profile()).unwrap();
        assert_eq!(image.index_grid_i32().iter().filter(|&&i| i >= 0).collect::<Vec<_>>(), vec![&0]);
    }

    #[test]
    fn points_above_fov_are_unprojected() {
        let c = cloud(vec![Point::new(1.0, 0.0, 5.0, 0.1), Point::new(-2.0, 1.0, 9.0, 0.1)]);
        let image = project(&c, &small_profile()).unwrap();
        assert_eq!(image.occupied_count(), 0);
        assert!(image.channel(Channel::Mask).iter().all(|&m| m == 0.0));
        assert_eq!(image.unprojected(), 2);
    }

    #[test]
    fn isolated_pixel_falls_back_to_unit_incidence() {
        let c = cloud(vec![Point::new(10.0, 3.0, 0.3, 0.2)]);
        let image = project(&c, &small_profile()).unwrap();
        let image = compute_incidence(&c, &image).unwrap();
        let pixel = image.channel(Channel::Mask).iter().position(|&m| m == 1.0).unwrap();
        assert_eq!(image.channel(Channel::Incidence)[pixel], 1.0);
    }

    #[test]
    fn halved_intensity_unprojects_to_halved_points() {
        let c = cloud(vec![
            Point::new(10.0, 0.0, 0.3, 0.5),
            Point::new(0.0, 8.0, -0.4, 0.25),
            Point::new(-3.0, -3.0, 0.1, 1.0),
        ]);
        let image = project(&c, &small_profile()).unwrap();
        let out = unproject(&image.map_intensity(|_, v| v / 2.0), &c).unwrap();
        for (a, b) in c.points().iter().zip(out.points()) {
            assert_eq!(b.intensity, a.intensity / 2.0);
            assert_eq!((a.x, a.y, a.z), (b.x, b.y, b.z));
        }
    }

    #[test]
    fn cleared_pixels_drop_points() {
        let c = cloud(vec![
            Point::new(10.0, 0.0, 0.3, 0.5),
            Point::new(0.0, 8.0, -0.4, 0.25),
            Point::new(-3.0, -3.0, 0.1, 1.0),
        ]);
        let mut image = project(&c, &small_profile()).unwrap();
        let (row, col) = small_profile().pixel_of(0.0, 8.0, -0.4).unwrap();
        image.clear_pixel(row * image.width() + col);
        let out = unproject(&image, &c).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.points().iter().all(|p| p.y != 8.0));
    }

    #[test]
    fn index_mismatch_is_reported() {
        let big = cloud(vec![Point::new(10.0, 0.0, 0.3, 0.5), Point::new(0.0, 8.0, -0.4, 0.25)]);
        let small = cloud(vec![Point::new(10.0, 0.0, 0.3, 0.5)]);
        let image = project(&big, &small_profile()).unwrap();
        assert!(matches!(unproject(&image, &small), Err(ProjectionError::IndexMismatch { index: 1, len: 1 })));
        assert!(compute_incidence(&small, &image).is_err());
    }

    #[test]
    fn nuscenes_intensity_is_normalized_and_restored() {
        let profile = SensorProfile::nuscenes32();
        let pts = vec![Point::new(12.0, 1.0, -1.0, 37.0).with_ring(11.0)];
        let c = PointCloud::new(pts, PointFormat::Nuscenes5, "mem").unwrap();
        let image = project(&c, &profile).unwrap();
        let pixel = image.channel(Channel::Mask).iter().position(|&m| m == 1.0).unwrap();
        assert!((image.channel(Channel::Intensity)[pixel] - 37.0 / 255.0).abs() < 1e-7);
        assert_eq!(unproject(&image, &c).unwrap(), c);
    }

    #[test]
    fn debug_dump_round_trip() {
        let c = cloud(vec![Point::new(10.0, 0.0, 0.3, 0.5), Point::new(0.0, 8.0, -0.4, 0.25)]);
        let image = project(&c, &small_profile()).unwrap().with_weather_onehot(WeatherKind::Snow);
        let bytes = image.to_debug_bytes();
        assert_eq!(bytes.len(), 12 + 4 * 7 * 16 * 64);
        let dump = read_debug_dump(bytes.as_slice()).unwrap();
        assert_eq!((dump.height, dump.width, dump.planes.len()), (16, 64, 7));
        assert_eq!(dump.plane(Channel::Intensity), image.channel(Channel::Intensity));
        assert!(dump.planes[5].iter().all(|&v| v == 0.0));
        assert!(dump.planes[6].iter().all(|&v| v == 1.0));
        assert!(read_debug_dump(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(SensorProfile::hdl64().validate().is_ok());
        let mut p = SensorProfile::hdl64();
        p.fov_up_deg = -30.0;
        assert!(p.validate().is_err());
        p = SensorProfile::nuscenes32();
        p.width = 0;
        assert!(p.validate().is_err());
        assert!(SensorProfile::by_name("ouster128").is_err());
        assert_eq!(SensorProfile::by_name("nuscenes").unwrap(), SensorProfile::nuscenes32());
    }

    #[test]
    fn pixel_ray_reprojects_to_its_pixel() {
        let profile = SensorProfile::hdl64();
        for row in [0, 17, 63] {
            for col in [0, 300, 524, 1047] {
                let [x, y, z] = profile.pixel_ray(row, col);
                assert_eq!(profile.pixel_of(x * 20.0, y * 20.0, z * 20.0), Some((row, col)));
            }
        }
    }
}
