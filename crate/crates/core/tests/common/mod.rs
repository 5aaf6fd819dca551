//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reality_core::cloud::{encode_sweep, Point, PointCloud, PointFormat};
use reality_core::SensorProfile;

pub const SENSOR_HEIGHT: f64 = 1.73;

/// A street-like HDL-64 sweep: ground plane below the horizon, walls at a
/// random distance per azimuth sector above it. Every `col_step`-th column
/// gets a point, jittered inside its pixel.
pub fn hdl64_sweep(seed: u64, col_step: usize) -> PointCloud {
    let profile = SensorProfile::hdl64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sectors: Vec<f64> = (0..36).map(|_| rng.random_range(8.0..70.0)).collect();
    let h = profile.height();
    let w = profile.width as usize;
    let mut points = Vec::new();
    for row in 0..h {
        for col in (0..w).step_by(col_step) {
            let jr = rng.random_range(-0.3..0.3);
            let jc = rng.random_range(-0.3..0.3);
            let d = ray(&profile, row as f64 + 0.5 + jr, col as f64 + 0.5 + jc);
            let azimuth = d[1].atan2(d[0]);
            let sector = (((azimuth + PI) / (2.0 * PI) * 36.0) as usize).min(35);
            let wall = sectors[sector];
            let horizontal = d[0].hypot(d[1]);
            let to_wall = wall / horizontal;
            let to_ground = if d[2] < 0.0 { SENSOR_HEIGHT / -d[2] } else { f64::INFINITY };
            let range = to_wall.min(to_ground);
            if !(range > 0.5 && range < 110.0) {
                continue;
            }
            let intensity: f64 = if to_ground < to_wall {
                rng.random_range(0.02..0.35)
            } else {
                rng.random_range(0.05..0.9)
            };
            points.push(Point::new(
                (d[0] * range) as f32,
                (d[1] * range) as f32,
                (d[2] * range) as f32,
                intensity as f32,
            ));
        }
    }
    PointCloud::new(points, PointFormat::Kitti4, format!("synthetic-{seed}")).unwrap()
}

/// Unit ray through fractional pixel coordinates (pixel centres at +0.5).
pub fn ray(profile: &SensorProfile, row: f64, col: f64) -> [f64; 3] {
    let up = profile.fov_up_deg.to_radians();
    let down = profile.fov_down_deg.to_radians();
    let elevation = up - row / profile.height() as f64 * (up - down);
    let azimuth = PI * (1.0 - 2.0 * col / profile.width as f64);
    [
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    ]
}

/// Random valid points with uniform directions inside a profile's field of
/// view; ring values are added for NUSCENES5.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, format: PointFormat) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let r = rng.random_range(1.0f64..80.0);
            let az = rng.random_range(-PI..PI);
            let el = rng.random_range(-0.4f64..0.03);
            let p = Point::new(
                (r * el.cos() * az.cos()) as f32,
                (r * el.cos() * az.sin()) as f32,
                (r * el.sin()) as f32,
                rng.random_range(0.0f32..1.0),
            );
            match format {
                PointFormat::Kitti4 => p,
                PointFormat::Nuscenes5 => p.with_ring(rng.random_range(0..32) as f32),
            }
        })
        .collect();
    PointCloud::new(points, format, "random").unwrap()
}

/// Points on a plane through `10 * d0` (`d0` the ray of pixel `(row0,
/// col0)`), one per pixel centre in a `rows x cols` window. The plane
/// normal is `d0` rotated by `tilt_deg` about the vertical axis.
pub struct PlaneFixture {
    pub cloud: PointCloud,
    pub normal: [f64; 3],
    /// `(row, col)` of each point.
    pub pixels: Vec<(usize, usize)>,
}

pub fn plane_fixture(profile: &SensorProfile, tilt_deg: f64, class: u32) -> PlaneFixture {
    let (row0, col0) = (profile.height() / 2, profile.width as usize / 2);
    let d0 = profile.pixel_ray(row0, col0);
    let t = tilt_deg.to_radians();
    let normal = [
        d0[0] * t.cos() - d0[1] * t.sin(),
        d0[0] * t.sin() + d0[1] * t.cos(),
        d0[2],
    ];
    let anchor = [10.0 * d0[0], 10.0 * d0[1], 10.0 * d0[2]];
    let offset = dot(&normal, &anchor);
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for row in row0 - 6..=row0 + 6 {
        for col in col0 - 12..=col0 + 12 {
            let d = profile.pixel_ray(row, col);
            let s = offset / dot(&normal, &d);
            let mut p = Point::new((d[0] * s) as f32, (d[1] * s) as f32, (d[2] * s) as f32, 0.5);
            p.label = Some(class);
            points.push(p);
            pixels.push((row, col));
        }
    }
    PlaneFixture {
        cloud: PointCloud::new(points, PointFormat::Kitti4, "plane").unwrap(),
        normal,
        pixels,
    }
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Writes `frames` synthetic sweeps (plus labels) into a SemanticKITTI
/// layout, split over sequences 00 and 01. Returns the relative paths.
pub fn write_kitti_tree(root: &Path, frames: usize, col_step: usize) -> Vec<String> {
    let mut rel = Vec::new();
    for i in 0..frames {
        let seq = if i < frames.div_ceil(2) { "00" } else { "01" };
        let velodyne = root.join("sequences").join(seq).join("velodyne");
        let labels = root.join("sequences").join(seq).join("labels");
        fs::create_dir_all(&velodyne).unwrap();
        fs::create_dir_all(&labels).unwrap();
        let cloud = hdl64_sweep(1000 + i as u64, col_step);
        let name = format!("{i:06}");
        fs::write(velodyne.join(format!("{name}.bin")), encode_sweep(&cloud)).unwrap();
        let label_bytes: Vec<u8> = cloud
            .points()
            .iter()
            .flat_map(|p| (if p.z < -1.0 { 40u32 } else { 50u32 }).to_le_bytes())
            .collect();
        fs::write(labels.join(format!("{name}.label")), label_bytes).unwrap();
        rel.push(format!("sequences/{seq}/velodyne/{name}.bin"));
    }
    rel.sort();
    rel
}

/// All regular files under `dir` with their contents, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}
