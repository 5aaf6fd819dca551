mod common;

use reality_core::physics::{reference_image, AttenuationParams, MaterialTable};
use reality_core::projection::{compute_incidence, project, Channel, SensorProfile};

fn check_plane(tilt: f64) {
    let profile = SensorProfile::hdl64();
    let fx = common::plane_fixture(&profile, tilt, 40);
    let image = compute_incidence(&fx.cloud, &project(&fx.cloud, &profile).unwrap()).unwrap();
    let rows = fx.pixels.iter().map(|p| p.0);
    let cols = fx.pixels.iter().map(|p| p.1);
    let (rmin, rmax) = (rows.clone().min().unwrap(), rows.max().unwrap());
    let (cmin, cmax) = (cols.clone().min().unwrap(), cols.max().unwrap());
    for (p, &(row, col)) in fx.cloud.points().iter().zip(&fx.pixels) {
        if row == rmin || row == rmax || col == cmin || col == cmax {
            continue;
        }
        let exact = common::dot(&fx.normal, &p.position()).abs() / p.range();
        let got = image.get(Channel::Incidence, row, col) as f64;
        assert!((got - exact).abs() < 0.05, "tilt {tilt} at ({row}, {col}): {got} vs {exact}");
    }
}

#[test]
fn head_on_plane() {
    check_plane(0.0);
}

#[test]
fn plane_tilted_30_degrees() {
    check_plane(30.0);
}

#[test]
fn plane_tilted_60_degrees() {
    check_plane(60.0);
}

#[test]
fn isolated_point_falls_back_to_normal_incidence() {
    let profile = SensorProfile::hdl64();
    let fx = common::plane_fixture(&profile, 60.0, 40);
    let lonely = fx.cloud.with_points(fx.cloud.points()[..1].to_vec()).unwrap();
    let image = compute_incidence(&lonely, &project(&lonely, &profile).unwrap()).unwrap();
    let (row, col) = fx.pixels[0];
    assert_eq!(image.get(Channel::Incidence, row, col), 1.0);
}

#[test]
fn reference_intensity_scales_with_reflectance() {
    let profile = SensorProfile::hdl64();
    let fx = common::plane_fixture(&profile, 30.0, 40);
    let image = compute_incidence(&fx.cloud, &project(&fx.cloud, &profile).unwrap()).unwrap();
    let low = reference_image(&image, &MaterialTable::uniform(0.2).unwrap(), &AttenuationParams::CLEAR).unwrap();
    let high = reference_image(&image, &MaterialTable::uniform(0.4).unwrap(), &AttenuationParams::CLEAR).unwrap();
    for &(row, col) in &fx.pixels {
        let (a, b) = (low.get(Channel::Intensity, row, col), high.get(Channel::Intensity, row, col));
        assert!((2.0 * a - b).abs() < 1e-6, "{a} vs {b}");
        assert_eq!(low.get(Channel::Reflectance, row, col), 0.2);
    }
}
