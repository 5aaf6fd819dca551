use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reality_core::cloud::{encode_sweep, read_sweep, Point, PointCloud, PointFormat};
use reality_core::projection::read_debug_dump;

fn realitygen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_realitygen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Rings of points on a cylinder wall, inside the HDL-64 field of view.
fn sweep() -> PointCloud {
    let mut pts = Vec::new();
    for ring in 0..48 {
        let el = (1.5 - ring as f64 * 0.5f64).to_radians();
        for step in 0..360 {
            let az = (step as f64).to_radians();
            let r = 12.0 + (step % 7) as f64;
            pts.push(Point::new(
                (r * el.cos() * az.cos()) as f32,
                (r * el.cos() * az.sin()) as f32,
                (r * el.sin()) as f32,
                0.05 + (step % 10) as f32 * 0.08,
            ));
        }
    }
    PointCloud::new(pts, PointFormat::Kitti4, "cli").unwrap()
}

fn kitti_tree(root: &Path, frames: usize) {
    let dir = root.join("sequences/00/velodyne");
    fs::create_dir_all(&dir).unwrap();
    for i in 0..frames {
        fs::write(dir.join(format!("{i:06}.bin")), encode_sweep(&sweep())).unwrap();
    }
}

fn write_config(dir: &Path, variants: &str) -> std::path::PathBuf {
    let path = dir.join("job.toml");
    fs::write(
        &path,
        format!(
            "dataset = \"semantickitti\"\nsource_root = \"kitti\"\noutput_root = \"lads\"\nvariants = {variants}\nseed = 1\nparallelism = 2\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn augment_writes_a_sweep_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.bin");
    let out = tmp.path().join("out.bin");
    fs::write(&input, encode_sweep(&sweep())).unwrap();
    let run = |seed: &str| {
        realitygen(&[
            "augment", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
            "--weather", "snow", "--rate", "8", "--seed", seed,
        ])
    };
    let o = run("4");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("weather=snow rate=8 "), "{line}");
    let first = fs::read(&out).unwrap();
    assert!(read_sweep(&out, PointFormat::Kitti4).unwrap().len() <= sweep().len());
    assert!(run("4").status.success());
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn augment_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.bin");
    fs::write(&input, [0u8; 17]).unwrap();
    let o = realitygen(&["augment", "--in", input.to_str().unwrap(), "--out", "x.bin", "--weather", "rain"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("17"));
    let o = realitygen(&["augment", "--in", "a", "--out", "b", "--weather", "fog"]);
    assert!(!o.status.success());
}

#[test]
fn run_validate_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    kitti_tree(&tmp.path().join("kitti"), 3);
    let config = write_config(tmp.path(), "[\"snow\", \"rain\"]");
    let o = realitygen(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("frames=6 failed=0"));
    let lads = tmp.path().join("lads");
    assert!(lads.join("manifest.jsonl").is_file());

    let kitti = tmp.path().join("kitti");
    let o = realitygen(&["validate", "--source", kitti.to_str().unwrap(), "--derived", lads.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok frames=3"));

    let csv = tmp.path().join("stats.csv");
    let o = realitygen(&[
        "stats", "--a", kitti.to_str().unwrap(), "--b", lads.join("snow").to_str().unwrap(),
        "--bins", "32", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("frames=3") && text.contains("histogram_w1="), "{text}");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);

    fs::remove_file(lads.join("rain/sequences/00/velodyne/000001.bin")).unwrap();
    let o = realitygen(&["validate", "--source", kitti.to_str().unwrap(), "--derived", lads.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("missing rain/sequences/00/velodyne/000001.bin"));
}

#[test]
fn run_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    kitti_tree(&tmp.path().join("kitti"), 2);
    fs::write(tmp.path().join("kitti/sequences/00/velodyne/000000.bin"), [0u8; 17]).unwrap();
    let config = write_config(tmp.path(), "[\"rain\"]");
    let o = realitygen(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("failed=1"));

    let bad = write_config(tmp.path(), "[]");
    assert_eq!(realitygen(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(realitygen(&["run", "--config", "/nonexistent/job.toml"]).status.code(), Some(2));
}

#[test]
fn dump_writes_readable_range_image() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.bin");
    let out = tmp.path().join("in.rimg");
    fs::write(&input, encode_sweep(&sweep())).unwrap();
    let o = realitygen(&["dump", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dump = read_debug_dump(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!((dump.height, dump.width), (64, 1048));
    assert!(stdout(&o).contains("height=64 width=1048"));
}
