//! End-to-end tests of the `quadmark` binary: exit codes, record output and
//! determinism, run against synthetic fixtures generated on the fly.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

use quadmark::formats::{
    demo_library, write_camera_config, write_pgm, write_template_library, DetectionRecord,
    PoseRecord,
};
use quadmark::geometry::{rodrigues, AnchorChoice, Pose, Vec3};
use quadmark::imgproc::GrayImage;
use quadmark::pipeline::{detect_markers, PipelineConfig};
use quadmark::pose::{marker_pose, CameraIntrinsics, MarkerGeometry};
use quadmark::synth::{project_point, render_marker, ScenePose};

static DIR_SEQ: AtomicU32 = AtomicU32::new(0);

struct Fixture {
    dir: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = std::env::temp_dir().join(format!(
            "quadmark-cli-test-{}-{}",
            std::process::id(),
            DIR_SEQ.fetch_add(1, Ordering::SeqCst)
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let fx = Fixture { dir };
        std::fs::write(
            fx.path("templates.artpl"),
            write_template_library(&demo_library()),
        )
        .unwrap();
        std::fs::write(fx.path("camera.json"), write_camera_config(&camera())).unwrap();
        fx
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_scene(&self, name: &str, pose: Pose, template: u32, noise: f64, seed: u64) {
        let lib = demo_library();
        let scene = ScenePose {
            pose,
            template_id: template,
            background_level: 230,
            noise_sigma: noise,
        };
        let img = render_marker(
            &scene,
            &lib[template as usize],
            &MarkerGeometry::new(0.1),
            &camera(),
            seed,
        )
        .unwrap();
        std::fs::write(self.path(name), write_pgm(&img)).unwrap();
    }

    fn write_blank(&self, name: &str) {
        let img = GrayImage::filled(640, 480, 230);
        std::fs::write(self.path(name), write_pgm(&img)).unwrap();
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 800.0,
        fy: 800.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

fn quadmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadmark"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn detect_finds_rendered_marker() {
    let fx = Fixture::new();
    let pose = Pose::new(
        rodrigues(Vec3::new(0.1, -0.2, 0.3)),
        Vec3::new(0.02, 0.01, 0.7),
    );
    fx.write_scene("scene.pgm", pose, 3, 0.0, 0);
    let out = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records: Vec<DetectionRecord> =
        serde_json::from_slice(&out.stdout).expect("valid record array");
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].marker_id, 3);
    assert_eq!(records[0].hamming, 0);
}

#[test]
fn detect_blank_image_is_empty_success() {
    let fx = Fixture::new();
    fx.write_blank("blank.pgm");
    let out = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("blank.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");
}

#[test]
fn detect_missing_template_file_exits_2_naming_path() {
    let fx = Fixture::new();
    fx.write_blank("blank.pgm");
    let missing = fx.path("no-such-library.artpl");
    let out = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("blank.pgm")),
        "--templates",
        &arg(&missing),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-library.artpl"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_3() {
    let out = quadmark(&["detect", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let fx = Fixture::new();
    let pose = Pose::new(quadmark::geometry::Mat3::IDENTITY, Vec3::new(0.0, 0.0, 0.7));
    fx.write_scene("scene.pgm", pose, 4, 0.0, 0);
    // a threshold of 250 turns the light background black: one giant
    // component, nothing decodes
    std::fs::write(fx.path("config.json"), r#"{"threshold": 250}"#).unwrap();
    let out = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
        "--config",
        &arg(&fx.path("config.json")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");

    // the flag overrides the config file and detection works again
    let out = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
        "--config",
        &arg(&fx.path("config.json")),
        "--threshold",
        "auto",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let records: Vec<DetectionRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].marker_id, 4);
}

#[test]
fn pose_of_frontoparallel_detection_is_unit_depth() {
    let fx = Fixture::new();
    fx.write_scene(
        "scene.pgm",
        Pose::new(quadmark::geometry::Mat3::IDENTITY, Vec3::new(0.0, 0.0, 1.0)),
        2,
        0.0,
        0,
    );
    let det = fx.path("det.json");
    let run = quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
        "--out",
        &arg(&det),
    ]);
    assert_eq!(run.status.code(), Some(0));
    let out = quadmark(&[
        "pose",
        "--detections",
        &arg(&det),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let records: Vec<PoseRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(records.len(), 1);
    let t = records[0].translation;
    assert!(
        (t[0]).abs() < 0.01 && (t[1]).abs() < 0.01 && (t[2] - 1.0).abs() < 0.02,
        "{t:?}"
    );
    assert_eq!(records[0].status, "Tracked");
}

#[test]
fn pose_empty_detections_and_bad_camera() {
    let fx = Fixture::new();
    std::fs::write(fx.path("empty.json"), "[]").unwrap();
    let out = quadmark(&[
        "pose",
        "--detections",
        &arg(&fx.path("empty.json")),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");

    std::fs::write(
        fx.path("bad-camera.json"),
        r#"{"fx":-800.0,"fy":800.0,"cx":320.0,"cy":240.0,"width":640,"height":480}"#,
    )
    .unwrap();
    let out = quadmark(&[
        "pose",
        "--detections",
        &arg(&fx.path("empty.json")),
        "--camera",
        &arg(&fx.path("bad-camera.json")),
        "--marker-size",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("focal"));
}

#[test]
fn detect_then_pose_matches_in_process_pipeline() {
    let fx = Fixture::new();
    let truth = Pose::new(
        rodrigues(Vec3::new(0.3, 0.2, -0.4)),
        Vec3::new(-0.03, 0.02, 0.8),
    );
    fx.write_scene("scene.pgm", truth, 5, 0.0, 0);

    let det = fx.path("det.json");
    quadmark(&[
        "detect",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--templates",
        &arg(&fx.path("templates.artpl")),
        "--out",
        &arg(&det),
    ]);
    let out = quadmark(&[
        "pose",
        "--detections",
        &arg(&det),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
    ]);
    let via_cli: Vec<PoseRecord> = serde_json::from_slice(&out.stdout).unwrap();

    // in-process equivalent
    let img = quadmark::formats::read_pgm(&std::fs::read(fx.path("scene.pgm")).unwrap()).unwrap();
    let lib = demo_library();
    let found = detect_markers(&img, &lib, &PipelineConfig::default()).unwrap();
    assert_eq!(found.len(), 1);
    let in_proc = marker_pose(
        &found[0].quad,
        &found[0].match_result,
        &camera(),
        &MarkerGeometry::new(0.1),
        AnchorChoice::Vertex(0, 1),
    )
    .unwrap();

    assert_eq!(via_cli.len(), 1);
    let cli_pose = via_cli[0].pose();
    for r in 0..3 {
        for c in 0..3 {
            let diff = (cli_pose.rotation.m[r][c] - in_proc.pose.rotation.m[r][c]).abs();
            assert!(diff < 1e-9, "rotation entry [{r}][{c}] differs by {diff}");
        }
    }
    assert!((cli_pose.translation - in_proc.pose.translation).norm() < 1e-9);
}

#[test]
fn track_dropout_statuses_and_bad_timestamps() {
    let fx = Fixture::new();
    let mut inputs: Vec<String> = Vec::new();
    for i in 0..10 {
        let name = format!("frame{i}.pgm");
        if i == 3 || i == 4 {
            fx.write_blank(&name);
        } else {
            let pose = Pose::new(
                quadmark::geometry::Mat3::IDENTITY,
                Vec3::new(-0.08 + 0.02 * i as f64, 0.0, 0.7),
            );
            fx.write_scene(&name, pose, 2, 0.0, i as u64);
        }
        inputs.push(arg(&fx.path(&name)));
    }
    let mut args = vec![
        "track".to_string(),
        "--templates".into(),
        arg(&fx.path("templates.artpl")),
        "--camera".into(),
        arg(&fx.path("camera.json")),
        "--marker-size".into(),
        "0.1".into(),
        "--inputs".into(),
    ];
    args.extend(inputs.iter().cloned());
    let out = quadmark(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records: Vec<PoseRecord> = serde_json::from_slice(&out.stdout).unwrap();
    let statuses: Vec<(u64, String)> = records
        .iter()
        .map(|r| (r.frame, r.status.clone()))
        .collect();
    let want: Vec<(u64, String)> = [
        "Tracked", "Tracked", "Tracked", "Coasting", "Coasting", "Tracked", "Tracked", "Tracked",
        "Tracked", "Tracked",
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| (i as u64, s.to_string()))
    .collect();
    assert_eq!(statuses, want);
    // coasted frames stay on the constant-velocity line
    for r in &records {
        let want_x = -0.08 + 0.02 * r.frame as f64;
        assert!(
            (r.translation[0] - want_x).abs() < 0.005,
            "frame {}: {:?}",
            r.frame,
            r.translation
        );
    }

    let mut bad = args.clone();
    bad.push("--timestamps".into());
    bad.push("0,1,2,3,4,5,6,7,9,8".into());
    let out = quadmark(&bad.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn track_all_blank_sequence_is_empty_success() {
    let fx = Fixture::new();
    let mut args = vec![
        "track".to_string(),
        "--templates".into(),
        arg(&fx.path("templates.artpl")),
        "--camera".into(),
        arg(&fx.path("camera.json")),
        "--marker-size".into(),
        "0.1".into(),
        "--inputs".into(),
    ];
    for i in 0..8 {
        let name = format!("blank{i}.pgm");
        fx.write_blank(&name);
        args.push(arg(&fx.path(&name)));
    }
    let out = quadmark(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");
}

#[test]
fn synth_is_deterministic_and_rejects_behind_camera() {
    let fx = Fixture::new();
    for name in ["a.pgm", "b.pgm"] {
        let out = quadmark(&[
            "synth",
            "--template",
            "1",
            "--templates",
            &arg(&fx.path("templates.artpl")),
            "--pose",
            "0.1,0.2,0.3,0.0,0.0,0.8",
            "--camera",
            &arg(&fx.path("camera.json")),
            "--marker-size",
            "0.1",
            "--noise",
            "3.5",
            "--seed",
            "99",
            "--out",
            &arg(&fx.path(name)),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(fx.path("a.pgm")).unwrap();
    let b = std::fs::read(fx.path("b.pgm")).unwrap();
    assert_eq!(a, b);

    let out = quadmark(&[
        "synth",
        "--template",
        "1",
        "--templates",
        &arg(&fx.path("templates.artpl")),
        "--pose",
        "0,0,0,0,0,-1.0",
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
        "--out",
        &arg(&fx.path("behind.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overlay_empty_poses_promotes_input_and_skips_negative_depth() {
    let fx = Fixture::new();
    fx.write_scene(
        "scene.pgm",
        Pose::new(quadmark::geometry::Mat3::IDENTITY, Vec3::new(0.0, 0.0, 1.0)),
        0,
        0.0,
        0,
    );
    std::fs::write(fx.path("empty.json"), "[]").unwrap();
    let out = quadmark(&[
        "overlay",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--poses",
        &arg(&fx.path("empty.json")),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
        "--out",
        &arg(&fx.path("plain.ppm")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    // output equals the grayscale input promoted to rgb
    let ppm = quadmark::formats::read_ppm(&std::fs::read(fx.path("plain.ppm")).unwrap()).unwrap();
    let pgm = quadmark::formats::read_pgm(&std::fs::read(fx.path("scene.pgm")).unwrap()).unwrap();
    for y in [0usize, 240, 479] {
        for x in [0usize, 320, 639] {
            let v = pgm.get(x, y);
            assert_eq!(ppm.pixel(x, y), [v, v, v]);
        }
    }

    let rec = PoseRecord::lost(0, 0);
    let mut neg = rec.clone();
    neg.translation = [0.0, 0.0, -1.0];
    std::fs::write(
        fx.path("neg.json"),
        serde_json::to_string(&vec![neg]).unwrap(),
    )
    .unwrap();
    let out = quadmark(&[
        "overlay",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--poses",
        &arg(&fx.path("neg.json")),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
        "--out",
        &arg(&fx.path("skipped.ppm")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
}

#[test]
fn overlay_cube_base_sits_on_marker_outline() {
    let fx = Fixture::new();
    let pose = Pose::new(quadmark::geometry::Mat3::IDENTITY, Vec3::new(0.0, 0.0, 1.0));
    fx.write_scene("scene.pgm", pose, 0, 0.0, 0);
    let rec =
        PoseRecord::from_pose(0, 0, quadmark::pose::TrackStatus::Tracked, &pose, 0.0).unwrap();
    std::fs::write(
        fx.path("poses.json"),
        serde_json::to_string(&vec![rec]).unwrap(),
    )
    .unwrap();
    let out = quadmark(&[
        "overlay",
        "--input",
        &arg(&fx.path("scene.pgm")),
        "--poses",
        &arg(&fx.path("poses.json")),
        "--camera",
        &arg(&fx.path("camera.json")),
        "--marker-size",
        "0.1",
        "--out",
        &arg(&fx.path("overlay.ppm")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let img = quadmark::formats::read_ppm(&std::fs::read(fx.path("overlay.ppm")).unwrap()).unwrap();

    // cube base corners coincide with the projected marker corners
    let geom = MarkerGeometry::new(0.1);
    for c in geom.canonical_corners() {
        let (u, v) = project_point(&camera(), pose.transform_point(c)).unwrap();
        let (px, py) = (u as i64, v as i64);
        let mut found_yellow = false;
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let (x, y) = ((px + dx) as usize, (py + dy) as usize);
                if img.pixel(x, y) == [255, 255, 0] {
                    found_yellow = true;
                }
            }
        }
        assert!(
            found_yellow,
            "no cube base near projected corner ({u:.1},{v:.1})"
        );
    }
}
