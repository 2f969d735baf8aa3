use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equicanon::cloud_io::{read_cloud, write_cloud};
use equicanon::core::encoder::{init_params, EncoderArch};
use equicanon::core::synth::{sample_surface, ShapeKind, ShapeSpec};
use equicanon::core::{PointCloud, Vec3};
use equicanon::params_io::{read_params, write_params};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equicanon")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn synth(dir: &Path, config: &str) -> PathBuf {
    let cfg = write(&dir.join("synth.json"), config);
    let out = dir.join("seq");
    let o = run(&["gen-synth", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn gen_synth_writes_frames_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), r#"{"seed": 3, "synth": {"shape": {"kind": "sphere", "radius": 1}, "n": 200, "frames": 5}}"#);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["frames"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["seed"], 3);
    for t in 0..5 {
        let c = read_cloud(&out.join(format!("frame_{t:04}.ply"))).unwrap();
        assert_eq!(c.len(), 200);
        for q in &c.points {
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn denoise_clean_plane_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let c = sample_surface(&ShapeSpec { kind: ShapeKind::Plane { half_extent: 1.0 }, n: 400, seed: 2 }).unwrap();
    let input = dir.path().join("plane.xyz");
    write_cloud(&input, &c).unwrap();
    let out = dir.path().join("out.xyz");
    let o = run(&["denoise", p(&input), "--k", "12", "--seed", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = read_cloud(&out).unwrap();
    for (a, b) in c.points.iter().zip(&d.points) {
        if a.x.abs() < 0.8 && a.y.abs() < 0.8 {
            assert!(b.z.abs() < 1e-9);
        }
    }
    let flags = std::fs::read_to_string(dir.path().join("out.degenerate.csv")).unwrap();
    assert_eq!(flags.lines().next(), Some("frame_index,point_index,degenerate"));
    assert_eq!(flags.lines().count(), 401);
}

#[test]
fn denoise_k_larger_than_cloud_names_both() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(&dir.path().join("small.xyz"), "0 0 0\n1 0 0\n0 1 0\n1 1 0.1\n0.5 0.5 0\n");
    let o = run(&["denoise", p(&input), "--k", "20", "--seed", "0", "--out", p(&dir.path().join("o.xyz"))]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("20") && e.contains('5'), "{e}");
    assert!(!dir.path().join("o.xyz").exists());
}

#[test]
fn parse_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(&dir.path().join("bad.xyz"), "0 0 0\n1 0 0\n1 x 0\n");
    let o = run(&["fps", p(&input), "--m", "2", "--seed", "0", "--out", p(&dir.path().join("o.xyz"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let no_seed = run(&["gen-synth", "--out", p(&out)]);
    assert_eq!(no_seed.status.code(), Some(2));
    let cfg = write(&dir.path().join("c.json"), r#"{"seed": 1, "denoise": {"kk": 3}}"#);
    let unknown = run(&["gen-synth", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("kk"));
    let bad_flag = run(&["gen-synth", "--seed", "x"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn empty_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(&dir.path().join("m.json"), r#"{"format": "ply", "frames": [], "seed": 0}"#);
    let o = run(&["bench-consistency", p(&m), "--seed", "0", "--out", p(&dir.path().join("c.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("2 frames"), "{}", stderr(&o));
}

#[test]
fn bench_consistency_rows_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), r#"{"seed": 1, "synth": {"n": 300, "frames": 4, "noise": {"resample": true}}, "bench": {"fps_points": 64}}"#);
    let out = dir.path().join("c.csv");
    let o = run(&["bench-consistency", p(&seq.join("manifest.json")), "--config", p(&dir.path().join("synth.json")), "--variants", "raw,fps", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "frame_index,variant,chamfer");
    assert_eq!(lines.len(), 1 + 2 * 3 + 2);
    assert!(lines[7].starts_with("mean,raw,") && lines[8].starts_with("mean,fps,"));
}

#[test]
fn canonicalize_writes_frame_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let c = sample_surface(&ShapeSpec { kind: ShapeKind::Box { half_widths: Vec3::new(0.5, 0.3, 0.2) }, n: 128, seed: 4 }).unwrap();
    let input = dir.path().join("box.ply");
    write_cloud(&input, &c).unwrap();
    let out = dir.path().join("canon.ply");
    let o = run(&["canonicalize", p(&input), "--seed", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let frame: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("canon.frame.json")).unwrap()).unwrap();
    assert_eq!(frame["rotation"].as_array().unwrap().len(), 9);
    assert_eq!(frame["degenerate"], false);
    let canon = read_cloud(&out).unwrap();
    assert!(canon.centroid().norm() < 1e-9);
}

#[test]
fn canonicalize_all_degenerate_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let line = PointCloud::new([0.0, 0.1, 0.35, 0.7, 1.5, 2.0].iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect());
    let input = dir.path().join("line.xyz");
    write_cloud(&input, &line).unwrap();
    let out = dir.path().join("canon.xyz");
    let o = run(&["canonicalize", p(&input), "--seed", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn train_with_zero_epochs_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for i in 0..3u64 {
        let c = sample_surface(&ShapeSpec { kind: ShapeKind::Torus { major: 0.5, minor: 0.2 }, n: 64, seed: i }).unwrap();
        write_cloud(&data.join(format!("c{i}.xyz")), &c).unwrap();
    }
    let cfg = write(&dir.path().join("c.json"), r#"{"seed": 8, "contrastive": {"epochs": 0}, "encoder": {"channels": [4, 4]}}"#);
    let out = dir.path().join("model");
    let o = run(&["train", p(&data), "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let arch = EncoderArch { channels: vec![4, 4], ..EncoderArch::default() };
    assert_eq!(read_params(&out.join("params.eqfm")).unwrap(), init_params(8, &arch).unwrap());
    assert_eq!(std::fs::read_to_string(out.join("loss.csv")).unwrap(), "step,epoch,loss\n");
}

#[test]
fn train_loss_decreases_on_toy_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for (i, kind) in equicanon::config::default_instances().into_iter().enumerate() {
        let c = sample_surface(&ShapeSpec { kind, n: 128, seed: i as u64 }).unwrap();
        write_cloud(&data.join(format!("c{i}.ply")), &c).unwrap();
    }
    let cfg = write(
        &dir.path().join("c.json"),
        r#"{"seed": 0, "contrastive": {"epochs": 60, "batch_size": 6}, "augment": {"jitter_sigma": 0.1, "dropout_frac": 0.1, "insert_frac": 0.1, "crop_frac": 0.1}}"#,
    );
    let out = dir.path().join("model");
    let o = run(&["train", p(&data), "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("loss.csv")).unwrap();
    let losses: Vec<f64> = rdr.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(losses.len(), 60);
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[50..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "{head} -> {tail}");
}

#[test]
fn corrupt_params_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.eqfm");
    write_params(&params, &init_params(0, &EncoderArch::default()).unwrap()).unwrap();
    let mut bytes = std::fs::read(&params).unwrap();
    bytes[4] = 9;
    std::fs::write(&params, bytes).unwrap();
    let input = dir.path().join("c.xyz");
    write_cloud(&input, &sample_surface(&ShapeSpec { kind: ShapeKind::Sphere { radius: 1.0 }, n: 32, seed: 0 }).unwrap()).unwrap();
    let o = run(&["canonicalize", p(&input), "--params", p(&params), "--seed", "0", "--out", p(&dir.path().join("o.xyz"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("version 9"), "{}", stderr(&o));
}

#[test]
fn act_missing_proprio_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let obs = write(&dir.path().join("o.json"), r#"{"points": [[0, 0, 0], [1, 0, 0]], "labels": [1, 0]}"#);
    let o = run(&["act", p(&obs), "--seed", "0", "--out", p(&dir.path().join("a.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("proprio"), "{}", stderr(&o));
}

#[test]
fn act_writes_action_record() {
    let dir = tempfile::tempdir().unwrap();
    let c = sample_surface(&ShapeSpec { kind: ShapeKind::Box { half_widths: Vec3::new(0.5, 0.3, 0.2) }, n: 96, seed: 1 }).unwrap();
    let labels: Vec<i64> = c.points.iter().map(|q| i64::from(q.x > 0.3)).collect();
    let rec = serde_json::json!({
        "points": c.points.iter().map(|q| q.to_array()).collect::<Vec<_>>(),
        "labels": labels,
        "proprio": {"position": [0.0, 0.0, 0.8], "orientation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "gripper": 0.05},
    });
    let obs = write(&dir.path().join("o.json"), &rec.to_string());
    let out = dir.path().join("a.json");
    let o = run(&["act", p(&obs), "--seed", "0", "--no-denoise", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(a["gripper"], 0.05);
    assert_eq!(a["orientation"].as_array().unwrap().len(), 9);
    assert_eq!(a["degenerate_flag"], false);
    let target = c.points.iter().filter(|q| q.x > 0.3).fold(Vec3::ZERO, |s, q| s + *q) / labels.iter().filter(|&&l| l == 1).count() as f64;
    for i in 0..3 {
        assert!((a["position"][i].as_f64().unwrap() - target[i]).abs() < 1e-9);
    }
}

#[test]
fn bench_equivariance_writes_level_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"seed": 0, "bench": {"instance_points": 64, "augmentations": 2}}"#);
    let out = dir.path().join("eq");
    let o = run(&["bench-equivariance", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for level in 1..=3 {
        let dev = std::fs::read_to_string(out.join(format!("level{level}_deviations.csv"))).unwrap();
        assert!(dev.starts_with(&format!("# level={level} ")));
        assert_eq!(dev.lines().count(), 2 + 12);
        let sim = std::fs::read_to_string(out.join(format!("level{level}_similarity.csv"))).unwrap();
        assert_eq!(sim.lines().count(), 2 + 12);
    }
    let l3 = std::fs::read_to_string(out.join("level3_deviations.csv")).unwrap();
    assert_eq!(l3.lines().next(), Some("# level=3 jitter_sigma=0.2 frac=0.2"));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(out.join("level1_deviations.csv")).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        assert!(r[3].parse::<f64>().unwrap() <= 1e-5);
    }
}
