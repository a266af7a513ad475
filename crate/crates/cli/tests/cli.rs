use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bubbleid::io::{load_label_pgm, read_jsonl, read_weight_map, save_label_pgm, PolygonRecord};
use bubbleid::ellipse::EllipseRecord;
use bubbleid::LabelMap;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bubbleid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn disk(lm: &mut LabelMap, cr: f64, cc: f64, r: f64, id: u32) {
    for row in 0..lm.height() {
        for col in 0..lm.width() {
            if (row as f64 - cr).powi(2) + (col as f64 - cc).powi(2) <= r * r {
                lm.set(row, col, id);
            }
        }
    }
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let tmp = tempfile::tempdir().unwrap();
    let mut lm = LabelMap::new(20, 20).unwrap();
    disk(&mut lm, 10.0, 10.0, 5.0, 1);
    let labels = tmp.path().join("l.pgm");
    save_label_pgm(&labels, &lm).unwrap();
    // rdc without a model
    let out = run(&["reconstruct", "--labels", p(&labels), "--method", "rdc", "--out", p(&tmp.path().join("r.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
    assert!(!tmp.path().join("r.jsonl").exists());
}

#[test]
fn gen_rdc_scenes_are_deterministic_and_have_two_or_three_bubbles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "gen.json", r#"{"mode": "rdc", "seed": 5, "count": 12}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run(&["gen", "--config", p(&cfg), "--out", p(&a)]));
    ok(&run(&["gen", "--config", p(&cfg), "--out", p(&b), "--workers", "1"]));
    let (fa, fb) = (sorted_files(&a), sorted_files(&b));
    assert_eq!(fa.len(), 2 * 12 + 1);
    assert_eq!(fa, fb, "reruns must be byte-identical");

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let scenes = manifest["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 12);
    for s in scenes {
        let n = s["n_bubbles"].as_u64().unwrap();
        assert!(n == 2 || n == 3);
    }
    let lm = load_label_pgm(&a.join("rdc_00000.labels.pgm")).unwrap();
    assert_eq!(lm.dims(), (256, 256));
}

#[test]
fn gen_alpha_writes_one_scene_per_target_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gen.json",
        r#"{"mode": "alpha", "seed": 3, "count": 2, "targets": [0.025, 0.05],
            "scene": {"width": 200, "height": 200}}"#,
    );
    let out = tmp.path().join("scenes");
    ok(&run(&["gen", "--config", p(&cfg), "--out", p(&out), "--render"]));
    let names: Vec<String> = sorted_files(&out).into_iter().map(|f| f.0).collect();
    for n in ["alpha0250_000", "alpha0250_001", "alpha0500_000", "alpha0500_001"] {
        for suffix in [".labels.pgm", ".scene.json", ".image.pgm"] {
            assert!(names.contains(&format!("{n}{suffix}")), "missing {n}{suffix}");
        }
    }
    assert_eq!(names.len(), 4 * 3 + 1);
}

#[test]
fn gen_placement_failure_exits_two_and_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    // bubbles far larger than the canvas cannot be placed
    let cfg = write_config(
        tmp.path(),
        "gen.json",
        r#"{"mode": "rdc", "count": 3, "scene": {"width": 40, "height": 40, "max_attempts": 20}}"#,
    );
    let out_dir = tmp.path().join("scenes");
    let out = run(&["gen", "--config", p(&cfg), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn pipeline_gen_train_reconstruct_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let gen_cfg = write_config(t, "gen.json", r#"{"mode": "rdc", "seed": 1, "count": 40}"#);
    ok(&run(&["gen", "--config", p(&gen_cfg), "--out", p(&t.join("train"))]));

    let train_cfg = write_config(t, "train.json", r#"{"epochs": 3, "batch_size": 32, "seed": 4}"#);
    let model = t.join("model.json");
    let out = run(&[
        "train-rdc",
        "--scenes",
        p(&t.join("train")),
        "--config",
        p(&train_cfg),
        "--out",
        p(&model),
    ]);
    ok(&out);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(m["version"], 1);
    assert_eq!(m["unit"], "mm");
    assert_eq!(m["train_meta"]["epochs"], 3);
    assert_eq!(m["train_meta"]["seed"], 4);
    let (n_train, n_val) = (m["train_meta"]["n_train"].as_u64().unwrap(), m["train_meta"]["n_val"].as_u64().unwrap());
    let expected_val = ((n_train + n_val) as f64 * 0.0667).round() as u64;
    assert!(n_val.abs_diff(expected_val) <= 1, "val {n_val} of {}", n_train + n_val);
    let csv = fs::read_to_string(t.join("model.loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(t.join("model.json.manifest.json").exists());

    // reconstruct: none vs rdc vs ellipse on one training scene
    let labels = t.join("train/rdc_00000.labels.pgm");
    for method in ["none", "rdc", "ellipse"] {
        let mut args = vec!["reconstruct", "--labels", p(&labels), "--method", method];
        let out_path = t.join(format!("{method}.jsonl"));
        args.extend(["--out", p(&out_path)]);
        if method == "rdc" {
            args.extend(["--model", p(&model)]);
        }
        ok(&run(&args));
    }
    let none: Vec<PolygonRecord> = read_jsonl(fs::File::open(t.join("none.jsonl")).unwrap()).unwrap();
    let rdc: Vec<PolygonRecord> = read_jsonl(fs::File::open(t.join("rdc.jsonl")).unwrap()).unwrap();
    assert_eq!(none.len(), rdc.len());
    for (a, b) in none.iter().zip(&rdc) {
        assert_eq!(a.id, b.id);
        assert!(a.radii.iter().zip(&b.radii).all(|(v, c)| c >= v));
    }
    let ell: Vec<EllipseRecord> = read_jsonl(fs::File::open(t.join("ellipse.jsonl")).unwrap()).unwrap();
    assert!(!ell.is_empty());

    // ideal segmentation: the scene directory doubles as the prediction
    let eval_out = t.join("eval");
    let out = run(&[
        "eval",
        "--pred",
        p(&t.join("train")),
        "--scenes",
        p(&t.join("train")),
        "--model",
        p(&model),
        "--out",
        p(&eval_out),
    ]);
    ok(&out);
    let images = fs::read_to_string(eval_out.join("images.csv")).unwrap();
    let header: Vec<&str> = images.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    assert_eq!(images.lines().count(), 41);
    for line in images.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let rel: f64 = f[col("rel_error_raw")].parse().unwrap();
        assert!(rel < 1.0, "{line}");
        assert_eq!(f[col("ap_0.50")], "1");
        assert_eq!(f[col("ap_0.90")], "1");
        assert!(!f[col("rel_error_rdc")].is_empty());
    }
    let summary = fs::read_to_string(eval_out.join("summary.csv")).unwrap();
    assert!(summary.lines().next().unwrap().contains("rel_error_raw_sd"));
    for f in ["summary.json", "manifest.json", "histogram_ref.csv", "histogram_rdc.csv"] {
        assert!(eval_out.join(f).exists(), "{f}");
    }
}

#[test]
fn eval_reports_id_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let gen_cfg = write_config(t, "gen.json", r#"{"mode": "rdc", "count": 3}"#);
    ok(&run(&["gen", "--config", p(&gen_cfg), "--out", p(&t.join("gt"))]));
    fs::create_dir(t.join("pred")).unwrap();
    fs::copy(t.join("gt/rdc_00000.labels.pgm"), t.join("pred/rdc_00000.labels.pgm")).unwrap();
    fs::copy(t.join("gt/rdc_00001.labels.pgm"), t.join("pred/other.labels.pgm")).unwrap();
    let out = run(&["eval", "--pred", p(&t.join("pred")), "--scenes", p(&t.join("gt")), "--out", p(&t.join("ev"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rdc_00001") && err.contains("rdc_00002") && err.contains("other"), "{err}");
    assert!(!t.join("ev").exists());
}

#[test]
fn reconstruct_isolated_instances() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let mut lm = LabelMap::new(80, 60).unwrap();
    // an isolated ellipse
    for r in 0..60 {
        for c in 0..80 {
            let (y, x) = (r as f64 - 30.0, c as f64 - 40.0);
            if (x / 25.0).powi(2) + (y / 14.0).powi(2) <= 1.0 {
                lm.set(r, c, 7);
            }
        }
    }
    let labels = t.join("l.pgm");
    save_label_pgm(&labels, &lm).unwrap();
    ok(&run(&["reconstruct", "--labels", p(&labels), "--method", "ellipse", "--out", p(&t.join("e.jsonl"))]));
    let ell: Vec<EllipseRecord> = read_jsonl(fs::File::open(t.join("e.jsonl")).unwrap()).unwrap();
    assert_eq!(ell.len(), 1);
    assert_eq!(ell[0].id, 7);
    assert!(!ell[0].fallback);
    assert!((ell[0].a_px / 25.0 - 1.0).abs() < 0.03 && (ell[0].b_px / 14.0 - 1.0).abs() < 0.05);

    // with no neighbours, rdc output is the visible polygon whatever the model
    let gen_cfg = write_config(t, "gen.json", r#"{"mode": "rdc", "count": 4}"#);
    ok(&run(&["gen", "--config", p(&gen_cfg), "--out", p(&t.join("s"))]));
    let model = t.join("m.json");
    ok(&run(&["train-rdc", "--scenes", p(&t.join("s")), "--epochs", "1", "--out", p(&model)]));
    for (m, extra) in [("none", None), ("rdc", Some(&model))] {
        let mut args = vec!["reconstruct", "--labels", p(&labels), "--method", m, "--mm-per-px", "0.1"];
        let out_path = t.join(format!("{m}.jsonl"));
        args.extend(["--out", p(&out_path)]);
        if let Some(model) = extra {
            args.extend(["--model", p(model)]);
        }
        ok(&run(&args));
    }
    assert_eq!(fs::read(t.join("none.jsonl")).unwrap(), fs::read(t.join("rdc.jsonl")).unwrap());
    let none: Vec<PolygonRecord> = read_jsonl(fs::File::open(t.join("none.jsonl")).unwrap()).unwrap();
    assert_eq!(none[0].k, 64);
    assert!((none[0].radii[0] - 2.5).abs() < 0.1, "radius toward +col is ~25 px = 2.5 mm");
}

#[test]
fn fuse_and_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let mut fg = LabelMap::new(40, 20).unwrap();
    for r in 0..20 {
        for c in 0..40 {
            fg.set(r, c, 1);
        }
    }
    let mut seeds = LabelMap::new(40, 20).unwrap();
    seeds.set(10, 8, 1);
    seeds.set(10, 30, 2);
    let (sp, fp, out) = (t.join("seeds.pgm"), t.join("fg.pgm"), t.join("fused.pgm"));
    save_label_pgm(&sp, &seeds).unwrap();
    save_label_pgm(&fp, &fg).unwrap();
    ok(&run(&["fuse", "--seeds", p(&sp), "--foreground", p(&fp), "--out", p(&out)]));
    let fused = load_label_pgm(&out).unwrap();
    assert_eq!(fused.get(0, 19), 1);
    assert_eq!(fused.get(0, 20), 2);
    let diag: serde_json::Value = serde_json::from_slice(&fs::read(t.join("fused.pgm.json")).unwrap()).unwrap();
    assert_eq!(diag["unreached"], 0);
    assert_eq!(diag["claimed"], 40 * 20 - 2);

    // seeds equal to the foreground partition are a fixed point
    ok(&run(&["fuse", "--seeds", p(&out), "--foreground", p(&fp), "--out", p(&t.join("again.pgm"))]));
    assert_eq!(load_label_pgm(&t.join("again.pgm")).unwrap(), fused);

    let small = t.join("small.pgm");
    save_label_pgm(&small, &LabelMap::new(10, 10).unwrap()).unwrap();
    let bad = run(&["fuse", "--seeds", p(&sp), "--foreground", p(&small), "--out", p(&t.join("bad.pgm"))]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("dimension mismatch"));
    assert!(!t.join("bad.pgm").exists());
}

#[test]
fn weightmap_export() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let mut lm = LabelMap::new(64, 64).unwrap();
    for r in 10..20 {
        for c in 10..20 {
            lm.set(r, c, 1);
        }
        for c in 24..34 {
            lm.set(r, c, 2);
        }
    }
    let lp = t.join("l.pgm");
    save_label_pgm(&lp, &lm).unwrap();
    let out = t.join("w.bin");
    ok(&run(&["weightmap", "--labels", p(&lp), "--out", p(&out)]));
    let w = read_weight_map(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(w.dims(), (64, 64));
    assert_eq!(*w.get(15, 22), 10.0);
    assert_eq!(*w.get(15, 15), 1.0);
    assert_eq!(*w.get(60, 60), 0.05);
    let side: serde_json::Value = serde_json::from_slice(&fs::read(t.join("w.bin.json")).unwrap()).unwrap();
    assert_eq!(side["width"], 64);
    assert_eq!(side["threshold_px"], 10.0);
}
