use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use vinpaint::flow::read_flo_file;
use vinpaint::io::{list_pngs, read_frame, read_mask, write_frame};
use vinpaint::metrics::psnr;
use vinpaint::DomainRect;

fn vinpaint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vinpaint")).args(args).output().expect("spawn vinpaint")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn static_spec(frames: usize) -> Value {
    json!({
        "template_size": [64, 64],
        "frame_size": [48, 48],
        "channels": 3,
        "frames": frames,
        "seed": 11,
        "warp": { "kind": "translation", "velocity": [0.0, 0.0] },
        "mask": { "shape": "disk", "size": 10.0, "start": [12.0, 20.0], "velocity": [5.0, 1.0] }
    })
}

fn pan_spec(frames: usize) -> Value {
    json!({
        "template_size": [256, 256],
        "frame_size": [96, 96],
        "channels": 3,
        "frames": frames,
        "seed": 3,
        "noise_sigma": 0.005,
        "warp": { "kind": "translation", "velocity": [1.5, 0.5] },
        "mask": { "shape": "box", "size": 16.0, "start": [20.0, 48.0], "velocity": [2.0, 0.0] }
    })
}

/// Renders `spec` into `<dir>/<name>` through the CLI.
fn synth(dir: &Path, name: &str, spec: &Value) -> PathBuf {
    let spec_path = dir.join(format!("{name}.json"));
    fs::write(&spec_path, spec.to_string()).unwrap();
    let out = dir.join(name);
    let o = vinpaint(&["synth", "--spec", s(&spec_path), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn run_json(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = walk(dir);
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn static_sequence_is_restored_with_nothing_unfilled() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(6));
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "inpaint",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = run_json(&out);
    assert_eq!(run["unfilled"], json!([0, 0, 0, 0, 0, 0]));
    assert!(run["timings"]["total_s"].as_f64().unwrap() > 0.0);
    for t in 0..6 {
        let name = format!("{t:06}.png");
        let got = read_frame(out.join(&name)).unwrap();
        let gt = read_frame(seq.join("gt").join(&name)).unwrap();
        let err = got.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1.0 / 255.0 + 1e-9, "frame {t}: {err}");
    }
    let tpl = read_frame(out.join("template.png")).unwrap();
    assert_eq!(tpl.channels(), 3);
    assert!(!out.join(".staging").exists());
}

#[test]
fn missing_mask_fails_without_writing() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(4));
    fs::remove_file(seq.join("masks/000002.png")).unwrap();
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "inpaint",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("000002.png"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unmatched_mask_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(3));
    fs::copy(seq.join("masks/000000.png"), seq.join("masks/000009.png")).unwrap();
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "inpaint",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("000009.png"));
    assert!(!out.exists());
}

#[test]
fn unreadable_frame_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(3));
    fs::write(seq.join("frames/000001.png"), b"not a png").unwrap();
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "inpaint",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(3));
    let (frames, masks) = (seq.join("frames"), seq.join("masks"));
    let base = ["inpaint", "--input", s(&frames), "--masks", s(&masks), "--output"];
    let out = tmp.path().join("out");
    let mut args = base.to_vec();
    args.extend([s(&out), "--mode", "sliding", "--window", "1"]);
    assert_eq!(code(&vinpaint(&args)), 2);
    let mut args = base.to_vec();
    args.extend([s(&out), "--key-frame", "7"]);
    assert_eq!(code(&vinpaint(&args)), 2);
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"windw": 5}"#).unwrap();
    let o = vinpaint(&["inpaint", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("windw"));
    assert!(!out.exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(4));
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        json!({
            "input_dir": seq.join("frames"),
            "mask_dir": seq.join("masks"),
            "output_dir": tmp.path().join("from_file"),
            "mode": "sliding",
            "window": 3,
            "key_frame": "middle",
            "threads": 2
        })
        .to_string(),
    )
    .unwrap();
    let out = tmp.path().join("from_flag");
    let o = vinpaint(&["inpaint", "--config", s(&cfg), "--output", s(&out), "--window", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!tmp.path().join("from_file").exists());
    let run = run_json(&out);
    assert_eq!(run["config"]["mode"], "sliding");
    assert_eq!(run["config"]["window"], 4);
    assert_eq!(run["threads"], 2);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &pan_spec(5));
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("out{threads}"));
        let o = vinpaint(&[
            "inpaint",
            "--input",
            s(&seq.join("frames")),
            "--masks",
            s(&seq.join("masks")),
            "--output",
            s(&out),
            "--threads",
            threads,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(out);
    }
    for name in ["000000.png", "000002.png", "000004.png", "template.png"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flow_cache_is_filled_and_reused() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &pan_spec(4));
    let cache = tmp.path().join("cache");
    let mut outs = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("out{run}"));
        let o = vinpaint(&[
            "inpaint",
            "--input",
            s(&seq.join("frames")),
            "--masks",
            s(&seq.join("masks")),
            "--output",
            s(&out),
            "--flow-cache",
            s(&cache),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(out);
    }
    let cached = files(&cache);
    assert_eq!(cached.len(), 6);
    let rect = DomainRect::new([0, 0], 96, 96);
    read_flo_file(cache.join("flow_000001_000002.flo"), Some((rect, rect))).unwrap();
    for t in 0..4 {
        let name = format!("{t:06}.png");
        assert_eq!(fs::read(outs[0].join(&name)).unwrap(), fs::read(outs[1].join(&name)).unwrap());
    }
}

#[test]
fn sliding_window_on_long_pan_scores_above_30_db() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &pan_spec(30));
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "inpaint",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
        "--mode",
        "sliding",
        "--window",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = tmp.path().join("metrics.json");
    let o = vinpaint(&[
        "eval",
        "--results",
        s(&out),
        "--truth",
        s(&seq.join("gt")),
        "--masks",
        s(&seq.join("masks")),
        "--flows",
        s(&seq.join("flows")),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let per_frame = r["per_frame"].as_array().unwrap();
    assert_eq!(per_frame.len(), 30);
    for (t, f) in per_frame.iter().enumerate() {
        let p = f["psnr"].as_f64().unwrap();
        assert!(p >= 30.0, "frame {t}: {p:.2} dB");
    }
    assert!(r["temporal"]["tpsnr"].as_f64().is_some());
}

#[test]
fn estimate_mask_with_every_frame_annotated_estimates_nothing() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &static_spec(4));
    let out = tmp.path().join("out");
    let args = |n: &'static str| {
        vinpaint(&[
            "estimate-mask",
            "--input",
            s(&seq.join("frames")),
            "--masks",
            s(&seq.join("masks")),
            "--output",
            s(&out),
            "--annotated",
            n,
        ])
    };
    let o = args("0");
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    let o = args("4");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(run_json(&out)["estimated_masks"], json!([]));
    assert!(!out.join("masks").exists());
}

#[test]
fn estimate_mask_finds_pasted_foreground() {
    let tmp = TempDir::new().unwrap();
    let spec = json!({
        "template_size": [192, 192],
        "frame_size": [80, 80],
        "channels": 3,
        "frames": 14,
        "seed": 5,
        "noise_sigma": 0.005,
        "warp": { "kind": "translation", "velocity": [0.5, 0.0] },
        "mask": {
            "shape": "disk", "size": 20.0, "start": [24.0, 40.0], "velocity": [3.0, 0.0],
            "fill": { "kind": "channel_offset", "channel": 0, "amount": 0.5 }
        }
    });
    let seq = synth(tmp.path(), "seq", &spec);
    let out = tmp.path().join("out");
    let o = vinpaint(&[
        "estimate-mask",
        "--input",
        s(&seq.join("frames")),
        "--masks",
        s(&seq.join("masks")),
        "--output",
        s(&out),
        "--annotated",
        "10",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est = run_json(&out)["estimated_masks"].as_array().unwrap().clone();
    assert_eq!(est.len(), 4);
    for t in 10..14 {
        let m = read_mask(out.join(format!("masks/{t:06}_est.png"))).unwrap();
        let truth = read_mask(seq.join(format!("masks/{t:06}.png"))).unwrap();
        let iou = m.iou(&truth);
        assert!(iou >= 0.8, "frame {t}: IoU {iou:.3}");
    }
}

#[test]
fn eval_on_identical_dirs_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &pan_spec(3));
    let report = tmp.path().join("r.json");
    let o = vinpaint(&[
        "eval",
        "--results",
        s(&seq.join("gt")),
        "--truth",
        s(&seq.join("gt")),
        "--masks",
        s(&seq.join("masks")),
        "--flows",
        s(&seq.join("flows")),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for f in r["per_frame"].as_array().unwrap() {
        assert_eq!(f["psnr"], "inf");
        assert_eq!(f["ssim"].as_f64().unwrap(), 1.0);
    }
    assert_eq!(r["aggregate"]["psnr"], "inf");
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("mean") && table.contains("inf"));
}

#[test]
fn eval_report_matches_library_and_handles_edge_cases() {
    let tmp = TempDir::new().unwrap();
    let seq = synth(tmp.path(), "seq", &pan_spec(3));
    let report = tmp.path().join("r.json");
    let run = |results: &Path, masks: &Path| {
        vinpaint(&[
            "eval",
            "--results",
            s(results),
            "--truth",
            s(&seq.join("gt")),
            "--masks",
            s(masks),
            "--flows",
            s(&seq.join("flows")),
            "--report",
            s(&report),
        ])
    };
    let o = run(&seq.join("frames"), &seq.join("masks"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for t in 0..3 {
        let name = format!("{t:06}.png");
        let a = read_frame(seq.join("frames").join(&name)).unwrap();
        let b = read_frame(seq.join("gt").join(&name)).unwrap();
        let m = read_mask(seq.join("masks").join(&name)).unwrap();
        assert_eq!(r["per_frame"][t]["psnr"].as_f64().unwrap(), psnr(&a, &b, Some(&m)).unwrap());
    }

    let empty = tmp.path().join("no_masks");
    fs::create_dir(&empty).unwrap();
    let o = run(&seq.join("frames"), &empty);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["temporal"].is_null());
    assert!(r["per_frame"][0]["psnr"].as_f64().is_some());

    let short = tmp.path().join("short");
    fs::create_dir(&short).unwrap();
    fs::copy(seq.join("gt/000000.png"), short.join("000000.png")).unwrap();
    assert_eq!(code(&run(&short, &seq.join("masks"))), 2);
}

#[test]
fn synth_manifest_regenerates_identical_files() {
    let tmp = TempDir::new().unwrap();
    let first = synth(tmp.path(), "a", &pan_spec(4));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let second = synth(tmp.path(), "b", &manifest);
    let (fa, fb) = (files(&first), files(&second));
    assert_eq!(fa.len(), fb.len());
    assert_eq!(list_pngs(first.join("frames")).unwrap().len(), 4);
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(a.strip_prefix(&first).unwrap(), b.strip_prefix(&second).unwrap());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
}

#[test]
fn synth_single_frame_and_rotation_flows() {
    let tmp = TempDir::new().unwrap();
    let mut one = pan_spec(1);
    one["mask"] = Value::Null;
    let seq = synth(tmp.path(), "one", &one);
    assert_eq!(list_pngs(seq.join("frames")).unwrap().len(), 1);

    let rot = json!({
        "template_size": [160, 160],
        "frame_size": [64, 64],
        "frames": 3,
        "warp": { "kind": "rotation", "rate": 0.02 }
    });
    let seq = synth(tmp.path(), "rot", &rot);
    let rect = DomainRect::new([0, 0], 64, 64);
    let w = read_flo_file(seq.join("flows/forward_000001.flo"), Some((rect, rect))).unwrap();
    // corner pixel moves by roughly 0.02 rad * radius
    let p = w.eval([0.0, 0.0]);
    let d = ((p.point[0]).powi(2) + (p.point[1]).powi(2)).sqrt();
    assert!(d > 0.5 && d < 1.2, "{d}");
}

#[test]
fn invalid_synth_spec_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("bad.json");
    let mut bad = pan_spec(3);
    bad["channels"] = json!(2);
    fs::write(&spec, bad.to_string()).unwrap();
    let out = tmp.path().join("out");
    let o = vinpaint(&["synth", "--spec", s(&spec), "--output", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("channels"), "{}", stderr(&o));
    assert!(!out.exists());

    let mut missing = pan_spec(3);
    missing.as_object_mut().unwrap().remove("frames");
    fs::write(&spec, missing.to_string()).unwrap();
    let o = vinpaint(&["synth", "--spec", s(&spec), "--output", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("frames"), "{}", stderr(&o));
}

#[test]
fn written_frames_round_trip() {
    let tmp = TempDir::new().unwrap();
    let f = vinpaint::synth::texture(20, 12, 3, 2.0, 1);
    let p = tmp.path().join("f.png");
    write_frame(&p, &f).unwrap();
    let back = read_frame(&p).unwrap();
    let err = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 0.5 / 255.0 + 1e-12);
}
