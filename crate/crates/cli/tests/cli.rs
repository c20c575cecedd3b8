use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seldkit::io::{read_annotations, read_feature, read_tensor, read_wav, write_wav};
use seldkit::simulate::{rdoa, synthesize, SceneSpec};
use seldkit::{ArrayGeometry, SourceSignal, SourceSpec};
use serde_json::Value;
use tempfile::TempDir;

const TWO_SOURCE_SCENE: &str = r#"
duration = 3.0
noise_seed = 9

[geometry]
preset = "tnsse-mic"

[[source]]
azimuth = 30.0
elevation = 10.0
onset = 0.0
offset = 3.0
class_id = 2
signal = { type = "sine", frequency = 468.75 }

[[source]]
azimuth = -100.0
elevation = -20.0
onset = 1.0
offset = 3.0
class_id = 7
signal = { type = "sine", frequency = 1500.0 }
"#;

fn seldkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seldkit"))
        .args(args)
        .env_remove("SELD_THREADS")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = seldkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn clip(dir: &Path, name: &str, az: f64, seconds: f64, seed: u64) -> PathBuf {
    let mut scene = SceneSpec::new(ArrayGeometry::tnsse_mic(), seconds, 24_000).with_source(SourceSpec {
        azimuth: az,
        elevation: 0.0,
        signal: SourceSignal::WhiteNoise { seed },
        onset: 0.0,
        offset: seconds,
        class_id: 0,
        amplitude: 0.1,
    });
    scene.snr_db = Some(20.0);
    scene.noise_seed = seed + 100;
    let (audio, _) = synthesize(&scene).unwrap();
    let path = dir.join(name);
    write_wav(&path, &audio).unwrap();
    path
}

fn payload(path: &Path) -> Vec<u32> {
    read_tensor(path).unwrap().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn extract_single_clip_shape() {
    let dir = TempDir::new().unwrap();
    let wav = clip(dir.path(), "a.wav", 20.0, 1.0, 1);
    let out = dir.path().join("out");
    let report = ok_json(&[
        "extract",
        "--input",
        s(&wav),
        "--feature",
        "salsa-lite",
        "--out",
        s(&out),
    ]);
    assert_eq!(report["written"].as_array().unwrap().len(), 1);
    let feat = read_feature(out.join("a.bin")).unwrap();
    assert_eq!(feat.data.dim(), (7, 24_000 / 300 + 1, 192));
    assert!(out.join("a.bin.json").exists());
}

#[test]
fn unknown_feature_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let wav = clip(dir.path(), "a.wav", 0.0, 0.5, 1);
    let out = seldkit(&[
        "extract",
        "--input",
        s(&wav),
        "--feature",
        "salsa-max",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_env_is_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_seldkit"))
        .args(["evaluate", "--pred", "x.csv", "--ref", "y.csv"])
        .env("SELD_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn batch_matches_single_file_runs() {
    let dir = TempDir::new().unwrap();
    let clips = dir.path().join("clips");
    fs::create_dir(&clips).unwrap();
    let names = ["c0.wav", "c1.wav", "c2.wav"];
    for (i, name) in names.iter().enumerate() {
        clip(&clips, name, -60.0 + 50.0 * i as f64, 1.0, i as u64 + 10);
    }
    let batch = dir.path().join("batch");
    ok_json(&[
        "--threads",
        "2",
        "extract",
        "--input",
        s(&clips),
        "--feature",
        "salsa",
        "--out",
        s(&batch),
    ]);
    for name in names {
        let single = dir.path().join(format!("single-{name}"));
        ok_json(&[
            "extract",
            "--input",
            s(&clips.join(name)),
            "--feature",
            "salsa",
            "--out",
            s(&single),
        ]);
        let bin = Path::new(name).with_extension("bin");
        assert_eq!(payload(&batch.join(&bin)), payload(&single.join(&bin)), "{name}");
    }
}

#[test]
fn batch_continues_past_bad_file_unless_fail_fast() {
    let dir = TempDir::new().unwrap();
    let clips = dir.path().join("clips");
    fs::create_dir(&clips).unwrap();
    clip(&clips, "good.wav", 10.0, 0.5, 1);
    fs::write(clips.join("bad.wav"), b"not a wav").unwrap();
    let out = dir.path().join("out");
    let run = seldkit(&[
        "extract",
        "--input",
        s(&clips),
        "--feature",
        "salsa-lite",
        "--out",
        s(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("bad.wav"));
    assert!(out.join("good.bin").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let wav = clip(dir.path(), "a.wav", 45.0, 0.5, 2);
    let config = dir.path().join("cfg.toml");
    fs::write(&config, "spatial_high_hz = 3000.0\nmel_bands = 64\n").unwrap();
    let out = dir.path().join("out");
    ok_json(&[
        "extract",
        "--input",
        s(&wav),
        "--feature",
        "melspecgcc",
        "--config",
        s(&config),
        "--out",
        s(&out),
    ]);
    assert_eq!(read_feature(out.join("a.bin")).unwrap().data.dim().2, 64);
    ok_json(&[
        "extract",
        "--input",
        s(&wav),
        "--feature",
        "melspecgcc",
        "--config",
        s(&config),
        "--mel-bands",
        "96",
        "--out",
        s(&out),
    ]);
    assert_eq!(read_feature(out.join("a.bin")).unwrap().data.dim().2, 96);
}

#[test]
fn evaluate_identical_inputs_scores_zero() {
    let dir = TempDir::new().unwrap();
    let scene_path = dir.path().join("scene.toml");
    fs::write(&scene_path, TWO_SOURCE_SCENE).unwrap();
    let stem = dir.path().join("sim");
    ok_json(&["simulate", "--scene", s(&scene_path), "--out", s(&stem)]);
    let csv = stem.with_extension("csv");
    let report = ok_json(&["evaluate", "--pred", s(&csv), "--ref", s(&csv)]);
    assert_eq!(report["seld_error"].as_f64(), Some(0.0));
    assert_eq!(report["error_rate"].as_f64(), Some(0.0));
    assert_eq!(report["f_score"].as_f64(), Some(1.0));
}

#[test]
fn simulate_two_source_scene() {
    let dir = TempDir::new().unwrap();
    let scene_path = dir.path().join("scene.toml");
    fs::write(&scene_path, TWO_SOURCE_SCENE).unwrap();
    let stem = dir.path().join("out/two");
    let report = ok_json(&["simulate", "--scene", s(&scene_path), "--out", s(&stem)]);
    assert_eq!(report["label_frames"].as_u64(), Some(30));

    let audio = read_wav(stem.with_extension("wav")).unwrap();
    let grid = read_annotations(stem.with_extension("csv"), 12).unwrap();
    let scene = SceneSpec::from_toml_str(TWO_SOURCE_SCENE, Path::new(".")).unwrap();
    let (expected_audio, expected_grid) = synthesize(&scene).unwrap();
    assert_eq!(grid, expected_grid);
    // WAV stores f32 samples.
    let diff = (&audio.samples - &expected_audio.samples).fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(diff < 1e-7, "{diff}");
    assert_eq!(grid.frames[5].len(), 1);
    assert_eq!(grid.frames[15].len(), 2);

    // Each sine sits on a bin centre; once both play, NIPD at each bin
    // should match that source's RDOA.
    let feat_dir = dir.path().join("feat");
    ok_json(&[
        "extract",
        "--input",
        s(&stem.with_extension("wav")),
        "--feature",
        "salsa-lite",
        "--out",
        s(&feat_dir),
    ]);
    let feat = read_feature(feat_dir.join("two.bin")).unwrap();
    let geom = ArrayGeometry::tnsse_mic();
    for (az, el, freq) in [(30.0, 10.0, 468.75), (-100.0, -20.0, 1500.0)] {
        let truth = rdoa(&geom, az, el);
        let bin = (freq / 46.875_f64).round() as usize;
        for m in 1..4 {
            let mut errs: Vec<f64> = (90..feat.n_frames() - 2)
                .map(|t| (f64::from(feat.data[[3 + m, t, bin - 1]]) - truth[m - 1]).abs())
                .collect();
            errs.sort_by(f64::total_cmp);
            assert!(
                errs[errs.len() / 2] < 0.010,
                "az {az} mic {m}: {}",
                errs[errs.len() / 2]
            );
        }
    }
}

#[test]
fn augment_shift_zero_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    let wav = clip(dir.path(), "a.wav", 0.0, 0.5, 3);
    let out = dir.path().join("f");
    ok_json(&[
        "extract",
        "--input",
        s(&wav),
        "--feature",
        "melspecgcc",
        "--out",
        s(&out),
    ]);
    let src = out.join("a.bin");
    let dst = dir.path().join("shifted.bin");
    let report = ok_json(&[
        "augment",
        "--in",
        s(&src),
        "--out",
        s(&dst),
        "--op",
        "shift",
        "--amount",
        "0",
    ]);
    assert_eq!(report["amount"].as_i64(), Some(0));
    assert_eq!(payload(&src), payload(&dst));
    assert_eq!(fs::read(&src).unwrap(), fs::read(&dst).unwrap());

    let too_far = seldkit(&[
        "augment",
        "--in",
        s(&src),
        "--out",
        s(&dst),
        "--op",
        "shift",
        "--amount",
        "-11",
    ]);
    assert_eq!(too_far.status.code(), Some(2));
}

#[test]
fn augment_swap_and_mask_are_seeded() {
    let dir = TempDir::new().unwrap();
    let scene_path = dir.path().join("scene.toml");
    fs::write(&scene_path, TWO_SOURCE_SCENE).unwrap();
    let stem = dir.path().join("sim");
    ok_json(&["simulate", "--scene", s(&scene_path), "--out", s(&stem)]);
    let feat_dir = dir.path().join("feat");
    ok_json(&[
        "extract",
        "--input",
        s(&stem.with_extension("wav")),
        "--feature",
        "salsa-ipd",
        "--out",
        s(&feat_dir),
    ]);
    let src = feat_dir.join("sim.bin");
    let csv = stem.with_extension("csv");

    for op in ["swap", "mask"] {
        let a = dir.path().join(format!("{op}-a.bin"));
        let b = dir.path().join(format!("{op}-b.bin"));
        let labels = dir.path().join(format!("{op}.csv"));
        let mut args = vec!["augment", "--in", s(&src), "--op", op, "--seed", "5", "--out"];
        let ra = if op == "swap" {
            let mut with_labels = args.clone();
            with_labels.extend([s(&a), "--labels", s(&csv), "--labels-out", s(&labels)]);
            ok_json(&with_labels)
        } else {
            args.push(s(&a));
            ok_json(&args)
        };
        args.truncate(8);
        args.push(s(&b));
        let rb = ok_json(&args);
        assert_eq!(ra, rb, "{op}");
        assert_eq!(payload(&a), payload(&b), "{op}");
    }
    let swapped = read_annotations(dir.path().join("swap.csv"), 12).unwrap();
    assert_eq!(swapped.n_events(), read_annotations(&csv, 12).unwrap().n_events());

    let bad = seldkit(&[
        "augment",
        "--in",
        s(&src),
        "--out",
        s(&src),
        "--op",
        "swap",
        "--transform",
        "8",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_reports_requested_repeats() {
    let dir = TempDir::new().unwrap();
    let wav = clip(dir.path(), "a.wav", 0.0, 2.0, 4);
    let report = ok_json(&["--threads", "1", "bench", "--input", s(&wav), "--repeats", "5"]);
    assert_eq!(report["repeats"].as_u64(), Some(5));
    let timings = report["timings"].as_array().unwrap();
    assert_eq!(timings.len(), 4);
    for t in timings {
        let samples: Vec<f64> = t["samples_s"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(samples.len(), 5);
        let mean = samples.iter().sum::<f64>() / 5.0;
        assert!((mean - t["mean_s"].as_f64().unwrap()).abs() < 1e-12);
    }
    let too_few = seldkit(&["bench", "--input", s(&wav), "--repeats", "2"]);
    assert_eq!(too_few.status.code(), Some(2));
}

#[test]
fn missing_input_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = seldkit(&[
        "extract",
        "--input",
        s(&dir.path().join("nope.wav")),
        "--feature",
        "salsa",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
