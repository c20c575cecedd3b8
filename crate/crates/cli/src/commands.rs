use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use seldkit::augment::{apply_mask, apply_swap_feature, apply_swap_labels, derive_swap_table, freq_shift};
use seldkit::features::FeatureConfigOverrides;
use seldkit::io::{read_annotations, read_feature, read_wav, write_annotations, write_feature, write_wav};
use seldkit::{
    build_feature, evaluate as score, synthesize, ArrayGeometry, FeatureConfig, MaskMode, MaskSpec, SceneSpec,
};

use crate::{AugmentArgs, AugmentOp, BenchArgs, EvaluateArgs, ExtractArgs, MaskModeArg, SimulateArgs};

pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<seldkit::Error> for Failure {
    fn from(e: seldkit::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_geometry(path: Option<&Path>) -> Result<ArrayGeometry, Failure> {
    match path {
        Some(p) => ArrayGeometry::load(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => Ok(ArrayGeometry::tnsse_mic()),
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

/// Small deterministic generator for CLI-level choices (transform index,
/// shift amount), so they depend only on `--seed`.
fn splitmix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn feature_config(args: &ExtractArgs) -> Result<FeatureConfig, Failure> {
    let mut overrides = FeatureConfigOverrides::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        overrides = FeatureConfigOverrides::from_toml_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    let flags = FeatureConfigOverrides {
        spec_cutoff_hz: args.spec_cutoff_hz,
        spatial_low_hz: args.spatial_low_hz,
        spatial_high_hz: args.spatial_high_hz,
        mel_bands: args.mel_bands,
        use_magnitude_test: args.use_magnitude_test,
        use_coherence_test: args.use_coherence_test,
        coherence_threshold: args.coherence_threshold,
        speed_of_sound: args.speed_of_sound,
        ..Default::default()
    };
    let mut cfg = FeatureConfig::new(args.feature);
    overrides.merged_with(&flags).apply(&mut cfg);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn wav_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", input.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        Ok(files)
    } else if input.exists() {
        Ok(vec![input.to_path_buf()])
    } else {
        Err(Failure::Runtime(format!(
            "{}: no such file or directory",
            input.display()
        )))
    }
}

pub fn extract(args: ExtractArgs) -> CmdResult {
    let cfg = feature_config(&args)?;
    let geom = load_geometry(args.geometry.as_deref())?;
    let inputs = wav_inputs(&args.input)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;

    let stop = AtomicBool::new(false);
    let results: Vec<(PathBuf, Result<PathBuf, String>)> = inputs
        .par_iter()
        .map(|path| {
            if stop.load(Ordering::Relaxed) {
                return (path.clone(), Err("skipped after earlier failure".to_string()));
            }
            let stem = path.file_stem().unwrap_or_default();
            let out = args.out.join(stem).with_extension("bin");
            let outcome = read_wav(path)
                .and_then(|audio| build_feature(&audio, &cfg, &geom))
                .and_then(|feat| write_feature(&out, &feat))
                .map(|()| out)
                .map_err(|e| e.to_string());
            if outcome.is_err() && args.fail_fast {
                stop.store(true, Ordering::Relaxed);
            }
            (path.clone(), outcome)
        })
        .collect();

    let mut written = Vec::new();
    let mut failed = Vec::new();
    for (path, outcome) in results {
        match outcome {
            Ok(out) => {
                log::info!("{} -> {}", path.display(), out.display());
                written.push(out);
            }
            Err(msg) => {
                eprintln!("{}: {msg}", path.display());
                failed.push(path);
            }
        }
    }
    print_json(&json!({
        "feature": cfg.kind,
        "config_hash": cfg.hash(),
        "written": written,
        "failed": failed,
    }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} clips failed",
            failed.len(),
            inputs.len()
        )))
    }
}

pub fn bench(args: BenchArgs) -> CmdResult {
    let geom = load_geometry(args.geometry.as_deref())?;
    let (audio, source) = match &args.input {
        Some(path) => (read_wav(path)?, path.display().to_string()),
        None => {
            if args.duration.is_nan() || args.duration <= 0.0 {
                return Err(Failure::Usage("--duration must be positive".into()));
            }
            (
                seldkit::synthetic_clip(args.duration, args.seed)?,
                format!("synthetic {} s, seed {}", args.duration, args.seed),
            )
        }
    };
    let report = seldkit::run_bench(&audio, &geom, args.repeats as usize, &source)?;
    print_json(&report)
}

pub fn simulate(args: SimulateArgs) -> CmdResult {
    let scene = SceneSpec::load(&args.scene).map_err(|e| Failure::Runtime(format!("{}: {e}", args.scene.display())))?;
    let (audio, grid) = synthesize(&scene)?;
    let wav = args.out.with_extension("wav");
    let csv = args.out.with_extension("csv");
    if let Some(dir) = wav.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    write_wav(&wav, &audio)?;
    write_annotations(&csv, &grid)?;
    print_json(&json!({
        "wav": wav,
        "csv": csv,
        "channels": audio.n_channels(),
        "samples": audio.len(),
        "label_frames": grid.n_frames(),
        "events": grid.n_events(),
    }))
}

pub fn augment(args: AugmentArgs) -> CmdResult {
    let feat = read_feature(&args.input)?;
    let summary = match args.op {
        AugmentOp::Swap => {
            let geom = load_geometry(args.geometry.as_deref())?;
            let table = derive_swap_table(&geom, 1e-6);
            let index = match args.transform {
                Some(i) if i < table.len() => i,
                Some(i) => {
                    return Err(Failure::Usage(format!(
                        "--transform {i} out of range, table has {}",
                        table.len()
                    )))
                }
                None => (splitmix(args.seed) % table.len() as u64) as usize,
            };
            let t = &table[index];
            write_feature(&args.out, &apply_swap_feature(&feat, t)?)?;
            if let (Some(src), Some(dst)) = (&args.labels, &args.labels_out) {
                let grid = read_annotations(src, args.n_classes)?;
                write_annotations(dst, &apply_swap_labels(&grid, t))?;
            }
            json!({ "op": "swap", "index": index, "transform": t })
        }
        AugmentOp::Mask => {
            let mode = match args.mask_mode {
                MaskModeArg::Rect => MaskMode::RectCutout,
                MaskModeArg::Cross => MaskMode::CrossSpecAugment,
            };
            let mut spec = MaskSpec::random(mode, feat.n_frames(), feat.n_bins(), args.seed);
            spec.fill_value = args.fill;
            if let Some(t) = args.time_span {
                spec.time_span = t;
            }
            if let Some(f) = args.freq_span {
                spec.freq_span = f;
            }
            write_feature(&args.out, &apply_mask(&feat, &spec))?;
            json!({ "op": "mask", "mask": spec })
        }
        AugmentOp::Shift => {
            let amount = args.amount.unwrap_or_else(|| (splitmix(args.seed) % 21) as i32 - 10);
            let shifted = freq_shift(&feat, amount).map_err(|e| Failure::Usage(e.to_string()))?;
            write_feature(&args.out, &shifted)?;
            json!({ "op": "shift", "amount": amount })
        }
    };
    print_json(&summary)
}

pub fn evaluate(args: EvaluateArgs) -> CmdResult {
    let pred = read_annotations(&args.pred, args.n_classes)?;
    let reference = read_annotations(&args.reference, args.n_classes)?;
    let n = pred.n_frames().max(reference.n_frames());
    let report = score(&reference.padded_to(n), &pred.padded_to(n))?;
    print_json(&report)
}
