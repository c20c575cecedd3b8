//! Wall-clock comparison of the four feature pipelines on one clip.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature, FeatureConfig, FeatureKind};
use crate::geometry::ArrayGeometry;
use crate::simulate::{synthesize, SceneSpec, SourceSignal, SourceSpec};
use crate::stft::MultichannelAudio;

pub const MIN_REPEATS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub source: String,
    pub channels: usize,
    pub samples: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindTiming {
    pub kind: FeatureKind,
    pub samples_s: Vec<f64>,
    pub mean_s: f64,
    pub std_s: f64,
    /// Mean time relative to SALSA-Lite.
    pub ratio_vs_salsa_lite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub clip: ClipDescriptor,
    pub repeats: usize,
    pub threads: usize,
    pub timings: Vec<KindTiming>,
}

impl BenchReport {
    pub fn timing(&self, kind: FeatureKind) -> Option<&KindTiming> {
        self.timings.iter().find(|t| t.kind == kind)
    }

    pub fn mean(&self, kind: FeatureKind) -> f64 {
        self.timing(kind).map_or(f64::NAN, |t| t.mean_s)
    }
}

/// Four-channel scene on the tetrahedral array: two white-noise sources plus
/// sensor noise at 20 dB SNR.
pub fn synthetic_clip(duration_s: f64, seed: u64) -> Result<MultichannelAudio> {
    let source = |azimuth, elevation, s| SourceSpec {
        azimuth,
        elevation,
        signal: SourceSignal::WhiteNoise { seed: s },
        onset: 0.0,
        offset: duration_s,
        class_id: 0,
        amplitude: 0.1,
    };
    let mut scene = SceneSpec::new(ArrayGeometry::tnsse_mic(), duration_s, 24_000)
        .with_source(source(40.0, 10.0, seed))
        .with_source(source(-110.0, -20.0, seed.wrapping_add(1)));
    scene.snr_db = Some(20.0);
    scene.noise_seed = seed.wrapping_add(2);
    Ok(synthesize(&scene)?.0)
}

/// Times every feature kind `repeats` times with default configs. Kinds are
/// interleaved within each repeat after one untimed warm-up pass.
pub fn run_bench(audio: &MultichannelAudio, geom: &ArrayGeometry, repeats: usize, source: &str) -> Result<BenchReport> {
    if repeats < MIN_REPEATS {
        return Err(Error::InvalidConfig(format!(
            "repeats must be at least {MIN_REPEATS}, got {repeats}"
        )));
    }
    let kinds = FeatureKind::ALL;
    let configs: Vec<FeatureConfig> = kinds.iter().map(|&k| FeatureConfig::new(k)).collect();
    for cfg in &configs {
        build_feature(audio, cfg, geom)?;
    }
    let mut samples = vec![Vec::with_capacity(repeats); kinds.len()];
    for _ in 0..repeats {
        for (i, cfg) in configs.iter().enumerate() {
            let start = Instant::now();
            let feat = build_feature(audio, cfg, geom)?;
            samples[i].push(start.elapsed().as_secs_f64());
            drop(feat);
        }
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var.sqrt())
    };
    let lite = kinds
        .iter()
        .position(|&k| k == FeatureKind::SalsaLite)
        .expect("SALSA-Lite is benchmarked");
    let lite_mean = stats(&samples[lite]).0;
    let timings = kinds
        .iter()
        .zip(samples)
        .map(|(&kind, s)| {
            let (mean_s, std_s) = stats(&s);
            KindTiming {
                kind,
                ratio_vs_salsa_lite: mean_s / lite_mean,
                samples_s: s,
                mean_s,
                std_s,
            }
        })
        .collect();
    Ok(BenchReport {
        clip: ClipDescriptor {
            source: source.to_string(),
            channels: audio.n_channels(),
            samples: audio.len(),
            sample_rate: audio.sample_rate,
            duration_s: audio.duration_secs(),
        },
        repeats,
        threads: rayon::current_num_threads(),
        timings,
    })
}
