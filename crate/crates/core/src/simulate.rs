//! Farfield array simulator.
//!
//! Each source is a plane wave from direction `u(azimuth, elevation)`. The
//! microphone at position `r_m` receives the source signal advanced by
//! `r_m · u / c` relative to the array origin, which makes the inter-channel
//! model exactly `H_m / H_1 = exp(-j 2 pi f d_1m / c)` with
//! `d_1m = (r_1 - r_m) · u`. Fractional delays use a 64-tap Hann-windowed sinc.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, ArrayGeometry, GeometryFile, SPEED_OF_SOUND};
use crate::metrics::{Event, SeldEventGrid, FRAME_SECONDS};
use crate::stft::MultichannelAudio;

pub use crate::geometry::unit_direction;

const SINC_HALF_WIDTH: i64 = 32;

/// Relative distance of arrival `d_1m = (r_1 - r_m) · u` for `m = 2..M`, metres.
pub fn rdoa(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> Vec<f64> {
    let u = unit_direction(azimuth, elevation);
    let p = geom.positions();
    let r1 = dot(&p[0], &u);
    p[1..].iter().map(|rm| r1 - dot(rm, &u)).collect()
}

/// Array response relative to microphone 0 at frequency `freq_hz`.
pub fn steering_vector(
    geom: &ArrayGeometry,
    freq_hz: f64,
    azimuth: f64,
    elevation: f64,
    speed_of_sound: f64,
) -> Vec<Complex64> {
    std::iter::once(Complex64::new(1.0, 0.0))
        .chain(
            rdoa(geom, azimuth, elevation)
                .into_iter()
                .map(|d| Complex64::from_polar(1.0, -2.0 * PI * freq_hz * d / speed_of_sound)),
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SourceSignal {
    WhiteNoise {
        seed: u64,
    },
    Sine {
        frequency: f64,
    },
    /// First channel of a WAV file, starting at the event onset.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub azimuth: f64,
    pub elevation: f64,
    pub signal: SourceSignal,
    pub onset: f64,
    pub offset: f64,
    pub class_id: usize,
    /// Standard deviation for noise, peak amplitude for sines, gain for files.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry,
    pub sources: Vec<SourceSpec>,
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    pub duration: f64,
    pub sample_rate: u32,
    pub max_polyphony: usize,
    pub n_classes: usize,
    pub speed_of_sound: f64,
}

impl SceneSpec {
    pub fn new(geometry: ArrayGeometry, duration: f64, sample_rate: u32) -> Self {
        Self {
            geometry,
            sources: Vec::new(),
            snr_db: None,
            noise_seed: 0,
            duration,
            sample_rate,
            max_polyphony: 3,
            n_classes: 12,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }

    pub fn with_source(mut self, source: SourceSpec) -> Self {
        self.sources.push(source);
        self
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * f64::from(self.sample_rate)).round() as usize
    }

    pub fn n_label_frames(&self) -> usize {
        (self.duration / FRAME_SECONDS - 1e-9).ceil().max(0.0) as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScene(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad(format!("invalid SNR {snr}"));
            }
        }
        if self.speed_of_sound.is_nan() || self.speed_of_sound <= 0.0 {
            return bad("speed_of_sound must be positive".into());
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(-180.0..180.0).contains(&s.azimuth) || !(-90.0..=90.0).contains(&s.elevation) {
                return bad(format!(
                    "source {i}: direction ({}, {}) out of range",
                    s.azimuth, s.elevation
                ));
            }
            if !(s.onset >= 0.0 && s.onset < s.offset) {
                return bad(format!("source {i}: need 0 <= onset < offset"));
            }
            if s.class_id >= self.n_classes {
                return bad(format!("source {i}: class {} >= {}", s.class_id, self.n_classes));
            }
            if let SourceSignal::Sine { frequency } = s.signal {
                if !(frequency >= 0.0 && frequency < f64::from(self.sample_rate) / 2.0) {
                    return bad(format!("source {i}: sine frequency {frequency} outside [0, Nyquist)"));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: SceneFile = toml::from_str(text)?;
        let mut scene = SceneSpec::new(file.geometry.into_geometry()?, file.duration, file.sample_rate);
        scene.snr_db = file.snr_db;
        scene.noise_seed = file.noise_seed;
        scene.max_polyphony = file.max_polyphony;
        scene.n_classes = file.n_classes;
        scene.speed_of_sound = file.speed_of_sound;
        scene.sources = file
            .source
            .into_iter()
            .map(|mut s| {
                if let SourceSignal::File { path } = &mut s.signal {
                    if path.is_relative() {
                        *path = base_dir.join(&*path);
                    }
                }
                s
            })
            .collect();
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&std::fs::read_to_string(path)?, base)
    }
}

/// Scene description file:
///
/// ```toml
/// duration = 5.0          # seconds
/// sample_rate = 24000
/// snr_db = 20.0           # optional; omit for a noiseless scene
/// noise_seed = 7
///
/// [geometry]
/// preset = "tnsse-mic"
///
/// [[source]]
/// azimuth = 30.0
/// elevation = 10.0
/// onset = 0.0
/// offset = 5.0
/// class_id = 3
/// amplitude = 0.1
/// signal = { type = "white-noise", seed = 1 }   # or sine / file
/// ```
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub duration: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_polyphony")]
    pub max_polyphony: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
    pub geometry: GeometryFile,
    #[serde(default)]
    pub source: Vec<SourceSpec>,
}

fn default_sample_rate() -> u32 {
    24_000
}
fn default_polyphony() -> usize {
    3
}
fn default_classes() -> usize {
    12
}
fn default_speed() -> f64 {
    SPEED_OF_SOUND
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited read of `signal` at fractional index `pos`; indices outside
/// the buffer read as zero.
fn interpolate(signal: &[f64], pos: f64) -> f64 {
    let base = pos.floor();
    let frac = pos - base;
    let i0 = base as i64;
    if frac == 0.0 {
        return usize::try_from(i0)
            .ok()
            .and_then(|i| signal.get(i))
            .copied()
            .unwrap_or(0.0);
    }
    let mut acc = 0.0;
    for j in -SINC_HALF_WIDTH + 1..=SINC_HALF_WIDTH {
        let idx = i0 + j;
        if idx < 0 || idx as usize >= signal.len() {
            continue;
        }
        let x = frac - j as f64;
        let w = 0.5 * (1.0 + (PI * x / SINC_HALF_WIDTH as f64).cos());
        acc += signal[idx as usize] * sinc(x) * w;
    }
    acc
}

/// Source samples on the source-time grid, offset by `margin` samples so that
/// index `k + margin` is source time `k / sr`.
fn source_buffer(src: &SourceSpec, scene: &SceneSpec, margin: usize) -> Result<Vec<f64>> {
    let sr = f64::from(scene.sample_rate);
    let n = scene.n_samples();
    let len = n + 2 * margin;
    let onset = (src.onset * sr).round() as i64;
    let offset = (src.offset * sr).round() as i64;
    let active = |k: i64| k >= onset && k < offset;
    let mut buf = vec![0.0; len];
    match &src.signal {
        SourceSignal::WhiteNoise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for (i, slot) in buf.iter_mut().enumerate() {
                let v: f64 = StandardNormal.sample(&mut rng);
                if active(i as i64 - margin as i64) {
                    *slot = src.amplitude * v;
                }
            }
        }
        SourceSignal::Sine { .. } => {}
        SourceSignal::File { path } => {
            let audio = crate::io::read_wav(path)?;
            if audio.sample_rate != scene.sample_rate {
                return Err(Error::InvalidScene(format!(
                    "{}: sample rate {} does not match scene rate {}",
                    path.display(),
                    audio.sample_rate,
                    scene.sample_rate
                )));
            }
            let span = (offset.min(n as i64) - onset).max(0) as usize;
            if audio.len() < span {
                return Err(Error::InvalidScene(format!(
                    "{}: {} samples cannot cover an event of {span} samples",
                    path.display(),
                    audio.len()
                )));
            }
            let chan = audio.channel(0);
            for k in 0..span {
                buf[(onset as usize) + k + margin] = src.amplitude * chan[k];
            }
        }
    }
    Ok(buf)
}

/// Renders a scene to audio and the matching 100 ms annotation grid.
pub fn synthesize(scene: &SceneSpec) -> Result<(MultichannelAudio, SeldEventGrid)> {
    scene.validate()?;
    let grid = annotation_grid(scene)?;
    let n = scene.n_samples();
    let sr = f64::from(scene.sample_rate);
    let m = scene.geometry.n_mics();
    let mut samples = Array2::<f64>::zeros((m, n));

    for src in &scene.sources {
        let u = unit_direction(src.azimuth, src.elevation);
        // Advance of each microphone relative to the origin, in samples.
        let advance: Vec<f64> = scene
            .geometry
            .positions()
            .iter()
            .map(|r| dot(r, &u) / scene.speed_of_sound * sr)
            .collect();
        let max_shift = advance.iter().fold(0.0f64, |a, b| a.max(b.abs())).ceil() as usize;
        let margin = max_shift + SINC_HALF_WIDTH as usize + 1;
        let buffer = source_buffer(src, scene, margin)?;
        let onset = src.onset * sr;
        let offset = src.offset * sr;

        samples
            .outer_iter_mut()
            .into_par_iter()
            .zip(advance.par_iter())
            .for_each(|(mut chan, &adv)| match src.signal {
                SourceSignal::Sine { frequency } => {
                    for (i, slot) in chan.iter_mut().enumerate() {
                        let t = i as f64 + adv;
                        if t >= onset.round() && t < offset.round() {
                            *slot += src.amplitude * (2.0 * PI * frequency * t / sr).sin();
                        }
                    }
                }
                _ => {
                    for (i, slot) in chan.iter_mut().enumerate() {
                        *slot += interpolate(&buffer, i as f64 + adv + margin as f64);
                    }
                }
            });
    }

    if let Some(snr) = scene.snr_db {
        let power = samples.iter().map(|x| x * x).sum::<f64>() / samples.len().max(1) as f64;
        let std = (power / 10f64.powf(snr / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(scene.noise_seed);
        for x in samples.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            *x += std * v;
        }
    }

    Ok((MultichannelAudio::new(samples, scene.sample_rate)?, grid))
}

fn annotation_grid(scene: &SceneSpec) -> Result<SeldEventGrid> {
    let n_frames = scene.n_label_frames();
    let mut grid = SeldEventGrid::new(n_frames, scene.n_classes);
    for (track, src) in scene.sources.iter().enumerate() {
        for (k, frame) in grid.frames.iter_mut().enumerate() {
            let start = k as f64 * FRAME_SECONDS;
            let end = start + FRAME_SECONDS;
            if src.onset < end - 1e-9 && src.offset > start + 1e-9 {
                frame.push(Event {
                    class_id: src.class_id,
                    track_id: track,
                    azimuth: src.azimuth,
                    elevation: src.elevation,
                });
            }
        }
    }
    if let Some((k, frame)) = grid
        .frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.len() > scene.max_polyphony)
    {
        return Err(Error::InvalidScene(format!(
            "{} simultaneous sources in frame {k}, maximum is {}",
            frame.len(),
            scene.max_polyphony
        )));
    }
    Ok(grid)
}
