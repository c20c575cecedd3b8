//! Windowed short-time Fourier transform over multichannel audio.
//!
//! Frames are centred on multiples of `hop_length` when `center` is set: the
//! signal is reflect-padded by `n_fft / 2` on both sides, which gives
//! `T = floor(N / hop) + 1` frames. Only the one-sided spectrum
//! (`n_fft / 2 + 1` bins) is kept.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rayon::prelude::*;
use realfft::{RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor added to power before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub window: Window,
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24_000,
            win_length: 512,
            hop_length: 300,
            n_fft: 512,
            window: Window::Hann,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if self.hop_length == 0 {
            return Err(Error::InvalidConfig("hop_length must be at least 1".into()));
        }
        if self.n_fft < 2 {
            return Err(Error::InvalidConfig("n_fft must be at least 2".into()));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins.
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Hz per frequency bin.
    pub fn freq_resolution(&self) -> f64 {
        f64::from(self.sample_rate) / self.n_fft as f64
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate) / 2.0
    }

    /// Frame count for a signal of `n_samples`.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if self.center {
            n_samples / self.hop_length + 1
        } else if n_samples < self.n_fft {
            0
        } else {
            (n_samples - self.n_fft) / self.hop_length + 1
        }
    }

    /// Analysis window of length `n_fft`, zero-padded around a periodic
    /// window of length `win_length`.
    pub fn window_samples(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        let len = self.win_length as f64;
        match self.window {
            Window::Hann => {
                for i in 0..self.win_length {
                    w[offset + i] = 0.5 - 0.5 * (2.0 * PI * i as f64 / len).cos();
                }
            }
        }
        w
    }
}

/// M-channel PCM signal, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelAudio {
    pub samples: Array2<f64>,
    pub sample_rate: u32,
}

impl MultichannelAudio {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::TooFewChannels { needed: 1, actual: 0 });
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels, len)),
            sample_rate,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn channel(&self, m: usize) -> ArrayView1<'_, f64> {
        self.samples.row(m)
    }
}

/// Per-channel STFT, laid out as channel × frame × bin.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn n_channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_bins(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn freq_resolution(&self) -> f64 {
        self.config.freq_resolution()
    }

    /// Centre frequency of bin `b` in Hz.
    pub fn bin_hz(&self, b: usize) -> f64 {
        b as f64 * self.freq_resolution()
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Scratch space for one [`FrameAnalyzer`] worker.
pub(crate) struct FrameBuffers {
    input: Vec<f64>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Windowed one-sided transform of single frames, shared by [`stft`] and
/// the fused feature paths.
pub(crate) struct FrameAnalyzer {
    fft: Arc<dyn RealToComplex<f64>>,
    window: Vec<f64>,
    hop: usize,
    pad: isize,
    center: bool,
}

impl FrameAnalyzer {
    pub(crate) fn new(cfg: &StftConfig) -> Self {
        Self {
            fft: RealFftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft),
            window: cfg.window_samples(),
            hop: cfg.hop_length,
            pad: if cfg.center { (cfg.n_fft / 2) as isize } else { 0 },
            center: cfg.center,
        }
    }

    pub(crate) fn buffers(&self) -> FrameBuffers {
        FrameBuffers {
            input: self.fft.make_input_vec(),
            spectrum: self.fft.make_output_vec(),
            scratch: self.fft.make_scratch_vec(),
        }
    }

    /// Spectrum of frame `t` of `signal`, valid until the next call with `bufs`.
    pub(crate) fn analyze<'b>(&self, signal: &[f64], t: usize, bufs: &'b mut FrameBuffers) -> &'b [Complex64] {
        let n = signal.len();
        let n_fft = self.window.len();
        let start = (t * self.hop) as isize - self.pad;
        if start >= 0 && start as usize + n_fft <= n {
            let frame = &signal[start as usize..start as usize + n_fft];
            for ((slot, &x), &w) in bufs.input.iter_mut().zip(frame).zip(&self.window) {
                *slot = x * w;
            }
        } else {
            for (k, (slot, w)) in bufs.input.iter_mut().zip(&self.window).enumerate() {
                let i = start + k as isize;
                let x = if i >= 0 && (i as usize) < n {
                    signal[i as usize]
                } else if self.center {
                    signal[reflect_index(i, n)]
                } else {
                    0.0
                };
                *slot = x * w;
            }
        }
        self.fft
            .process_with_scratch(&mut bufs.input, &mut bufs.spectrum, &mut bufs.scratch)
            .expect("buffers come from the plan");
        &bufs.spectrum
    }
}

/// Checks `audio` against `cfg` and returns the frame count.
pub(crate) fn frame_count(audio: &MultichannelAudio, cfg: &StftConfig) -> Result<usize> {
    cfg.validate()?;
    if audio.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: cfg.sample_rate,
            actual: audio.sample_rate,
        });
    }
    if audio.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = audio.len();
    let n_frames = cfg.n_frames(n);
    if n_frames == 0 {
        return Err(Error::ShapeMismatch(format!(
            "signal of {n} samples is shorter than one uncentred frame of {}",
            cfg.n_fft
        )));
    }
    Ok(n_frames)
}

pub fn stft(audio: &MultichannelAudio, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    let n_frames = frame_count(audio, cfg)?;
    let analyzer = FrameAnalyzer::new(cfg);
    let mut data = Array3::<Complex64>::zeros((audio.n_channels(), n_frames, cfg.n_bins()));
    for (m, mut chan_out) in data.axis_iter_mut(Axis(0)).enumerate() {
        let row = audio.samples.row(m);
        let owned;
        let signal: &[f64] = match row.as_slice() {
            Some(s) => s,
            None => {
                owned = row.to_vec();
                &owned
            }
        };
        chan_out
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each_init(
                || analyzer.buffers(),
                |bufs, (t, mut frame_out)| {
                    for (dst, src) in frame_out.iter_mut().zip(analyzer.analyze(signal, t, bufs)) {
                        *dst = *src;
                    }
                },
            );
    }
    Ok(ComplexSpectrogram {
        data,
        config: cfg.clone(),
    })
}

/// `10 log10(|X|^2 + LOG_FLOOR)` per bin.
pub fn log_power(spec: &ComplexSpectrogram) -> Array3<f64> {
    log_power_with_floor(spec, LOG_FLOOR)
}

pub fn log_power_with_floor(spec: &ComplexSpectrogram, floor: f64) -> Array3<f64> {
    spec.data.mapv(|x| 10.0 * (x.norm_sqr() + floor).log10())
}

pub fn power(spec: &ComplexSpectrogram) -> Array3<f64> {
    spec.data.mapv(|x| x.norm_sqr())
}
