//! Phase-difference spatial channels referenced to microphone 0.
//!
//! For a farfield single-source bin `X = H S` with `H_m = exp(-j 2 pi f d_1m / c)`,
//! `arg(X_0^* X_m) = -2 pi f d_1m / c`, so NIPD recovers the RDOA `d_1m` in
//! metres and IPD the phase in cycles. EPV applies the NIPD mapping to the
//! principal eigenvector of the local SCM instead of the raw spectrum.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{principal_arg, FeatureConfig};
use crate::error::{Error, Result};
use crate::scm::{principal_unchecked, ScmField, MAX_CHANNELS};
use crate::stft::{ComplexSpectrogram, LOG_FLOOR};

#[derive(Clone, Copy)]
pub(crate) enum PhaseScale {
    /// `-c / (2 pi f)`: metres.
    Nipd,
    /// `-1 / (2 pi)`: cycles.
    Ipd,
}

impl PhaseScale {
    pub(crate) fn factor(self, freq_hz: f64, speed_of_sound: f64) -> f64 {
        match self {
            PhaseScale::Nipd => -speed_of_sound / (2.0 * PI * freq_hz),
            PhaseScale::Ipd => -1.0 / (2.0 * PI),
        }
    }
}

fn check_spec(spec: &ComplexSpectrogram, cfg: &FeatureConfig) -> Result<(Range<usize>, Range<usize>)> {
    let m = spec.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    if spec.config.n_fft != cfg.stft.n_fft || spec.config.sample_rate != cfg.stft.sample_rate {
        return Err(Error::ShapeMismatch(
            "spectrogram was computed with a different STFT configuration".into(),
        ));
    }
    Ok((cfg.spectral_bins(), cfg.spatial_bins()))
}

fn phase_feature(spec: &ComplexSpectrogram, cfg: &FeatureConfig, scale: PhaseScale) -> Result<Array3<f64>> {
    let (axis, band) = check_spec(spec, cfg)?;
    let m = spec.n_channels();
    let df = spec.freq_resolution();
    let factors: Vec<f64> = band
        .clone()
        .map(|b| scale.factor(b as f64 * df, cfg.speed_of_sound))
        .collect();
    let mut out = Array3::<f64>::zeros((m - 1, spec.n_frames(), axis.len()));
    let reference = spec.data.index_axis(Axis(0), 0);
    for (c, mut chan) in out.axis_iter_mut(Axis(0)).enumerate() {
        let other = spec.data.index_axis(Axis(0), c + 1);
        chan.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(t, mut row)| {
                for (k, b) in band.clone().enumerate() {
                    let z = reference[[t, b]].conj() * other[[t, b]];
                    row[b - axis.start] = factors[k] * principal_arg(z.re, z.im);
                }
            });
    }
    Ok(out)
}

/// Frequency-normalised inter-channel phase difference in metres,
/// (M − 1) × T × B. Zero outside the spatial band.
pub fn compute_nipd(spec: &ComplexSpectrogram, cfg: &FeatureConfig) -> Result<Array3<f64>> {
    phase_feature(spec, cfg, PhaseScale::Nipd)
}

/// Inter-channel phase difference in cycles, (M − 1) × T × B.
pub fn compute_ipd(spec: &ComplexSpectrogram, cfg: &FeatureConfig) -> Result<Array3<f64>> {
    phase_feature(spec, cfg, PhaseScale::Ipd)
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

fn bin_power(field: &ScmField, t: usize, bin: usize) -> f64 {
    let r = field.at(t, bin);
    let m = field.n_channels();
    (0..m).map(|i| r[[i, i]].re).sum::<f64>() / m as f64
}

/// Per-bin noise floor in dB: the configured percentile over frames of the
/// channel-averaged SCM power.
pub fn magnitude_floor_db(field: &ScmField, cfg: &FeatureConfig) -> Vec<f64> {
    field
        .bins()
        .into_par_iter()
        .map(|bin| {
            let mut db: Vec<f64> = (0..field.n_frames())
                .map(|t| 10.0 * (bin_power(field, t, bin) + LOG_FLOOR).log10())
                .collect();
            percentile(&mut db, cfg.noise_floor_percentile)
        })
        .collect()
}

/// EPV channels, (M − 1) × T × B, with the bin-selection mask (T × B, true
/// where the bin was in band and passed the enabled tests).
pub fn compute_epv_masked(field: &ScmField, cfg: &FeatureConfig) -> Result<(Array3<f64>, Array2<bool>)> {
    let m = field.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    if m > MAX_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "EPV supports at most {MAX_CHANNELS} channels, got {m}"
        )));
    }
    let axis = cfg.spectral_bins();
    let band = cfg.spatial_bins();
    let covered = field.bins();
    if band.start < covered.start || band.end > covered.end {
        return Err(Error::ShapeMismatch(format!(
            "SCM field covers bins {covered:?}, spatial band needs {band:?}"
        )));
    }
    let df = cfg.stft.freq_resolution();
    let factors: Vec<f64> = band
        .clone()
        .map(|b| PhaseScale::Nipd.factor(b as f64 * df, cfg.speed_of_sound))
        .collect();
    let floor_db = if cfg.use_magnitude_test {
        let all = magnitude_floor_db(field, cfg);
        band.clone().map(|b| all[b - covered.start]).collect()
    } else {
        Vec::new()
    };

    let n_t = field.n_frames();
    let n_b = axis.len();
    // Frame-major scratch, permuted into channel-major at the end.
    let mut values = Array3::<f64>::zeros((n_t, n_b, m - 1));
    let mut mask = Array2::<bool>::from_elem((n_t, n_b), false);
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(mask.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(t, (mut frame, mut frame_mask))| {
            let mut a = [Complex64::default(); MAX_CHANNELS * MAX_CHANNELS];
            let mut u = [Complex64::default(); MAX_CHANNELS];
            for (k, b) in band.clone().enumerate() {
                let r = field.at(t, b);
                if cfg.use_magnitude_test {
                    let power = (0..m).map(|i| r[[i, i]].re).sum::<f64>() / m as f64;
                    let db = 10.0 * (power + LOG_FLOOR).log10();
                    if db < floor_db[k] + cfg.magnitude_margin_db {
                        continue;
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        a[i * m + j] = r[[i, j]];
                    }
                }
                let (lambda, trace) = principal_unchecked(&mut a, m, &mut u);
                if cfg.use_coherence_test && !(trace > 0.0 && lambda / trace >= cfg.coherence_threshold) {
                    continue;
                }
                let col = b - axis.start;
                for c in 1..m {
                    let z = u[0].conj() * u[c];
                    frame[[col, c - 1]] = factors[k] * principal_arg(z.re, z.im);
                }
                frame_mask[col] = true;
            }
        });
    let values = values.permuted_axes([2, 0, 1]).as_standard_layout().into_owned();
    Ok((values, mask))
}

/// Eigenvector-based phase vector channels, (M − 1) × T × B.
pub fn compute_epv(field: &ScmField, cfg: &FeatureConfig) -> Result<Array3<f64>> {
    compute_epv_masked(field, cfg).map(|(values, _)| values)
}
