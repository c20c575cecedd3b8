//! Mel filterbank construction and log-mel pooling.
//!
//! Band edges are spaced uniformly on the `2595 log10(1 + f / 700)` scale.
//! Each linear bin is treated as covering `[f - df/2, f + df/2]` and receives
//! the integral of the band's triangle over that interval, so narrow bands at
//! the bottom of the axis still land on a bin even when no bin centre falls
//! inside the triangle. Rows are normalised to unit sum.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::stft::LOG_FLOOR;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// K × F_lin weights.
    pub weights: Array2<f64>,
    pub f_min: f64,
    pub f_max: f64,
    /// Inclusive-exclusive range of non-zero columns per band.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn n_bands(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn support(&self, band: usize) -> (usize, usize) {
        self.support[band]
    }

    /// Centre frequency of each band in Hz.
    pub fn center_frequencies(&self) -> Vec<f64> {
        let k = self.n_bands();
        let lo = hz_to_mel(self.f_min);
        let step = (hz_to_mel(self.f_max) - lo) / (k + 1) as f64;
        (1..=k).map(|i| mel_to_hz(lo + step * i as f64)).collect()
    }
}

/// Area under a unit-height triangle `(left, centre, right)` from `left` to `x`.
fn triangle_cdf(left: f64, centre: f64, right: f64, x: f64) -> f64 {
    if x <= left {
        0.0
    } else if x <= centre {
        (x - left).powi(2) / (2.0 * (centre - left))
    } else if x < right {
        (centre - left) / 2.0 + ((right - centre).powi(2) - (right - x).powi(2)) / (2.0 * (right - centre))
    } else {
        (right - left) / 2.0
    }
}

pub fn make_mel_filterbank(k: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<MelFilterbank> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if k == 0 {
        return Err(Error::InvalidConfig("mel band count must be positive".into()));
    }
    if n_fft < 2 {
        return Err(Error::InvalidConfig("n_fft must be at least 2".into()));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidConfig(format!(
            "mel range must satisfy 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let df = f64::from(sample_rate) / n_fft as f64;
    let mel_lo = hz_to_mel(f_min);
    let step = (hz_to_mel(f_max) - mel_lo) / (k + 1) as f64;
    let mut edges: Vec<f64> = (0..k + 2).map(|i| mel_to_hz(mel_lo + step * i as f64)).collect();
    // Pin the outer edges so round-off cannot push them past the requested range.
    edges[0] = f_min;
    edges[k + 1] = f_max;

    let mut weights = Array2::<f64>::zeros((k, n_bins));
    let mut support = Vec::with_capacity(k);
    for band in 0..k {
        let (left, centre, right) = (edges[band], edges[band + 1], edges[band + 2]);
        let mut row = weights.row_mut(band);
        let first = (((left / df) - 0.5).floor().max(0.0) as usize).min(n_bins - 1);
        let last = (((right / df) + 0.5).ceil() as usize).min(n_bins - 1);
        let mut lo_nz = usize::MAX;
        let mut hi_nz = 0;
        for b in first..=last {
            let lo = (b as f64 - 0.5) * df;
            let hi = (b as f64 + 0.5) * df;
            let w = triangle_cdf(left, centre, right, hi) - triangle_cdf(left, centre, right, lo);
            if w > 0.0 {
                row[b] = w;
                lo_nz = lo_nz.min(b);
                hi_nz = b + 1;
            }
        }
        let sum: f64 = row.sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::EmptyBand { band });
        }
        row.mapv_inplace(|w| w / sum);
        support.push((lo_nz, hi_nz));
    }
    Ok(MelFilterbank {
        weights,
        f_min,
        f_max,
        support,
    })
}

/// Pools a linear power tensor (M × T × F) into dB mel bands (M × T × K).
pub fn apply_mel(power: &Array3<f64>, fb: &MelFilterbank) -> Result<Array3<f64>> {
    let (m, t, f) = power.dim();
    if f != fb.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "power spectrum has {f} bins, filterbank expects {}",
            fb.n_bins()
        )));
    }
    let k = fb.n_bands();
    let mut out = Array3::<f64>::zeros((m, t, k));
    ndarray::Zip::from(out.lanes_mut(Axis(2)))
        .and(power.lanes(Axis(2)))
        .par_for_each(|mut dst, src| {
            for (band, slot) in dst.iter_mut().enumerate() {
                let (lo, hi) = fb.support[band];
                let mut acc = 0.0;
                for b in lo..hi {
                    acc += fb.weights[[band, b]] * src[b];
                }
                *slot = 10.0 * (acc + LOG_FLOOR).log10();
            }
        });
    Ok(out)
}

/// Log-mel directly from per-bin power rows, used by the feature builder.
pub(crate) fn pool_row(fb: &MelFilterbank, power_row: &[f64], out: &mut [f64]) {
    for (band, slot) in out.iter_mut().enumerate() {
        let (lo, hi) = fb.support[band];
        let weights = fb.weights.row(band);
        let acc: f64 = (lo..hi).map(|b| weights[b] * power_row[b]).sum();
        *slot = 10.0 * (acc + LOG_FLOOR).log10();
    }
}
