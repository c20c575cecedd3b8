use ndarray::{Array3, Axis};
use rayon::prelude::*;
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Cross-spectrum magnitudes below this contribute nothing.
const PHAT_GUARD: f64 = 1e-10;

/// Microphone pairs `(i, j)` with `i < j`, in row-major order.
pub fn pair_list(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

/// Integer lags kept for `k_lags` outputs: `-k/2 + 1 ..= k/2`.
pub fn lag_axis(k_lags: usize) -> Vec<i64> {
    let half = (k_lags / 2) as i64;
    (-half + 1..=half).collect()
}

/// GCC-PHAT lag spectra for every microphone pair, P × T × K.
///
/// A positive lag means the first channel of the pair lags the second.
pub fn compute_gcc_phat(spec: &ComplexSpectrogram, k_lags: usize) -> Result<Array3<f64>> {
    let m = spec.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    let n_fft = spec.config.n_fft;
    if k_lags == 0 || !k_lags.is_multiple_of(2) || k_lags > n_fft {
        return Err(Error::InvalidConfig(format!(
            "lag count {k_lags} must be even and in 2..={n_fft}"
        )));
    }
    let n_bins = spec.n_bins();
    if n_bins != n_fft / 2 + 1 {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {n_bins} bins, expected {} for n_fft {n_fft}",
            n_fft / 2 + 1
        )));
    }
    let pairs = pair_list(m);
    let lag_index: Vec<usize> = lag_axis(k_lags)
        .into_iter()
        .map(|tau| tau.rem_euclid(n_fft as i64) as usize)
        .collect();
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let scale = 1.0 / n_fft as f64;

    let mut out = Array3::<f64>::zeros((pairs.len(), spec.n_frames(), k_lags));
    for (p, mut pair_out) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (i, j) = pairs[p];
        let xi = spec.data.index_axis(Axis(0), i);
        let xj = spec.data.index_axis(Axis(0), j);
        pair_out
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each_init(
                || (ifft.make_input_vec(), ifft.make_output_vec(), ifft.make_scratch_vec()),
                |(buf, lags, scratch), (t, mut row)| {
                    for f in 0..n_bins {
                        let cross = xi[[t, f]] * xj[[t, f]].conj();
                        let mag = cross.norm();
                        buf[f] = if mag > PHAT_GUARD {
                            cross / mag
                        } else {
                            Complex64::default()
                        };
                    }
                    // DC and Nyquist of a real signal's cross-spectrum are real.
                    buf[0].im = 0.0;
                    buf[n_bins - 1].im = 0.0;
                    ifft.process_with_scratch(buf, lags, scratch)
                        .expect("buffers come from the plan");
                    for (dst, &idx) in row.iter_mut().zip(&lag_index) {
                        *dst = lags[idx] * scale;
                    }
                },
            );
    }
    Ok(out)
}
