use std::borrow::Cow;

use ndarray::{s, Array3, Axis};
use rayon::prelude::*;

use rustfft::num_complex::Complex64;

use super::spatial::PhaseScale;
use super::{
    compute_epv, compute_gcc_phat, compute_ipd, compute_nipd, lag_axis, pair_list, principal_arg, AxisMeta,
    ChannelRole, FeatureConfig, FeatureKind, FeatureTensor,
};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::mel::{make_mel_filterbank, pool_row};
use crate::scm::estimate_scm_band;
use crate::stft::{frame_count, stft, ComplexSpectrogram, FrameAnalyzer, MultichannelAudio, LOG_FLOOR};

/// Extracts one feature tensor from a multichannel clip.
pub fn build_feature(audio: &MultichannelAudio, cfg: &FeatureConfig, geom: &ArrayGeometry) -> Result<FeatureTensor> {
    cfg.validate()?;
    let m = audio.n_channels();
    if m != geom.n_mics() {
        return Err(Error::ShapeMismatch(format!(
            "audio has {m} channels, geometry describes {} microphones",
            geom.n_mics()
        )));
    }
    if cfg.kind.is_salsa_family() && cfg.spatial_high_hz > geom.aliasing_hz(cfg.speed_of_sound) {
        log::debug!(
            "spatial band reaches {} Hz, above the array aliasing frequency {:.0} Hz",
            cfg.spatial_high_hz,
            geom.aliasing_hz(cfg.speed_of_sound)
        );
    }
    match cfg.kind {
        FeatureKind::SalsaLite => phase_family_fused(audio, cfg, PhaseScale::Nipd),
        FeatureKind::SalsaIpd => phase_family_fused(audio, cfg, PhaseScale::Ipd),
        FeatureKind::Salsa => salsa_family(&stft(audio, &cfg.stft)?, cfg),
        FeatureKind::MelSpecGcc => mel_spec_gcc(&stft(audio, &cfg.stft)?, cfg),
    }
}

const DB_PER_OCTAVE: f32 = 10.0 * std::f32::consts::LOG10_2;

/// Log power in dB, taken in single precision (the output precision) via
/// `log2`, which is cheaper than `log10`.
fn log_power_db(x: Complex64) -> f32 {
    DB_PER_OCTAVE * ((x.norm_sqr() + LOG_FLOOR) as f32).log2()
}

fn salsa_tensor(data: Array3<f32>, cfg: &FeatureConfig, role: fn(usize) -> ChannelRole) -> FeatureTensor {
    let m = data.shape()[0].div_ceil(2);
    let axis = cfg.spectral_bins();
    let mut channel_roles: Vec<ChannelRole> = (0..m).map(ChannelRole::Spectrogram).collect();
    channel_roles.extend((1..m).map(role));
    FeatureTensor {
        data,
        kind: cfg.kind,
        channel_roles,
        axis: AxisMeta::LinearFrequency {
            first_bin: axis.start,
            n_bins: axis.len(),
            hz_per_bin: cfg.stft.freq_resolution(),
        },
        config_hash: cfg.hash(),
    }
}

/// SALSA-Lite and SALSA-IPD computed frame by frame, without materialising
/// the full spectrogram. Matches `salsa_family` on the same input exactly.
fn phase_family_fused(audio: &MultichannelAudio, cfg: &FeatureConfig, scale: PhaseScale) -> Result<FeatureTensor> {
    let m = audio.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    let n_frames = frame_count(audio, &cfg.stft)?;
    let analyzer = FrameAnalyzer::new(&cfg.stft);
    let axis = cfg.spectral_bins();
    let band = cfg.spatial_bins();
    let df = cfg.stft.freq_resolution();
    let factors: Vec<f64> = band
        .clone()
        .map(|b| scale.factor(b as f64 * df, cfg.speed_of_sound))
        .collect();
    let signals: Vec<Cow<'_, [f64]>> = audio
        .samples
        .outer_iter()
        .map(|row| match row.to_slice() {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(row.to_vec()),
        })
        .collect();

    let mut data = Array3::<f32>::zeros((2 * m - 1, n_frames, axis.len()));
    data.axis_iter_mut(Axis(1)).into_par_iter().enumerate().for_each_init(
        || (analyzer.buffers(), vec![Complex64::default(); band.len()]),
        |(bufs, reference), (t, mut frame)| {
            for (c, signal) in signals.iter().enumerate() {
                let spectrum = analyzer.analyze(signal, t, bufs);
                for (dst, &x) in frame.row_mut(c).iter_mut().zip(&spectrum[axis.clone()]) {
                    *dst = log_power_db(x);
                }
                if c == 0 {
                    reference.copy_from_slice(&spectrum[band.clone()]);
                    continue;
                }
                let mut row = frame.row_mut(m + c - 1);
                for (k, b) in band.clone().enumerate() {
                    let z = reference[k].conj() * spectrum[b];
                    row[b - axis.start] = (factors[k] * principal_arg(z.re, z.im)) as f32;
                }
            }
        },
    );
    let role = match scale {
        PhaseScale::Nipd => ChannelRole::Nipd,
        PhaseScale::Ipd => ChannelRole::Ipd,
    };
    Ok(salsa_tensor(data, cfg, role))
}

fn salsa_family(spec: &ComplexSpectrogram, cfg: &FeatureConfig) -> Result<FeatureTensor> {
    let m = spec.n_channels();
    let axis = cfg.spectral_bins();
    let (spatial, role): (Array3<f64>, fn(usize) -> ChannelRole) = match cfg.kind {
        FeatureKind::SalsaLite => (compute_nipd(spec, cfg)?, ChannelRole::Nipd),
        FeatureKind::SalsaIpd => (compute_ipd(spec, cfg)?, ChannelRole::Ipd),
        FeatureKind::Salsa => {
            let band = cfg.spatial_bins();
            let field = estimate_scm_band(spec, cfg.scm_time_radius, cfg.scm_freq_radius, band)?;
            (compute_epv(&field, cfg)?, ChannelRole::Epv)
        }
        FeatureKind::MelSpecGcc => unreachable!(),
    };

    let mut data = Array3::<f32>::zeros((2 * m - 1, spec.n_frames(), axis.len()));
    {
        let (mut spectral, mut rest) = data.view_mut().split_at(Axis(0), m);
        for (c, mut chan) in spectral.axis_iter_mut(Axis(0)).enumerate() {
            let src = spec.data.index_axis(Axis(0), c);
            chan.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(t, mut row)| {
                    for (dst, &x) in row.iter_mut().zip(src.slice(s![t, axis.clone()])) {
                        *dst = log_power_db(x);
                    }
                });
        }
        rest.zip_mut_with(&spatial, |dst, &x| *dst = x as f32);
    }
    Ok(salsa_tensor(data, cfg, role))
}

fn mel_spec_gcc(spec: &ComplexSpectrogram, cfg: &FeatureConfig) -> Result<FeatureTensor> {
    let m = spec.n_channels();
    if m < 2 {
        return Err(Error::TooFewChannels { needed: 2, actual: m });
    }
    let k = cfg.mel_bands;
    let fb = make_mel_filterbank(
        k,
        cfg.stft.n_fft,
        cfg.stft.sample_rate,
        cfg.mel_f_min_hz,
        cfg.spec_cutoff_hz,
    )?;
    let gcc = compute_gcc_phat(spec, k)?;
    let pairs = pair_list(m);

    let mut data = Array3::<f32>::zeros((m + pairs.len(), spec.n_frames(), k));
    {
        let (mut mel, mut rest) = data.view_mut().split_at(Axis(0), m);
        for (c, mut chan) in mel.axis_iter_mut(Axis(0)).enumerate() {
            let src = spec.data.index_axis(Axis(0), c);
            chan.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each_init(
                || (vec![0.0; spec.n_bins()], vec![0.0; k]),
                |(power, pooled), (t, mut row)| {
                    for (p, x) in power.iter_mut().zip(src.index_axis(Axis(0), t)) {
                        *p = x.norm_sqr();
                    }
                    pool_row(&fb, power, pooled);
                    for (dst, &v) in row.iter_mut().zip(pooled.iter()) {
                        *dst = v as f32;
                    }
                },
            );
        }
        rest.zip_mut_with(&gcc, |dst, &x| *dst = x as f32);
    }

    let mut channel_roles: Vec<ChannelRole> = (0..m).map(ChannelRole::Spectrogram).collect();
    channel_roles.extend(pairs.iter().map(|&(i, j)| ChannelRole::Gcc(i, j)));
    Ok(FeatureTensor {
        data,
        kind: cfg.kind,
        channel_roles,
        axis: AxisMeta::MelAndLag {
            n_bands: k,
            f_min: cfg.mel_f_min_hz,
            f_max: cfg.spec_cutoff_hz,
            first_lag: lag_axis(k)[0],
        },
        config_hash: cfg.hash(),
    })
}
