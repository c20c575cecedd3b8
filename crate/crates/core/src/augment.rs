//! Channel swapping, random cutout / TF masking and frequency shifting.
//!
//! A swap transform pairs a channel permutation with the DOA map
//! `azimuth -> s_phi * azimuth + k * 90`, `elevation -> s_theta * elevation`.
//! Output channel `i` takes input channel `perm[i]`, chosen so that the
//! permuted recording equals the recording of the mapped scene.

use ndarray::{s, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AxisMeta, ChannelRole, FeatureTensor};
use crate::geometry::{ArrayGeometry, SPEED_OF_SOUND};
use crate::metrics::SeldEventGrid;
use crate::stft::MultichannelAudio;

pub const MAX_FREQ_SHIFT: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapTransform {
    pub channel_perm: Vec<usize>,
    pub azimuth_sign: i8,
    /// Azimuth offset in quarter turns, `0..4`.
    pub quarter_turns: u8,
    pub elevation_sign: i8,
}

impl SwapTransform {
    pub fn identity(m: usize) -> Self {
        Self {
            channel_perm: (0..m).collect(),
            azimuth_sign: 1,
            quarter_turns: 0,
            elevation_sign: 1,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.azimuth_sign == 1
            && self.quarter_turns == 0
            && self.elevation_sign == 1
            && self.channel_perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn map_doa(&self, azimuth: f64, elevation: f64) -> (f64, f64) {
        (
            wrap_azimuth(f64::from(self.azimuth_sign) * azimuth + 90.0 * f64::from(self.quarter_turns)),
            f64::from(self.elevation_sign) * elevation,
        )
    }

    /// The transform equal to applying `self` and then `next`.
    pub fn then(&self, next: &SwapTransform) -> Result<SwapTransform> {
        if self.channel_perm.len() != next.channel_perm.len() {
            return Err(Error::PermutationMismatch {
                expected: self.channel_perm.len(),
                actual: next.channel_perm.len(),
            });
        }
        let k = (i16::from(next.azimuth_sign) * i16::from(self.quarter_turns) + i16::from(next.quarter_turns))
            .rem_euclid(4) as u8;
        Ok(SwapTransform {
            channel_perm: next.channel_perm.iter().map(|&j| self.channel_perm[j]).collect(),
            azimuth_sign: self.azimuth_sign * next.azimuth_sign,
            quarter_turns: k,
            elevation_sign: self.elevation_sign * next.elevation_sign,
        })
    }

    pub fn inverse(&self) -> SwapTransform {
        let mut perm = vec![0; self.channel_perm.len()];
        for (i, &p) in self.channel_perm.iter().enumerate() {
            perm[p] = i;
        }
        SwapTransform {
            channel_perm: perm,
            azimuth_sign: self.azimuth_sign,
            quarter_turns: (-(i16::from(self.azimuth_sign)) * i16::from(self.quarter_turns)).rem_euclid(4) as u8,
            elevation_sign: self.elevation_sign,
        }
    }

    fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let y = f64::from(self.azimuth_sign) * p[1];
        let (sin, cos) = match self.quarter_turns {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
        [
            cos * p[0] - sin * y,
            sin * p[0] + cos * y,
            f64::from(self.elevation_sign) * p[2],
        ]
    }
}

/// Wraps degrees into `[-180, 180)`.
pub fn wrap_azimuth(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Keeps the DOA symmetries among the 16 candidates that map the microphone
/// set onto itself within `tol` metres. The identity comes first.
pub fn derive_swap_table(geom: &ArrayGeometry, tol: f64) -> Vec<SwapTransform> {
    let positions = geom.positions();
    let m = positions.len();
    if m < 2 {
        return vec![SwapTransform::identity(m)];
    }
    let mut table = Vec::new();
    for elevation_sign in [1i8, -1] {
        for azimuth_sign in [1i8, -1] {
            for quarter_turns in 0..4u8 {
                let mut t = SwapTransform {
                    channel_perm: Vec::with_capacity(m),
                    azimuth_sign,
                    quarter_turns,
                    elevation_sign,
                };
                let rotated: Vec<[f64; 3]> = positions.iter().map(|&p| t.rotate(p)).collect();
                // perm[i] is the microphone that lands on microphone i.
                let perm: Option<Vec<usize>> = positions
                    .iter()
                    .map(|target| {
                        let hits: Vec<usize> = rotated
                            .iter()
                            .enumerate()
                            .filter(|(_, r)| crate::geometry::distance(r, target) <= tol)
                            .map(|(j, _)| j)
                            .collect();
                        (hits.len() == 1).then(|| hits[0])
                    })
                    .collect();
                if let Some(perm) = perm {
                    let mut seen = vec![false; m];
                    if perm.iter().all(|&p| !std::mem::replace(&mut seen[p], true)) {
                        t.channel_perm = perm;
                        table.push(t);
                    }
                }
            }
        }
    }
    if table.is_empty() {
        table.push(SwapTransform::identity(m));
    }
    table
}

fn check_arity(t: &SwapTransform, m: usize) -> Result<()> {
    if t.channel_perm.len() != m {
        return Err(Error::PermutationMismatch {
            expected: m,
            actual: t.channel_perm.len(),
        });
    }
    Ok(())
}

pub fn apply_swap_audio(audio: &MultichannelAudio, t: &SwapTransform) -> Result<MultichannelAudio> {
    check_arity(t, audio.n_channels())?;
    let samples = audio.samples.select(Axis(0), &t.channel_perm);
    MultichannelAudio::new(samples, audio.sample_rate)
}

pub fn apply_swap_labels(events: &SeldEventGrid, t: &SwapTransform) -> SeldEventGrid {
    let mut out = events.clone();
    for e in out.frames.iter_mut().flatten() {
        (e.azimuth, e.elevation) = t.map_doa(e.azimuth, e.elevation);
    }
    out
}

/// Swaps an extracted feature tensor: spectrograms are permuted, spatial
/// channels are re-referenced to the new microphone 0 and re-wrapped, and GCC
/// pairs are permuted with the lag axis reversed when a pair flips order.
/// The one lag with no mirror image repeats its neighbour.
pub fn apply_swap_feature(feat: &FeatureTensor, t: &SwapTransform) -> Result<FeatureTensor> {
    let m = feat.channel_roles.iter().filter(|r| r.is_spectrogram()).count();
    check_arity(t, m)?;
    let perm = &t.channel_perm;
    let index_of = |role: ChannelRole| {
        feat.channel_roles
            .iter()
            .position(|&r| r == role)
            .ok_or_else(|| Error::ShapeMismatch(format!("feature has no {role:?} channel")))
    };
    let n_bins = feat.n_bins();
    let mut out = feat.clone();
    for (c, role) in feat.channel_roles.iter().enumerate() {
        match *role {
            ChannelRole::Spectrogram(i) => {
                let src = index_of(ChannelRole::Spectrogram(perm[i]))?;
                out.data
                    .index_axis_mut(Axis(0), c)
                    .assign(&feat.data.index_axis(Axis(0), src));
            }
            ChannelRole::Gcc(i, j) => {
                let (a, b) = (perm[i], perm[j]);
                let dst = out.data.index_axis_mut(Axis(0), c);
                if a < b {
                    let src = feat.data.index_axis(Axis(0), index_of(ChannelRole::Gcc(a, b))?);
                    let mut dst = dst;
                    dst.assign(&src);
                } else {
                    let src = feat.data.index_axis(Axis(0), index_of(ChannelRole::Gcc(b, a))?);
                    let mut dst = dst;
                    // Lag index k holds lag first + k; its mirror is index n - 2 - k.
                    for (mut row, srow) in dst.outer_iter_mut().zip(src.outer_iter()) {
                        for k in 0..n_bins {
                            row[k] = srow[(n_bins - 2).saturating_sub(k).min(n_bins - 1)];
                        }
                    }
                }
            }
            ChannelRole::Nipd(i) | ChannelRole::Ipd(i) | ChannelRole::Epv(i) => {
                let value = |k: usize, t_idx: usize, b: usize| -> Result<f32> {
                    if k == 0 {
                        return Ok(0.0);
                    }
                    let r = match role {
                        ChannelRole::Nipd(_) => ChannelRole::Nipd(k),
                        ChannelRole::Ipd(_) => ChannelRole::Ipd(k),
                        _ => ChannelRole::Epv(k),
                    };
                    Ok(feat.data[[index_of(r)?, t_idx, b]])
                };
                let period: Vec<f64> = (0..n_bins)
                    .map(|b| match (role, &feat.axis) {
                        (ChannelRole::Ipd(_), _) => 1.0,
                        (
                            _,
                            AxisMeta::LinearFrequency {
                                first_bin, hz_per_bin, ..
                            },
                        ) => SPEED_OF_SOUND / ((first_bin + b) as f64 * hz_per_bin),
                        _ => f64::INFINITY,
                    })
                    .collect();
                for ti in 0..feat.n_frames() {
                    for (b, &p) in period.iter().enumerate() {
                        let d = f64::from(value(perm[i], ti, b)?) - f64::from(value(perm[0], ti, b)?);
                        let wrapped = if p.is_finite() { d - p * (d / p).round() } else { d };
                        out.data[[c, ti, b]] = wrapped as f32;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// One time × frequency rectangle.
    RectCutout,
    /// A full-height time stripe plus a full-width frequency stripe.
    CrossSpecAugment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub mode: MaskMode,
    /// Frames.
    pub time_span: usize,
    /// Bins.
    pub freq_span: usize,
    /// Masks are meant to follow standardisation, where 0 is the mean.
    pub fill_value: f32,
    pub seed: u64,
}

impl MaskSpec {
    /// Spans drawn uniformly up to 10% of each axis of a `frames × bins` tensor.
    pub fn random(mode: MaskMode, frames: usize, bins: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        Self {
            mode,
            time_span: rng.random_range(0..=frames / 10),
            freq_span: rng.random_range(0..=bins / 10),
            fill_value: 0.0,
            seed,
        }
    }
}

pub fn apply_mask(feat: &FeatureTensor, spec: &MaskSpec) -> FeatureTensor {
    let mut out = feat.clone();
    let (_, t_len, b_len) = feat.data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tw = spec.time_span.min(t_len);
    let fw = spec.freq_span.min(b_len);
    let t0 = rng.random_range(0..=t_len - tw);
    let f0 = rng.random_range(0..=b_len - fw);
    match spec.mode {
        MaskMode::RectCutout => {
            out.data
                .slice_mut(s![.., t0..t0 + tw, f0..f0 + fw])
                .fill(spec.fill_value);
        }
        MaskMode::CrossSpecAugment => {
            out.data.slice_mut(s![.., t0..t0 + tw, ..]).fill(spec.fill_value);
            out.data.slice_mut(s![.., .., f0..f0 + fw]).fill(spec.fill_value);
        }
    }
    out
}

/// Shifts every frequency-axis channel by `shift` bins (positive moves
/// content up), repeating edge bins into the vacated positions. GCC channels
/// are left as they are.
pub fn freq_shift(feat: &FeatureTensor, shift: i32) -> Result<FeatureTensor> {
    if shift.unsigned_abs() > MAX_FREQ_SHIFT {
        return Err(Error::ShiftTooLarge {
            shift,
            max: MAX_FREQ_SHIFT,
        });
    }
    let mut out = feat.clone();
    if shift == 0 {
        return Ok(out);
    }
    let n = feat.n_bins() as i64;
    let src_index: Vec<usize> = (0..n)
        .map(|b| (b - i64::from(shift)).clamp(0, n - 1) as usize)
        .collect();
    for (c, role) in feat.channel_roles.iter().enumerate() {
        if !role.is_frequency_axis() {
            continue;
        }
        let src = feat.data.index_axis(Axis(0), c);
        let mut dst = out.data.index_axis_mut(Axis(0), c);
        for (mut row, srow) in dst.outer_iter_mut().zip(src.outer_iter()) {
            for (b, &k) in src_index.iter().enumerate() {
                row[b] = srow[k];
            }
        }
    }
    Ok(out)
}

/// Convenience for shape checks in callers.
pub fn same_layout(a: &FeatureTensor, b: &FeatureTensor) -> bool {
    a.data.dim() == b.data.dim() && a.channel_roles == b.channel_roles
}
