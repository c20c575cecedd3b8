use serde::{Deserialize, Serialize};

use super::{ChannelRole, FeatureTensor};
use crate::error::{Error, Result};

/// Per-channel standardisation statistics. Only spectrogram channels are
/// scaled; every other channel keeps mean 0 and std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub channel_roles: Vec<ChannelRole>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose variance was zero; their std was clamped to 1.
    pub clamped: Vec<bool>,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn from_slice<'a>(values: impl Iterator<Item = &'a f32> + Clone) -> Self {
        let count = values.clone().count() as f64;
        if count == 0.0 {
            return Self::default();
        }
        let mean = values.clone().map(|&x| f64::from(x)).sum::<f64>() / count;
        let m2 = values.map(|&x| (f64::from(x) - mean).powi(2)).sum();
        Self { count, mean, m2 }
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// Fits global per-channel statistics over a stream of tensors. All tensors
/// must share channel roles and bin count; frame counts may differ.
pub fn fit_scaler<'a, I>(features: I) -> Result<Scaler>
where
    I: IntoIterator<Item = &'a FeatureTensor>,
{
    let mut iter = features.into_iter();
    let first = iter.next().ok_or(Error::EmptyStream)?;
    let roles = first.channel_roles.clone();
    let n_bins = first.n_bins();
    let mut moments = vec![Moments::default(); roles.len()];

    for feat in std::iter::once(first).chain(iter) {
        if feat.channel_roles != roles || feat.n_bins() != n_bins {
            return Err(Error::ShapeMismatch(
                "feature stream mixes channel layouts or bin counts".into(),
            ));
        }
        for (c, role) in roles.iter().enumerate() {
            if role.is_spectrogram() {
                let chan = feat.data.index_axis(ndarray::Axis(0), c);
                moments[c] = moments[c].merge(Moments::from_slice(chan.iter()));
            }
        }
    }

    let mut mean = vec![0.0; roles.len()];
    let mut std = vec![1.0; roles.len()];
    let mut clamped = vec![false; roles.len()];
    for (c, role) in roles.iter().enumerate() {
        if !role.is_spectrogram() {
            continue;
        }
        let mo = moments[c];
        mean[c] = mo.mean;
        let sd = if mo.count > 0.0 { (mo.m2 / mo.count).sqrt() } else { 0.0 };
        if sd > 0.0 {
            std[c] = sd;
        } else {
            log::warn!("channel {c} has zero variance; std clamped to 1");
            clamped[c] = true;
        }
    }
    Ok(Scaler {
        channel_roles: roles,
        mean,
        std,
        clamped,
    })
}

impl Scaler {
    pub fn apply(&self, feat: &mut FeatureTensor) -> Result<()> {
        if feat.channel_roles != self.channel_roles {
            return Err(Error::ShapeMismatch(
                "scaler fitted on a different channel layout".into(),
            ));
        }
        for (c, mut chan) in feat.data.outer_iter_mut().enumerate() {
            let (mean, std) = (self.mean[c], self.std[c]);
            if mean != 0.0 || std != 1.0 {
                chan.mapv_inplace(|x| ((f64::from(x) - mean) / std) as f32);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AxisMeta, FeatureKind};
    use ndarray::Array3;

    fn tensor(data: Array3<f32>) -> FeatureTensor {
        FeatureTensor {
            axis: AxisMeta::LinearFrequency {
                first_bin: 1,
                n_bins: data.shape()[2],
                hz_per_bin: 46.875,
            },
            data,
            kind: FeatureKind::SalsaLite,
            channel_roles: vec![
                ChannelRole::Spectrogram(0),
                ChannelRole::Spectrogram(1),
                ChannelRole::Nipd(1),
            ],
            config_hash: String::new(),
        }
    }

    #[test]
    fn pooled_statistics_match_direct_arithmetic() {
        let a = tensor(Array3::from_shape_fn((3, 2, 3), |(c, t, b)| {
            (c * 7 + t * 3 + b) as f32 * 0.5 - 4.0
        }));
        let b = tensor(Array3::from_shape_fn((3, 4, 3), |(c, t, b)| {
            ((c + 1) * (t + 2) * (b + 1)) as f32 * 0.25
        }));
        let scaler = fit_scaler([&a, &b]).unwrap();
        for c in 0..2 {
            let values: Vec<f64> = a
                .data
                .index_axis(ndarray::Axis(0), c)
                .iter()
                .chain(b.data.index_axis(ndarray::Axis(0), c).iter())
                .map(|&x| f64::from(x))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!((scaler.mean[c] - mean).abs() < 1e-9);
            assert!((scaler.std[c] - var.sqrt()).abs() < 1e-9);
        }
        assert_eq!((scaler.mean[2], scaler.std[2]), (0.0, 1.0));
        assert!(scaler.clamped.iter().all(|&x| !x));
    }

    #[test]
    fn constant_channel_is_clamped() {
        let a = tensor(Array3::from_elem((3, 5, 4), 2.5));
        let scaler = fit_scaler([&a]).unwrap();
        assert_eq!(scaler.std[0], 1.0);
        assert!(scaler.clamped[0] && scaler.clamped[1] && !scaler.clamped[2]);
        let mut b = a.clone();
        scaler.apply(&mut b).unwrap();
        assert!(b.data.index_axis(ndarray::Axis(0), 0).iter().all(|&x| x == 0.0));
        assert!(b.data.index_axis(ndarray::Axis(0), 2).iter().all(|&x| x == 2.5));
    }

    #[test]
    fn empty_and_mixed_streams_fail() {
        assert!(matches!(fit_scaler(std::iter::empty()), Err(Error::EmptyStream)));
        let a = tensor(Array3::zeros((3, 2, 3)));
        let b = tensor(Array3::zeros((3, 2, 4)));
        assert!(fit_scaler([&a, &b]).is_err());
    }
}
