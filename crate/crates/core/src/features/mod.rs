//! SELD feature tensors: MelSpecGCC, SALSA, SALSA-IPD and SALSA-Lite.
//!
//! SALSA-family tensors stack `M` linear-frequency log-power spectrograms with
//! `M - 1` spatial channels referenced to microphone 0, all on the same bin
//! axis (FFT bins `1..=B`, DC excluded). MelSpecGCC stacks `M` log-mel
//! spectrograms with the `M (M - 1) / 2` pairwise GCC-PHAT lag spectra.

mod build;
mod gcc;
mod scaler;
mod spatial;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_SOUND;
use crate::stft::StftConfig;

pub use build::build_feature;
pub use gcc::{compute_gcc_phat, lag_axis, pair_list};
pub use scaler::{fit_scaler, Scaler};
pub use spatial::{compute_epv, compute_epv_masked, compute_ipd, compute_nipd, magnitude_floor_db};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    #[serde(rename = "melspecgcc")]
    MelSpecGcc,
    Salsa,
    SalsaIpd,
    SalsaLite,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::SalsaLite,
        FeatureKind::SalsaIpd,
        FeatureKind::MelSpecGcc,
        FeatureKind::Salsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::MelSpecGcc => "melspecgcc",
            FeatureKind::Salsa => "salsa",
            FeatureKind::SalsaIpd => "salsa-ipd",
            FeatureKind::SalsaLite => "salsa-lite",
        }
    }

    pub fn is_salsa_family(self) -> bool {
        !matches!(self, FeatureKind::MelSpecGcc)
    }

    /// Number of output channels for an `m`-microphone array.
    pub fn n_channels(self, m: usize) -> usize {
        match self {
            FeatureKind::MelSpecGcc => (m * m + m) / 2,
            _ => 2 * m - 1,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "melspecgcc" => Ok(FeatureKind::MelSpecGcc),
            "salsa" => Ok(FeatureKind::Salsa),
            "salsa-ipd" => Ok(FeatureKind::SalsaIpd),
            "salsa-lite" => Ok(FeatureKind::SalsaLite),
            other => Err(Error::InvalidConfig(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub stft: StftConfig,
    /// Upper edge of the spectrogram axis.
    pub spec_cutoff_hz: f64,
    pub spatial_low_hz: f64,
    /// Spatial channels are zero above this frequency. Unused by MelSpecGCC.
    pub spatial_high_hz: f64,
    /// Mel band count, also the GCC-PHAT lag count.
    pub mel_bands: usize,
    pub mel_f_min_hz: f64,
    pub use_magnitude_test: bool,
    pub use_coherence_test: bool,
    pub coherence_threshold: f64,
    pub magnitude_margin_db: f64,
    /// Percentile of per-bin power over the clip taken as its noise floor.
    pub noise_floor_percentile: f64,
    pub scm_time_radius: usize,
    pub scm_freq_radius: usize,
    pub speed_of_sound: f64,
}

impl FeatureConfig {
    pub fn new(kind: FeatureKind) -> Self {
        let salsa = kind == FeatureKind::Salsa;
        Self {
            kind,
            stft: StftConfig::default(),
            spec_cutoff_hz: 9000.0,
            spatial_low_hz: 50.0,
            spatial_high_hz: if salsa { 4000.0 } else { 2000.0 },
            mel_bands: 128,
            mel_f_min_hz: 50.0,
            use_magnitude_test: salsa,
            use_coherence_test: salsa,
            coherence_threshold: 0.5,
            magnitude_margin_db: 5.0,
            noise_floor_percentile: 5.0,
            scm_time_radius: 1,
            scm_freq_radius: 1,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let nyquist = self.stft.nyquist();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.spec_cutoff_hz > 0.0 && self.spec_cutoff_hz <= nyquist) {
            return bad(format!(
                "spec_cutoff_hz {} must be in (0, {nyquist}]",
                self.spec_cutoff_hz
            ));
        }
        if self.spectral_bins().is_empty() {
            return bad("spectrogram cutoff leaves no bins above DC".into());
        }
        if self.speed_of_sound.is_nan() || self.speed_of_sound <= 0.0 {
            return bad("speed_of_sound must be positive".into());
        }
        match self.kind {
            FeatureKind::MelSpecGcc => {
                if self.mel_bands < 2 || !self.mel_bands.is_multiple_of(2) || self.mel_bands > self.stft.n_fft {
                    return bad(format!(
                        "mel_bands {} must be even and at most n_fft (it is also the lag count)",
                        self.mel_bands
                    ));
                }
                if !(self.mel_f_min_hz >= 0.0 && self.mel_f_min_hz < self.spec_cutoff_hz) {
                    return bad("mel_f_min_hz must lie below spec_cutoff_hz".into());
                }
            }
            _ => {
                if !(self.spatial_low_hz >= 0.0
                    && self.spatial_low_hz < self.spatial_high_hz
                    && self.spatial_high_hz <= self.spec_cutoff_hz)
                {
                    return bad(format!(
                        "need 0 <= spatial_low_hz < spatial_high_hz <= spec_cutoff_hz, got {} / {} / {}",
                        self.spatial_low_hz, self.spatial_high_hz, self.spec_cutoff_hz
                    ));
                }
                if !(0.0..=100.0).contains(&self.noise_floor_percentile) {
                    return bad("noise_floor_percentile must be within [0, 100]".into());
                }
            }
        }
        Ok(())
    }

    /// FFT bins on the SALSA-family frequency axis: `1..=floor(cutoff / df)`.
    pub fn spectral_bins(&self) -> Range<usize> {
        let df = self.stft.freq_resolution();
        let last = ((self.spec_cutoff_hz / df + 1e-9).floor() as usize).min(self.stft.n_bins() - 1);
        1..last + 1
    }

    /// FFT bins whose centre frequency lies in `[spatial_low_hz, spatial_high_hz]`.
    pub fn spatial_bins(&self) -> Range<usize> {
        let df = self.stft.freq_resolution();
        let axis = self.spectral_bins();
        let lo = ((self.spatial_low_hz / df - 1e-9).ceil() as usize).max(axis.start);
        let hi = ((self.spatial_high_hz / df + 1e-9).floor() as usize + 1).min(axis.end);
        lo..hi.max(lo)
    }

    /// Short digest of the canonical JSON form, stored with feature files.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Partial configuration, as read from a config file or built from CLI flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfigOverrides {
    pub sample_rate: Option<u32>,
    pub win_length: Option<usize>,
    pub hop_length: Option<usize>,
    pub n_fft: Option<usize>,
    pub center: Option<bool>,
    pub spec_cutoff_hz: Option<f64>,
    pub spatial_low_hz: Option<f64>,
    pub spatial_high_hz: Option<f64>,
    pub mel_bands: Option<usize>,
    pub mel_f_min_hz: Option<f64>,
    pub use_magnitude_test: Option<bool>,
    pub use_coherence_test: Option<bool>,
    pub coherence_threshold: Option<f64>,
    pub magnitude_margin_db: Option<f64>,
    pub noise_floor_percentile: Option<f64>,
    pub scm_time_radius: Option<usize>,
    pub scm_freq_radius: Option<usize>,
    pub speed_of_sound: Option<f64>,
}

impl FeatureConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Fields set in `other` win.
    pub fn merged_with(mut self, other: &FeatureConfigOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            sample_rate,
            win_length,
            hop_length,
            n_fft,
            center,
            spec_cutoff_hz,
            spatial_low_hz,
            spatial_high_hz,
            mel_bands,
            mel_f_min_hz,
            use_magnitude_test,
            use_coherence_test,
            coherence_threshold,
            magnitude_margin_db,
            noise_floor_percentile,
            scm_time_radius,
            scm_freq_radius,
            speed_of_sound
        );
        self
    }

    pub fn apply(&self, cfg: &mut FeatureConfig) {
        macro_rules! set {
            ($target:expr, $f:ident) => {
                if let Some(v) = self.$f {
                    $target = v;
                }
            };
        }
        set!(cfg.stft.sample_rate, sample_rate);
        set!(cfg.stft.win_length, win_length);
        set!(cfg.stft.hop_length, hop_length);
        set!(cfg.stft.n_fft, n_fft);
        set!(cfg.stft.center, center);
        set!(cfg.spec_cutoff_hz, spec_cutoff_hz);
        set!(cfg.spatial_low_hz, spatial_low_hz);
        set!(cfg.spatial_high_hz, spatial_high_hz);
        set!(cfg.mel_bands, mel_bands);
        set!(cfg.mel_f_min_hz, mel_f_min_hz);
        set!(cfg.use_magnitude_test, use_magnitude_test);
        set!(cfg.use_coherence_test, use_coherence_test);
        set!(cfg.coherence_threshold, coherence_threshold);
        set!(cfg.magnitude_margin_db, magnitude_margin_db);
        set!(cfg.noise_floor_percentile, noise_floor_percentile);
        set!(cfg.scm_time_radius, scm_time_radius);
        set!(cfg.scm_freq_radius, scm_freq_radius);
        set!(cfg.speed_of_sound, speed_of_sound);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelRole {
    Spectrogram(usize),
    Gcc(usize, usize),
    Epv(usize),
    Ipd(usize),
    Nipd(usize),
}

impl ChannelRole {
    pub fn is_spectrogram(self) -> bool {
        matches!(self, ChannelRole::Spectrogram(_))
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, ChannelRole::Epv(_) | ChannelRole::Ipd(_) | ChannelRole::Nipd(_))
    }

    /// Whether the last tensor axis of this channel is a frequency axis.
    pub fn is_frequency_axis(self) -> bool {
        !matches!(self, ChannelRole::Gcc(..))
    }
}

/// What the last tensor axis means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AxisMeta {
    /// Every channel shares FFT bins `first_bin..first_bin + n_bins`.
    LinearFrequency {
        first_bin: usize,
        n_bins: usize,
        hz_per_bin: f64,
    },
    /// Spectrogram channels use mel bands, GCC channels use integer lags
    /// `first_lag..first_lag + n_bands`.
    MelAndLag {
        n_bands: usize,
        f_min: f64,
        f_max: f64,
        first_lag: i64,
    },
}

/// Axis descriptor for a single channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelAxis {
    Frequency { first_bin: usize, hz_per_bin: f64 },
    Mel { f_min: f64, f_max: f64 },
    Lag { first_lag: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// C × T × B.
    pub data: Array3<f32>,
    pub kind: FeatureKind,
    pub channel_roles: Vec<ChannelRole>,
    pub axis: AxisMeta,
    pub config_hash: String,
}

impl FeatureTensor {
    pub fn n_channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_bins(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channel_axis(&self, c: usize) -> ChannelAxis {
        match (&self.axis, self.channel_roles[c]) {
            (
                AxisMeta::LinearFrequency {
                    first_bin, hz_per_bin, ..
                },
                _,
            ) => ChannelAxis::Frequency {
                first_bin: *first_bin,
                hz_per_bin: *hz_per_bin,
            },
            (AxisMeta::MelAndLag { first_lag, .. }, ChannelRole::Gcc(..)) => ChannelAxis::Lag { first_lag: *first_lag },
            (AxisMeta::MelAndLag { f_min, f_max, .. }, _) => ChannelAxis::Mel {
                f_min: *f_min,
                f_max: *f_max,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_roles.len() != self.n_channels() {
            return Err(Error::ShapeMismatch(format!(
                "{} channel roles for {} channels",
                self.channel_roles.len(),
                self.n_channels()
            )));
        }
        let expected_bins = match &self.axis {
            AxisMeta::LinearFrequency { n_bins, .. } => *n_bins,
            AxisMeta::MelAndLag { n_bands, .. } => *n_bands,
        };
        if expected_bins != self.n_bins() {
            return Err(Error::ShapeMismatch(format!(
                "axis describes {expected_bins} bins, tensor has {}",
                self.n_bins()
            )));
        }
        Ok(())
    }
}

/// Principal-value argument in `(-pi, pi]`.
pub(crate) fn principal_arg(re: f64, im: f64) -> f64 {
    let a = im.atan2(re);
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_axes() {
        let cfg = FeatureConfig::new(FeatureKind::SalsaLite);
        assert_eq!(cfg.spectral_bins(), 1..193);
        assert_eq!(cfg.spatial_bins(), 2..43);
        let cfg = FeatureConfig::new(FeatureKind::Salsa);
        assert_eq!(cfg.spatial_bins(), 2..86);
        assert!(cfg.use_magnitude_test && cfg.use_coherence_test);
        assert!(!FeatureConfig::new(FeatureKind::SalsaIpd).use_coherence_test);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in FeatureKind::ALL {
            assert_eq!(kind.name().parse::<FeatureKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
        }
        assert!("mfcc".parse::<FeatureKind>().is_err());
        assert_eq!(FeatureKind::SalsaLite.n_channels(4), 7);
        assert_eq!(FeatureKind::MelSpecGcc.n_channels(4), 10);
    }

    #[test]
    fn validation() {
        for kind in FeatureKind::ALL {
            FeatureConfig::new(kind).validate().unwrap();
        }
        let mut cfg = FeatureConfig::new(FeatureKind::SalsaLite);
        cfg.spatial_high_hz = 10_000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::new(FeatureKind::MelSpecGcc);
        cfg.mel_bands = 127;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_precedence() {
        let file = FeatureConfigOverrides::from_toml_str("spatial_high_hz = 3000.0\nmel_bands = 64").unwrap();
        let flags = FeatureConfigOverrides {
            spatial_high_hz: Some(1500.0),
            ..Default::default()
        };
        let merged = file.merged_with(&flags);
        let mut cfg = FeatureConfig::new(FeatureKind::SalsaLite);
        merged.apply(&mut cfg);
        assert_eq!(cfg.spatial_high_hz, 1500.0);
        assert_eq!(cfg.mel_bands, 64);
        assert!(FeatureConfigOverrides::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = FeatureConfig::new(FeatureKind::SalsaLite);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.spatial_high_hz = 4000.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn principal_arg_range() {
        assert_eq!(principal_arg(-1.0, -0.0), std::f64::consts::PI);
        assert_eq!(principal_arg(-1.0, 0.0), std::f64::consts::PI);
        assert_eq!(principal_arg(1.0, 0.0), 0.0);
    }
}
