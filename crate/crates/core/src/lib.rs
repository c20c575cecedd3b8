//! Spatial audio features for sound event localization and detection.
//!
//! The crate computes SALSA, SALSA-Lite, SALSA-IPD and MelSpecGCC feature
//! tensors from multichannel recordings, provides the channel-swap, masking
//! and frequency-shift augmentations, a farfield array simulator with ground
//! truth annotations, and the segment-based SELD metrics.
//!
//! ```no_run
//! use seldkit::{build_feature, read_wav, ArrayGeometry, FeatureConfig, FeatureKind};
//!
//! let audio = read_wav("clip.wav")?;
//! let feat = build_feature(&audio, &FeatureConfig::new(FeatureKind::SalsaLite), &ArrayGeometry::tnsse_mic())?;
//! assert_eq!(feat.n_channels(), 7);
//! # Ok::<(), seldkit::Error>(())
//! ```

pub mod augment;
pub mod bench;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod mel;
pub mod metrics;
pub mod scm;
pub mod simulate;
pub mod stft;

pub use augment::{
    apply_mask, apply_swap_audio, apply_swap_feature, apply_swap_labels, derive_swap_table, freq_shift, MaskMode,
    MaskSpec, SwapTransform,
};
pub use bench::{run_bench, synthetic_clip, BenchReport};
pub use error::{Error, Result};
pub use features::{build_feature, fit_scaler, ChannelRole, FeatureConfig, FeatureKind, FeatureTensor, Scaler};
pub use geometry::ArrayGeometry;
pub use io::{read_annotations, read_feature, read_wav, write_annotations, write_feature, write_wav};
pub use metrics::{evaluate, seld_error, Event, MetricsReport, SeldEventGrid};
pub use simulate::{rdoa, steering_vector, synthesize, SceneSpec, SourceSignal, SourceSpec};
pub use stft::{stft, MultichannelAudio, StftConfig};
