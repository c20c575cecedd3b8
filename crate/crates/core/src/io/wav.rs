use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::stft::MultichannelAudio;

/// Reads a WAV file as channel-major samples. Integer PCM is scaled to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelAudio> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if channels == 0 || !interleaved.len().is_multiple_of(channels) {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} samples do not divide into {channels} channels",
            path.as_ref().display(),
            interleaved.len()
        )));
    }
    let n = interleaved.len() / channels;
    let samples = Array2::from_shape_fn((channels, n), |(c, i)| interleaved[i * channels + c]);
    MultichannelAudio::new(samples, spec.sample_rate)
}

/// Writes 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, audio: &MultichannelAudio) -> Result<()> {
    let channels = u16::try_from(audio.n_channels())
        .map_err(|_| Error::InvalidConfig(format!("{} channels is too many for WAV", audio.n_channels())))?;
    let spec = WavSpec {
        channels,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let path = path.as_ref();
    write_atomic(path, |w| {
        let mut buf = std::io::Cursor::new(Vec::new());
        {
            let mut writer = WavWriter::new(&mut buf, spec)?;
            for i in 0..audio.len() {
                for c in 0..audio.n_channels() {
                    writer.write_sample(audio.samples[[c, i]] as f32)?;
                }
            }
            writer.finalize()?;
        }
        w.write_all(buf.get_ref())?;
        Ok(())
    })
}
