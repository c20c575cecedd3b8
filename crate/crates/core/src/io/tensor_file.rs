use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::features::{AxisMeta, ChannelRole, FeatureKind, FeatureTensor};

/// Eight magic bytes, then `dtype: u8` (0 = f32 little-endian), `ndim: u8`,
/// `ndim` little-endian `u64` dimensions and the row-major payload.
pub const HEADER_MAGIC: &[u8; 8] = b"SELDFT01";
const DTYPE_F32: u8 = 0;
const MAX_DIMS: u8 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub kind: FeatureKind,
    pub config_hash: String,
    pub channel_roles: Vec<ChannelRole>,
    pub axis: AxisMeta,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn header_len(ndim: usize) -> u64 {
    (HEADER_MAGIC.len() + 2 + 8 * ndim) as u64
}

pub fn write_tensor(path: impl AsRef<Path>, data: &ArrayD<f32>) -> Result<()> {
    if data.ndim() > usize::from(MAX_DIMS) {
        return Err(Error::FeatureFile(format!(
            "{} dimensions exceeds {MAX_DIMS}",
            data.ndim()
        )));
    }
    write_atomic(path.as_ref(), |w| {
        w.write_all(HEADER_MAGIC)?;
        w.write_all(&[DTYPE_F32, data.ndim() as u8])?;
        for &d in data.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for x in data.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    })
}

/// Reads a tensor file, validating the header and total size before touching
/// the payload.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ArrayD<f32>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::FeatureFile(format!("{}: {msg}", path.display()));
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut fixed = [0u8; 10];
    r.read_exact(&mut fixed).map_err(|_| bad("truncated header".into()))?;
    if &fixed[..8] != HEADER_MAGIC {
        return Err(bad("bad magic".into()));
    }
    if fixed[8] != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype {}", fixed[8])));
    }
    let ndim = fixed[9];
    if ndim > MAX_DIMS {
        return Err(bad(format!("{ndim} dimensions exceeds {MAX_DIMS}")));
    }
    let mut shape = Vec::with_capacity(usize::from(ndim));
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| bad("truncated header".into()))?;
        shape.push(u64::from_le_bytes(b));
    }
    let count = shape
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let expected = header_len(usize::from(ndim)) + count;
    if file_len != expected {
        return Err(bad(format!("file is {file_len} bytes, header implies {expected}")));
    }
    let mut payload = vec![0u8; count as usize];
    r.read_exact(&mut payload)?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let shape: Vec<usize> = shape.into_iter().map(|d| d as usize).collect();
    ArrayD::from_shape_vec(IxDyn(&shape), values).map_err(|e| bad(e.to_string()))
}

/// Writes the tensor file and its JSON sidecar.
pub fn write_feature(path: impl AsRef<Path>, feat: &FeatureTensor) -> Result<()> {
    feat.validate()?;
    let path = path.as_ref();
    write_tensor(path, &feat.data.clone().into_dyn())?;
    let sidecar = FeatureSidecar {
        kind: feat.kind,
        config_hash: feat.config_hash.clone(),
        channel_roles: feat.channel_roles.clone(),
        axis: feat.axis.clone(),
    };
    write_atomic(&sidecar_path(path), |w| {
        serde_json::to_writer_pretty(&mut *w, &sidecar)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_feature(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let sidecar: FeatureSidecar = serde_json::from_reader(BufReader::new(
        File::open(&side).map_err(|e| Error::FeatureFile(format!("{}: {e}", side.display())))?,
    ))?;
    let data = read_tensor(path)?;
    let data: Array3<f32> = data
        .into_dimensionality()
        .map_err(|_| Error::FeatureFile(format!("{}: feature tensors are 3-D", path.display())))?;
    let feat = FeatureTensor {
        data,
        kind: sidecar.kind,
        channel_roles: sidecar.channel_roles,
        axis: sidecar.axis,
        config_hash: sidecar.config_hash,
    };
    feat.validate()?;
    Ok(feat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn sample() -> FeatureTensor {
        FeatureTensor {
            data: Array3::from_shape_fn((3, 5, 4), |(c, t, b)| (c as f32 - 1.5) * (t * 4 + b) as f32 / 7.0),
            kind: FeatureKind::SalsaLite,
            channel_roles: vec![
                ChannelRole::Spectrogram(0),
                ChannelRole::Spectrogram(1),
                ChannelRole::Nipd(1),
            ],
            axis: AxisMeta::LinearFrequency {
                first_bin: 1,
                n_bins: 4,
                hz_per_bin: 46.875,
            },
            config_hash: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn feature_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let feat = sample();
        write_feature(&path, &feat).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 34 + 3 * 5 * 4 * 4);
        let back = read_feature(&path).unwrap();
        assert_eq!(back, feat);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(json["kind"], "salsa-lite");
        assert_eq!(json["config_hash"], "0123456789abcdef");
    }

    #[test]
    fn truncated_and_corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_feature(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        std::fs::write(&path, &magic).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
        let mut dtype = bytes.clone();
        dtype[8] = 3;
        std::fs::write(&path, &dtype).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
        // Dimensions so large the byte count overflows.
        let mut huge = bytes[..10].to_vec();
        for _ in 0..3 {
            huge.extend_from_slice(&u64::MAX.to_le_bytes());
        }
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&huge).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::FeatureFile(_))));
    }

    #[test]
    fn missing_sidecar_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_tensor(&path, &sample().data.into_dyn()).unwrap();
        assert!(read_feature(&path).is_err());
        assert_eq!(read_tensor(&path).unwrap().shape(), &[3, 5, 4]);
    }

    #[test]
    fn sidecar_path_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("a/b.bin")), PathBuf::from("a/b.bin.json"));
    }
}
