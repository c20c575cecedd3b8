//! On-disk formats: WAV audio, binary feature tensors with JSON sidecars and
//! annotation CSV files.

mod annotations;
mod tensor_file;
mod wav;

pub use annotations::{read_annotations, write_annotations};
pub use tensor_file::{
    read_feature, read_tensor, sidecar_path, write_feature, write_tensor, FeatureSidecar, HEADER_MAGIC,
};
pub use wav::{read_wav, write_wav};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
