use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::{Event, SeldEventGrid};

/// Reads `frame,class,track,azimuth,elevation` rows (no header) into a grid of
/// 100 ms frames. The grid ends at the last annotated frame.
pub fn read_annotations(path: impl AsRef<Path>, n_classes: usize) -> Result<SeldEventGrid> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let mut grid = SeldEventGrid::new(0, n_classes);
    let mut last_frame = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Annotation {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", record.len())));
        }
        let int = |i: usize, name: &str| {
            record[i]
                .parse::<usize>()
                .map_err(|_| err(format!("{name} {:?} is not a non-negative integer", &record[i])))
        };
        let float = |i: usize, name: &str| {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{name} {:?} is not a number", &record[i])))
        };
        let frame = int(0, "frame")?;
        let class_id = int(1, "class")?;
        let track_id = int(2, "track")?;
        let azimuth = float(3, "azimuth")?;
        let elevation = float(4, "elevation")?;
        if class_id >= n_classes {
            return Err(err(format!("class {class_id} >= {n_classes}")));
        }
        if !(-180.0..=180.0).contains(&azimuth) {
            return Err(err(format!("azimuth {azimuth} outside [-180, 180]")));
        }
        if !(-90.0..=90.0).contains(&elevation) {
            return Err(err(format!("elevation {elevation} outside [-90, 90]")));
        }
        if frame < last_frame {
            return Err(err(format!("frame {frame} follows frame {last_frame}")));
        }
        last_frame = frame;
        grid.push(
            frame,
            Event {
                class_id,
                track_id,
                azimuth,
                elevation,
            },
        );
    }
    Ok(grid)
}

pub fn write_annotations(path: impl AsRef<Path>, grid: &SeldEventGrid) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for (k, frame) in grid.frames.iter().enumerate() {
            for e in frame {
                writeln!(w, "{k},{},{},{},{}", e.class_id, e.track_id, e.azimuth, e.elevation)?;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut g = SeldEventGrid::new(4, 12);
        g.push(
            1,
            Event {
                class_id: 3,
                track_id: 0,
                azimuth: -170.25,
                elevation: 12.0,
            },
        );
        g.push(
            1,
            Event {
                class_id: 7,
                track_id: 1,
                azimuth: 0.1 + 0.2,
                elevation: -45.0,
            },
        );
        g.push(
            5,
            Event {
                class_id: 0,
                track_id: 0,
                azimuth: 180.0,
                elevation: 90.0,
            },
        );
        write_annotations(&path, &g).unwrap();
        let back = read_annotations(&path, 12).unwrap();
        assert_eq!(back.frames.len(), 6);
        assert_eq!(back.frames[1], g.frames[1]);
        assert_eq!(back.frames[5], g.frames[5]);
    }

    #[test]
    fn accepts_integer_angles_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "0,1,0,-50,10\n2, 4, 0, 30, -5\n").unwrap();
        let g = read_annotations(&path, 12).unwrap();
        assert_eq!(g.n_frames(), 3);
        assert_eq!(g.frames[2][0].azimuth, 30.0);
    }

    #[test]
    fn empty_file_is_empty_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "").unwrap();
        assert_eq!(read_annotations(&path, 12).unwrap().n_frames(), 0);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        for (text, line) in [
            ("0,1,0,0,0\n1,12,0,0,0\n", 2),
            ("0,1,0,190,0\n", 1),
            ("0,1,0,0,-91\n", 1),
            ("3,1,0,0,0\n2,1,0,0,0\n", 2),
            ("0,x,0,0,0\n", 1),
            ("0,1,0,nan,0\n", 1),
        ] {
            std::fs::write(&path, text).unwrap();
            match read_annotations(&path, 12) {
                Err(Error::Annotation { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        std::fs::write(&path, "0,1,0\n").unwrap();
        assert!(read_annotations(&path, 12).is_err());
    }
}
