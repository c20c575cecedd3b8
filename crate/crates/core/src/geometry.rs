//! Microphone array geometry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of sound used throughout unless configured otherwise, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Radius of the spherical baffle array used by the TAU-NIGENS MIC format, m.
pub const TNSSE_RADIUS: f64 = 0.042;

/// Cartesian unit vector for azimuth (from +x toward +y) and elevation (from
/// the horizontal plane), both in degrees.
pub fn unit_direction(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::TooFewChannels {
                needed: 2,
                actual: positions.len(),
            });
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("microphone positions must be finite".into()));
        }
        let geom = Self { positions };
        if geom.d_max() <= 0.0 {
            return Err(Error::InvalidConfig("all microphones are co-located".into()));
        }
        Ok(geom)
    }

    /// Builds a geometry without the spacing checks. Used for degenerate
    /// arrays in simulation (e.g. co-located microphones).
    pub fn unchecked(positions: Vec<[f64; 3]>) -> Self {
        Self { positions }
    }

    /// Microphones on a sphere of `radius` at the given (azimuth, elevation)
    /// pairs in degrees.
    pub fn spherical(radius: f64, directions: &[(f64, f64)]) -> Result<Self> {
        let positions = directions
            .iter()
            .map(|&(az, el)| unit_direction(az, el).map(|x| x * radius))
            .collect();
        Self::new(positions)
    }

    /// Tetrahedral MIC-format array of the TAU-NIGENS Spatial Sound Events
    /// datasets.
    pub fn tnsse_mic() -> Self {
        Self::spherical(
            TNSSE_RADIUS,
            &[(45.0, 35.0), (-45.0, -35.0), (135.0, -35.0), (-135.0, 35.0)],
        )
        .expect("preset geometry is valid")
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn n_mics(&self) -> usize {
        self.positions.len()
    }

    /// Spatial features are always referenced to the first microphone.
    pub fn reference_index(&self) -> usize {
        0
    }

    /// Largest pairwise microphone distance in metres.
    pub fn d_max(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                d = d.max(distance(a, b));
            }
        }
        d
    }

    /// Frequency above which inter-channel phase can exceed ±π.
    pub fn aliasing_hz(&self, speed_of_sound: f64) -> f64 {
        speed_of_sound / (2.0 * self.d_max())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GeometryFile = toml::from_str(text)?;
        file.into_geometry()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk geometry description. Exactly one of `preset`, `positions` or
/// `mic` must be given:
///
/// ```toml
/// preset = "tnsse-mic"
/// # or
/// positions = [[0.05, 0.0, 0.0], [-0.05, 0.0, 0.0]]
/// # or
/// [[mic]]
/// azimuth = 45.0
/// elevation = 35.0
/// radius = 0.042
/// ```
#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub mic: Option<Vec<SphericalMic>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SphericalMic {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
}

impl GeometryFile {
    pub fn into_geometry(self) -> Result<ArrayGeometry> {
        match (self.preset, self.positions, self.mic) {
            (Some(name), None, None) => match name.as_str() {
                "tnsse-mic" => Ok(ArrayGeometry::tnsse_mic()),
                other => Err(Error::InvalidConfig(format!("unknown geometry preset `{other}`"))),
            },
            (None, Some(positions), None) => ArrayGeometry::new(positions),
            (None, None, Some(mics)) => ArrayGeometry::new(
                mics.iter()
                    .map(|m| unit_direction(m.azimuth, m.elevation).map(|x| x * m.radius))
                    .collect(),
            ),
            _ => Err(Error::InvalidConfig(
                "geometry needs exactly one of `preset`, `positions` or `mic`".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_direction_examples() {
        let u = unit_direction(0.0, 0.0);
        assert!((u[0] - 1.0).abs() < 1e-15 && u[1].abs() < 1e-15 && u[2].abs() < 1e-15);
        let u = unit_direction(90.0, 0.0);
        assert!(u[0].abs() < 1e-15 && (u[1] - 1.0).abs() < 1e-15);
        let u = unit_direction(45.0, 35.0);
        assert!((u[0] - 0.5792).abs() < 5e-5);
        assert!((u[1] - 0.5792).abs() < 5e-5);
        assert!((u[2] - 0.5736).abs() < 5e-5);
        assert!((dot(&u, &u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tnsse_geometry() {
        let g = ArrayGeometry::tnsse_mic();
        assert_eq!(g.n_mics(), 4);
        // Nearly regular tetrahedron inscribed in a 4.2 cm sphere.
        let d = g.d_max();
        assert!((d - 0.0686).abs() < 5e-4, "d_max = {d}");
        let alias = g.aliasing_hz(SPEED_OF_SOUND);
        assert!((alias - SPEED_OF_SOUND / (2.0 * d)).abs() < 1e-9);
        assert!(alias > 2000.0);
    }

    #[test]
    fn parses_all_file_forms() {
        let g = ArrayGeometry::from_toml_str("preset = \"tnsse-mic\"").unwrap();
        assert_eq!(g, ArrayGeometry::tnsse_mic());
        let g = ArrayGeometry::from_toml_str("positions = [[0.05, 0, 0], [-0.05, 0, 0]]").unwrap();
        assert!((g.d_max() - 0.1).abs() < 1e-12);
        let g = ArrayGeometry::from_toml_str(
            "[[mic]]\nazimuth = 0\nelevation = 0\nradius = 0.1\n[[mic]]\nazimuth = 180\nelevation = 0\nradius = 0.1\n",
        )
        .unwrap();
        assert!((g.d_max() - 0.2).abs() < 1e-12);
        assert!(ArrayGeometry::from_toml_str("").is_err());
        assert!(ArrayGeometry::from_toml_str("preset = \"foo\"").is_err());
        assert!(ArrayGeometry::from_toml_str("positions = [[0, 0, 0]]").is_err());
    }
}
