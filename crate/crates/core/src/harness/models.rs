//! Synthetic targets and the model/camera file formats.
//!
//! Model file (TOML):
//!
//! ```toml
//! keypoints = [
//!   { id = 0, x = 1.0, y = 1.0, z = 1.0 },
//!   { id = 1, x = -1.0, y = 1.0, z = 1.0 },
//! ]
//! ```
//!
//! or equivalently one `[[keypoints]]` table per point. Camera file (TOML):
//! `fx`, `fy`, `gamma` (optional, default 0), `x0`, `y0`, `width`, `height`,
//! all in pixels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::error::Error;
use crate::rendering::{CameraIntrinsics, Keypoint, KeypointId, TargetModel};
use crate::sampling::seeded_rng;

/// Coplanarity threshold on the smallest eigenvalue of the point covariance.
pub const COPLANARITY_EIGENVALUE: f64 = 1e-6;
const MAX_MODEL_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    /// Vertices of the cube `[-1, 1]³`.
    Cube8,
    /// Twelve fixed points without symmetries.
    Asymmetric12,
    /// `n` points uniform in `[-1, 1]³`.
    Random { n: usize, seed: u64 },
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Cube8 => write!(f, "cube8"),
            ModelSpec::Asymmetric12 => write!(f, "asymmetric12"),
            ModelSpec::Random { n, seed } => write!(f, "random:{n}:{seed}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = String;

    /// `cube8`, `asymmetric12` or `random:<n>:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cube8" => Ok(ModelSpec::Cube8),
            "asymmetric12" => Ok(ModelSpec::Asymmetric12),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["random", n, seed] => Ok(ModelSpec::Random {
                        n: n.parse().map_err(|_| format!("bad point count in {s:?}"))?,
                        seed: seed.parse().map_err(|_| format!("bad seed in {s:?}"))?,
                    }),
                    _ => Err(format!(
                        "unknown model spec {s:?} (expected cube8, asymmetric12 or random:<n>:<seed>)"
                    )),
                }
            }
        }
    }
}

const ASYMMETRIC12: [[f64; 3]; 12] = [
    [0.9, 0.1, -0.3],
    [-0.7, 0.6, 0.2],
    [0.2, -0.8, 0.5],
    [-0.4, -0.3, -0.9],
    [0.6, 0.7, 0.8],
    [-0.9, -0.6, 0.4],
    [0.3, 0.4, -0.7],
    [-0.2, 0.9, -0.1],
    [0.8, -0.5, -0.6],
    [-0.5, 0.1, 0.9],
    [0.1, -0.2, 0.0],
    [0.5, -0.95, -0.45],
];

pub fn generate_model(spec: &ModelSpec) -> Result<TargetModel, Error> {
    match *spec {
        ModelSpec::Cube8 => {
            let mut points = Vec::with_capacity(8);
            for x in [-1.0, 1.0] {
                for y in [-1.0, 1.0] {
                    for z in [-1.0, 1.0] {
                        points.push(Vector3::new(x, y, z));
                    }
                }
            }
            TargetModel::from_points(&points)
        }
        ModelSpec::Asymmetric12 => TargetModel::from_points(&ASYMMETRIC12.map(Vector3::from)),
        ModelSpec::Random { n, seed } => {
            if n < 4 {
                return Err(Error::DegenerateModel(format!(
                    "random model needs n >= 4, got {n}"
                )));
            }
            let mut rng = seeded_rng(seed, 0);
            for _ in 0..MAX_MODEL_ATTEMPTS {
                let points: Vec<Vector3<f64>> = (0..n)
                    .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                    .collect();
                if smallest_spread(&points) >= COPLANARITY_EIGENVALUE {
                    return TargetModel::from_points(&points);
                }
            }
            Err(Error::DegenerateModel(format!(
                "points remained coplanar after {MAX_MODEL_ATTEMPTS} attempts"
            )))
        }
    }
}

/// Smallest eigenvalue of the point covariance.
pub fn smallest_spread(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix3<f64>>()
        / n;
    cov.symmetric_eigenvalues().min()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRecord {
    id: KeypointId,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    keypoints: Vec<KeypointRecord>,
}

pub fn parse_model(text: &str) -> Result<TargetModel, String> {
    let file: ModelFile = toml::from_str(text).map_err(|e| e.to_string())?;
    TargetModel::new(
        file.keypoints
            .into_iter()
            .map(|k| Keypoint {
                id: k.id,
                position: Vector3::new(k.x, k.y, k.z),
            })
            .collect(),
    )
    .map_err(|e| e.to_string())
}

pub fn model_to_toml(model: &TargetModel) -> String {
    let file = ModelFile {
        keypoints: model
            .keypoints()
            .iter()
            .map(|k| KeypointRecord {
                id: k.id,
                x: k.position.x,
                y: k.position.y,
                z: k.position.z,
            })
            .collect(),
    };
    toml::to_string(&file).expect("model serializes")
}

pub fn load_model(path: &Path) -> Result<TargetModel, HarnessError> {
    let text = super::read_config(path)?;
    parse_model(&text).map_err(|message| HarnessError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn save_model(model: &TargetModel, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, model_to_toml(model)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_camera(path: &Path) -> Result<CameraIntrinsics, HarnessError> {
    let text = super::read_config(path)?;
    let camera: CameraIntrinsics = toml::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    camera
        .validate()
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    Ok(camera)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube8_vertices() {
        let m = generate_model(&ModelSpec::Cube8).unwrap();
        assert_eq!(m.len(), 8);
        for k in m.keypoints() {
            assert!(k.position.iter().all(|c| c.abs() == 1.0));
        }
        let mut seen: Vec<_> = m.keypoints().iter().map(|k| k.position).collect();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn asymmetric12_spans_three_dimensions() {
        let m = generate_model(&ModelSpec::Asymmetric12).unwrap();
        assert_eq!(m.len(), 12);
        let pts: Vec<_> = m.keypoints().iter().map(|k| k.position).collect();
        assert!(smallest_spread(&pts) > 0.05);
    }

    #[test]
    fn random_models_are_deterministic_and_non_coplanar() {
        let spec = ModelSpec::Random { n: 4, seed: 17 };
        let a = generate_model(&spec).unwrap();
        assert_eq!(a, generate_model(&spec).unwrap());
        for seed in 0..50 {
            let m = generate_model(&ModelSpec::Random { n: 4, seed }).unwrap();
            let pts: Vec<_> = m.keypoints().iter().map(|k| k.position).collect();
            // Independent check: a tetrahedron is non-degenerate iff its
            // volume is nonzero.
            let vol = (pts[1] - pts[0])
                .cross(&(pts[2] - pts[0]))
                .dot(&(pts[3] - pts[0]));
            assert!(vol.abs() > 1e-6);
            assert!(smallest_spread(&pts) >= COPLANARITY_EIGENVALUE);
        }
        assert!(generate_model(&ModelSpec::Random { n: 3, seed: 0 }).is_err());
    }

    #[test]
    fn spread_detects_planar_points() {
        let planar = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        assert!(smallest_spread(&planar) < COPLANARITY_EIGENVALUE);
    }

    #[test]
    fn model_spec_parsing() {
        assert_eq!("cube8".parse(), Ok(ModelSpec::Cube8));
        assert_eq!(
            "random:6:9".parse(),
            Ok(ModelSpec::Random { n: 6, seed: 9 })
        );
        assert!("random:x:1".parse::<ModelSpec>().is_err());
        assert!("sphere".parse::<ModelSpec>().is_err());
        let spec = ModelSpec::Random { n: 5, seed: 2 };
        assert_eq!(spec.to_string().parse(), Ok(spec));
    }

    #[test]
    fn model_file_round_trips() {
        let m = generate_model(&ModelSpec::Random { n: 7, seed: 3 }).unwrap();
        assert_eq!(parse_model(&model_to_toml(&m)).unwrap(), m);
        let inline = "keypoints = [{id = 3, x = 0.0, y = 0.0, z = 0.0}, {id = 1, x = 1.0, y = 0.0, z = 0.0}, {id = 2, x = 0.0, y = 1.0, z = 0.0}]";
        let m = parse_model(inline).unwrap();
        assert_eq!(m.keypoints()[0].id, 1);
        assert!(parse_model("keypoints = [{id = 1, x = 0.0, y = 0.0, z = 0.0, w = 1.0}]").is_err());
    }
}
