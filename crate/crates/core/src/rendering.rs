//! The forward model `x = f(p)`: a pinhole keypoint projector.
//!
//! The estimator treats rendering as a black box queried at poses. Here the
//! "render plus feature extraction" step is a projection of identified 3D
//! keypoints, so correspondence across renders is by keypoint id.

use std::collections::{HashMap, HashSet};

use nalgebra::{DVector, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::sampling::seeded_rng;

/// Points at or closer than this depth are classified as behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-9;

/// Fewest features that must be tracked across every render of an iteration.
pub const MIN_TRACKED_FEATURES: usize = 4;

pub type KeypointId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    #[serde(default)]
    pub gamma: f64,
    pub x0: f64,
    pub y0: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 640×480, `fx = fy = 500`, no skew, centered principal point.
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            gamma: 0.0,
            x0: 320.0,
            y0: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.gamma, self.x0, self.y0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig(
                "camera parameters must be finite".into(),
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidConfig("fx > 0 and fy > 0".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig(
                "image width and height must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..self.width as f64).contains(&u) && (0.0..self.height as f64).contains(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub id: KeypointId,
    pub position: Vector3<f64>,
}

/// Identified 3D keypoints in the object frame, stored in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    keypoints: Vec<Keypoint>,
}

impl TargetModel {
    pub fn new(mut keypoints: Vec<Keypoint>) -> Result<Self> {
        if keypoints.len() < 3 {
            return Err(Error::DegenerateModel(format!(
                "{} keypoints, at least 3 required",
                keypoints.len()
            )));
        }
        if keypoints
            .iter()
            .any(|k| !k.position.iter().all(|c| c.is_finite()))
        {
            return Err(Error::DegenerateModel(
                "non-finite keypoint coordinate".into(),
            ));
        }
        keypoints.sort_by_key(|k| k.id);
        if let Some(w) = keypoints.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DegenerateModel(format!(
                "duplicate keypoint id {}",
                w[0].id
            )));
        }
        Ok(Self { keypoints })
    }

    /// Model with ids `0..points.len()`.
    pub fn from_points(points: &[Vector3<f64>]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| Keypoint {
                    id: i as KeypointId,
                    position: *p,
                })
                .collect(),
        )
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub id: KeypointId,
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

/// Per-keypoint image coordinates in model (ascending id) order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    pub entries: Vec<Feature>,
}

impl FeatureObservation {
    pub fn visible_count(&self) -> usize {
        self.entries.iter().filter(|e| e.visible).count()
    }

    /// Stacked `(u, v)` of the given ids, or `None` if any of them is missing
    /// or not visible.
    pub fn features_for(&self, ids: &[KeypointId]) -> Option<FeatureVector> {
        let lookup: HashMap<KeypointId, &Feature> = self
            .entries
            .iter()
            .filter(|e| e.visible)
            .map(|e| (e.id, e))
            .collect();
        let mut out = Vec::with_capacity(2 * ids.len());
        for id in ids {
            let f = lookup.get(id)?;
            out.push(f.u);
            out.push(f.v);
        }
        Some(FeatureVector(DVector::from_vec(out)))
    }
}

/// Stacked `(u₁, v₁, …, u_k, v_k)` pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub DVector<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects an object-frame point: `b = R a + t`, `s·[u v 1]ᵀ = K b`.
pub fn project_point(
    a: &Vector3<f64>,
    pose: &Pose,
    camera: &CameraIntrinsics,
) -> Result<Projection> {
    let b = &pose.rotation() * *a + pose.translation;
    project_camera_point(&b, camera)
}

fn project_camera_point(b: &Vector3<f64>, camera: &CameraIntrinsics) -> Result<Projection> {
    let depth = b.z;
    if !(depth > DEPTH_EPSILON) {
        return Err(Error::BehindCamera { depth });
    }
    let u = (camera.fx * b.x + camera.gamma * b.y) / depth + camera.x0;
    let v = camera.fy * b.y / depth + camera.y0;
    Ok(Projection { u, v, depth })
}

/// Projects every keypoint. An entry is visible when it lies in front of the
/// camera and inside the image.
pub fn render(model: &TargetModel, pose: &Pose, camera: &CameraIntrinsics) -> FeatureObservation {
    let rotation = pose.rotation();
    let entries = model
        .keypoints()
        .iter()
        .map(|k| {
            let b = &rotation * k.position + pose.translation;
            match project_camera_point(&b, camera) {
                Ok(p) => Feature {
                    id: k.id,
                    u: p.u,
                    v: p.v,
                    visible: camera.contains(p.u, p.v),
                },
                Err(_) => Feature {
                    id: k.id,
                    u: f64::NAN,
                    v: f64::NAN,
                    visible: false,
                },
            }
        })
        .collect();
    FeatureObservation { entries }
}

/// A black-box pose-to-features forward model. Implementations must be
/// callable concurrently.
pub trait Renderer: Sync {
    fn render(&self, pose: &Pose) -> FeatureObservation;
}

#[derive(Debug, Clone)]
pub struct PinholeRenderer {
    pub model: TargetModel,
    pub camera: CameraIntrinsics,
}

impl PinholeRenderer {
    pub fn new(model: TargetModel, camera: CameraIntrinsics) -> Self {
        Self { model, camera }
    }
}

impl Renderer for PinholeRenderer {
    fn render(&self, pose: &Pose) -> FeatureObservation {
        render(&self.model, pose, &self.camera)
    }
}

/// Feature detection and matching imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionParams {
    /// Isotropic Gaussian pixel noise, standard deviation in pixels.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Fraction of visible entries replaced by uniform in-image outliers.
    #[serde(default)]
    pub outlier_fraction: f64,
    /// Fraction of all entries marked invisible.
    #[serde(default)]
    pub dropout_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma >= 0".into()));
        }
        for (name, f) in [
            ("outlier_fraction", self.outlier_fraction),
            ("dropout_fraction", self.dropout_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("{name} in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Applies, in order: Gaussian noise on visible entries, replacement of
/// `round(outlier_fraction · visible)` visible entries by uniform in-image
/// outliers, and dropout of `round(dropout_fraction · entries)` entries.
/// Deterministic in `params.seed`.
///
/// Panics if the fractions lie outside `[0, 1]` or `noise_sigma` is negative.
pub fn corrupt(
    obs: &FeatureObservation,
    params: &CorruptionParams,
    camera: &CameraIntrinsics,
) -> FeatureObservation {
    params
        .validate()
        .expect("corruption parameters out of range");
    let mut rng = seeded_rng(params.seed, 0);
    let mut out = obs.clone();

    if params.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, params.noise_sigma).expect("finite sigma");
        for e in out.entries.iter_mut().filter(|e| e.visible) {
            e.u += noise.sample(&mut rng);
            e.v += noise.sample(&mut rng);
        }
    }

    let visible: Vec<usize> = (0..out.entries.len())
        .filter(|&i| out.entries[i].visible)
        .collect();
    let n_outliers = (params.outlier_fraction * visible.len() as f64).round() as usize;
    if n_outliers > 0 {
        let mut picked = index::sample(&mut rng, visible.len(), n_outliers).into_vec();
        picked.sort_unstable();
        for k in picked {
            let e = &mut out.entries[visible[k]];
            e.u = rng.random_range(0.0..camera.width as f64);
            e.v = rng.random_range(0.0..camera.height as f64);
        }
    }

    let n = out.entries.len();
    let n_dropped = (params.dropout_fraction * n as f64).round() as usize;
    if n_dropped > 0 {
        let mut picked = index::sample(&mut rng, n, n_dropped).into_vec();
        picked.sort_unstable();
        for i in picked {
            out.entries[i].visible = false;
        }
    }
    out
}

/// Features visible in the reference and in every other observation.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonFeatures {
    pub ids: Vec<KeypointId>,
    pub reference: FeatureVector,
    pub others: Vec<FeatureVector>,
}

/// Intersects the visible ids of `reference` and all `others` (identity
/// correspondence by keypoint id) and stacks each observation's coordinates
/// in ascending id order.
pub fn common_features(
    reference: &FeatureObservation,
    others: &[FeatureObservation],
) -> Result<CommonFeatures> {
    let visible_sets: Vec<HashSet<KeypointId>> = others
        .iter()
        .map(|o| {
            o.entries
                .iter()
                .filter(|e| e.visible)
                .map(|e| e.id)
                .collect()
        })
        .collect();
    let mut ids: Vec<KeypointId> = reference
        .entries
        .iter()
        .filter(|e| e.visible && visible_sets.iter().all(|s| s.contains(&e.id)))
        .map(|e| e.id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < MIN_TRACKED_FEATURES {
        return Err(Error::InsufficientFeatures {
            found: ids.len(),
            required: MIN_TRACKED_FEATURES,
        });
    }
    let stack = |o: &FeatureObservation| o.features_for(&ids).expect("id visible by construction");
    Ok(CommonFeatures {
        reference: stack(reference),
        others: others.iter().map(stack).collect(),
        ids,
    })
}
