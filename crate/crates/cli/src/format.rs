//! JSON scene and result documents.
//!
//! Both formats are versioned and reject unknown fields. Rotations are
//! stored row-major. Floats are written with the shortest representation
//! that parses back to the same `f64`, so documents round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use gp4pc::geometry::{GeneralizedCamera, Mat3, PinholeCamera, Rotation};
use gp4pc::synthbench::SyntheticProblem;
use gp4pc::{Correspondence, SimilarityTransform, Vec2, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCENE_VERSION: u32 = 1;
pub const RESULT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub center: [f64; 3],
    /// Camera-to-rig rotation, row-major.
    pub orientation: [f64; 9],
    pub focal_length: f64,
    pub image_size: [u32; 2],
    pub principal_point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceRecord {
    pub world_point: [f64; 3],
    pub camera_index: usize,
    pub pixel: [f64; 2],
}

/// `x ↦ scale · R · x + translation`, world to rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    pub scale: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    pub cameras: Vec<CameraRecord>,
    pub correspondences: Vec<CorrespondenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<TransformRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub variant: String,
    pub permutations: u8,
    pub iterations: usize,
    pub threshold_px: f64,
    pub seed: u64,
    pub best_iteration: usize,
    pub best_hypothesis_kind: String,
    /// `coplanar` or `general`.
    pub best_path: String,
    pub hypotheses_scored: usize,
    pub failed_samples: usize,
    pub coplanar_samples: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub version: u32,
    pub transform: TransformRecord,
    pub inlier_indices: Vec<usize>,
    /// Pixel reprojection error per correspondence; `null` when the point
    /// lands behind its camera.
    pub residuals_px: Vec<Option<f64>>,
    pub diagnostics: Diagnostics,
}

fn row_major(m: &Mat3) -> [f64; 9] {
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

fn from_row_major(r: &[f64; 9]) -> Mat3 {
    Mat3::from_fn(|i, j| r[3 * i + j])
}

impl TransformRecord {
    pub fn from_similarity(t: &SimilarityTransform) -> Self {
        Self { scale: t.scale, rotation: row_major(t.rotation.matrix()), translation: t.translation.into() }
    }

    pub fn to_similarity(&self) -> Result<SimilarityTransform> {
        let r = Rotation::new(from_row_major(&self.rotation)).context("transform rotation")?;
        SimilarityTransform::new(self.scale, r, Vec3::from(self.translation)).context("transform")
    }
}

/// A scene ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rig: GeneralizedCamera,
    pub correspondences: Vec<Correspondence>,
    pub ground_truth: Option<SimilarityTransform>,
}

impl SceneFile {
    pub fn from_problem(p: &SyntheticProblem) -> Self {
        let cameras = p
            .rig
            .cameras()
            .iter()
            .map(|c| {
                let (w, h) = c.image_size();
                CameraRecord {
                    center: c.center.into(),
                    orientation: row_major(c.orientation.matrix()),
                    focal_length: c.focal_length(),
                    image_size: [w, h],
                    principal_point: (*c.principal_point()).into(),
                }
            })
            .collect();
        let correspondences = p
            .correspondences
            .iter()
            .map(|c| CorrespondenceRecord {
                world_point: c.world_point.into(),
                camera_index: c.camera_index,
                pixel: c.pixel.into(),
            })
            .collect();
        Self {
            version: SCENE_VERSION,
            cameras,
            correspondences,
            ground_truth: Some(TransformRecord::from_similarity(&p.ground_truth)),
        }
    }

    /// Validates the document and builds the rig and correspondences.
    pub fn to_scene(&self) -> Result<Scene> {
        ensure!(self.version == SCENE_VERSION, "unsupported scene version {} (expected {SCENE_VERSION})", self.version);
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let r = Rotation::new(from_row_major(&c.orientation)).with_context(|| format!("camera {i} orientation"))?;
                PinholeCamera::new(
                    Vec3::from(c.center),
                    r,
                    c.focal_length,
                    c.image_size[0],
                    c.image_size[1],
                    Vec2::from(c.principal_point),
                )
                .with_context(|| format!("camera {i}"))
            })
            .collect::<Result<Vec<_>>>()?;
        let rig = GeneralizedCamera::new(cameras).context("scene has no cameras")?;
        let correspondences = self
            .correspondences
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if !c.world_point.iter().chain(&c.pixel).all(|v| v.is_finite()) {
                    bail!("correspondence {i} has non-finite coordinates");
                }
                Correspondence::observe(&rig, c.camera_index, Vec3::from(c.world_point), Vec2::from(c.pixel))
                    .with_context(|| format!("correspondence {i}"))
            })
            .collect::<Result<Vec<_>>>()?;
        let ground_truth = self.ground_truth.as_ref().map(TransformRecord::to_similarity).transpose()?;
        Ok(Scene { rig, correspondences, ground_truth })
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid document {}", path.display()))
}

/// Writes to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

/// Serializes rows as CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    write_atomic(path, &bytes)
}
