//! Synthetic scenes, error metrics and the benchmark runners built on them.

use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    Correspondence, GeneralizedCamera, Mat3, PinholeCamera, Rotation, SimilarityTransform, Vec2, Vec3,
};
use crate::pipeline::{self, Hypothesis, SolverPath, SolverVariant};
use crate::robust::{self, RansacConfig, DEFAULT_THRESHOLD_PX};
use crate::seeding;

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3 {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    fn half_extent(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.max[i] - self.min[i]))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::from_fn(|i, _| rng.random_range(self.min[i]..self.max[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    RandomSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub num_points: usize,
    pub point_cube: Box3,
    pub num_cameras: usize,
    pub camera_box: Box3,
    pub focal_length: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub noise_sigma_px: f64,
    pub outlier_fraction: f64,
    pub transform: TransformKind,
    pub coplanar: bool,
    pub seed: u64,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        Self {
            num_points: 100,
            point_cube: Box3::new([-10.0; 3], [10.0; 3]),
            num_cameras: 10,
            camera_box: Box3::new([-5.0, -5.0, 10.0], [5.0, 5.0, 20.0]),
            focal_length: 1000.0,
            image_width: 1000,
            image_height: 1000,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
            transform: TransformKind::Identity,
            coplanar: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecipeError {
    #[error("invalid scene recipe: {0}")]
    Invalid(&'static str),
}

impl SceneRecipe {
    pub fn validate(&self) -> Result<(), RecipeError> {
        let bad = |m| Err(RecipeError::Invalid(m));
        if self.num_points == 0 {
            return bad("num_points must be positive");
        }
        if self.num_cameras == 0 {
            return bad("num_cameras must be positive");
        }
        if !self.point_cube.is_valid() || !self.camera_box.is_valid() {
            return bad("boxes must be non-degenerate");
        }
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return bad("focal length must be positive");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be positive");
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return bad("noise sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub correspondences: Vec<Correspondence>,
    pub rig: GeneralizedCamera,
    /// Maps world points into the rig frame.
    pub ground_truth: SimilarityTransform,
    /// Distance from each camera center to the rig-frame point.
    pub ground_truth_depths: Vec<f64>,
    pub inlier_mask: Vec<bool>,
    /// Rig-frame positions `ground_truth(world_point)`.
    pub rig_points: Vec<Vec3>,
}

impl SyntheticProblem {
    /// RMS distance of the rig-frame points from their centroid.
    pub fn scene_scale(&self) -> f64 {
        scene_scale(&self.rig_points)
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        (0..self.inlier_mask.len()).filter(|&i| self.inlier_mask[i]).collect()
    }
}

pub fn scene_scale(points: &[Vec3]) -> f64 {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vec3>() / n;
    (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / n).sqrt()
}

/// Uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    Rotation::from_matrix_unchecked(*uq.to_rotation_matrix().matrix())
}

fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    let rotation = random_rotation(rng);
    let scale = rng.random_range(0.5f64.ln()..2.0f64.ln()).exp();
    let translation = Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0));
    SimilarityTransform { scale, rotation, translation }
}

/// Camera-to-rig rotation whose optical axis points from `center` to `target`.
fn look_at(center: &Vec3, target: &Vec3, roll: f64) -> Rotation {
    let z = (target - center).normalize();
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let x0 = helper.cross(&z).normalize();
    let y0 = z.cross(&x0);
    let (s, c) = roll.sin_cos();
    let x = x0 * c + y0 * s;
    let y = z.cross(&x);
    Rotation::from_matrix_unchecked(Mat3::from_columns(&[x, y, z]))
}

struct PointSampler {
    cube: Box3,
    plane: Option<(Rotation, Vec3, f64)>,
}

impl PointSampler {
    fn new(recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Self {
        let cube = recipe.point_cube;
        let plane = recipe.coplanar.then(|| {
            let half = cube.half_extent();
            let h = half.min();
            let offset = Vec3::from_fn(|i, _| rng.random_range(-0.25..0.25) * half[i]);
            (random_rotation(rng), cube.center() + offset, h)
        });
        Self { cube, plane }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        match &self.plane {
            None => self.cube.sample(rng),
            Some((r, c, h)) => loop {
                let local = Vec3::new(rng.random_range(-h..*h), rng.random_range(-h..*h), 0.0);
                let p = c + r.rotate(&local);
                if self.cube.contains(&p) {
                    break p;
                }
            },
        }
    }
}

const MAX_POINT_RESAMPLES: usize = 10_000;

pub fn generate(recipe: &SceneRecipe) -> Result<SyntheticProblem, RecipeError> {
    recipe.validate()?;
    let mut rng = seeding::stream(recipe.seed, 0);
    let ground_truth = match recipe.transform {
        TransformKind::Identity => SimilarityTransform::identity(),
        TransformKind::RandomSimilarity => random_similarity(&mut rng),
    };
    let sampler = PointSampler::new(recipe, &mut rng);
    let mut rig_points: Vec<Vec3> = (0..recipe.num_points).map(|_| sampler.sample(&mut rng)).collect();
    let centroid = rig_points.iter().sum::<Vec3>() / rig_points.len() as f64;

    let cameras: Vec<PinholeCamera> = (0..recipe.num_cameras)
        .map(|_| {
            let center = recipe.camera_box.sample(&mut rng);
            let roll = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            PinholeCamera::centered(center, look_at(&center, &centroid, roll), recipe.focal_length, recipe.image_width, recipe.image_height)
                .expect("recipe validated")
        })
        .collect();
    let rig = GeneralizedCamera::new(cameras).expect("recipe validated");

    // Assign each point to a camera that images it; resample points no camera sees.
    let n_cam = rig.len();
    let mut assignments = Vec::with_capacity(recipe.num_points);
    for p in rig_points.iter_mut() {
        let mut found = None;
        for _ in 0..MAX_POINT_RESAMPLES {
            let first = rng.random_range(0..n_cam);
            found = (0..n_cam).map(|k| (first + k) % n_cam).find_map(|c| {
                let cam = &rig.cameras()[c];
                cam.project(p).ok().filter(|px| cam.contains(px)).map(|px| (c, px))
            });
            if found.is_some() {
                break;
            }
            *p = sampler.sample(&mut rng);
        }
        assignments.push(found.expect("scene geometry leaves some point unobservable"));
    }

    let noise = Normal::new(0.0, recipe.noise_sigma_px.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let n_out = (recipe.outlier_fraction * recipe.num_points as f64).round() as usize;
    let mut inlier_mask = vec![true; recipe.num_points];
    for i in index::sample(&mut rng, recipe.num_points, n_out.min(recipe.num_points)) {
        inlier_mask[i] = false;
    }

    let to_world = ground_truth.inverse();
    let mut correspondences = Vec::with_capacity(recipe.num_points);
    let mut ground_truth_depths = Vec::with_capacity(recipe.num_points);
    for (i, (p, &(cam, px))) in rig_points.iter().zip(&assignments).enumerate() {
        let pixel = if !inlier_mask[i] {
            Vec2::new(
                rng.random_range(0.0..f64::from(recipe.image_width)),
                rng.random_range(0.0..f64::from(recipe.image_height)),
            )
        } else if recipe.noise_sigma_px > 0.0 {
            px + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            px
        };
        correspondences.push(Correspondence::observe(&rig, cam, to_world.apply(p), pixel).expect("valid camera index"));
        ground_truth_depths.push((p - rig.cameras()[cam].center).norm());
    }

    Ok(SyntheticProblem { correspondences, rig, ground_truth, ground_truth_depths, inlier_mask, rig_points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rotation_error_deg: f64,
    pub translation_error_abs: f64,
    pub translation_error_rel: f64,
    pub scale_error_rel: f64,
    /// Over the problem's true inliers.
    pub mean_reprojection_px: f64,
    /// Correspondences within the default threshold under the estimate.
    pub inlier_count: usize,
    /// Depths induced along the measured rays, over true inliers.
    pub depth_rmse: f64,
}

const TRANSLATION_EPS: f64 = 1e-9;

pub fn rotation_error_deg(estimate: &Rotation, truth: &Rotation) -> f64 {
    estimate.angle_to(truth).to_degrees()
}

pub fn error_report(estimate: &SimilarityTransform, truth: &SimilarityTransform, problem: &SyntheticProblem) -> ErrorReport {
    let dt = (estimate.translation - truth.translation).norm();
    let mut reproj = (0.0, 0usize);
    let mut depth_sq = 0.0;
    let mut inlier_count = 0;
    for (i, c) in problem.correspondences.iter().enumerate() {
        let e = robust::reprojection_error(estimate, c, &problem.rig);
        if e <= DEFAULT_THRESHOLD_PX {
            inlier_count += 1;
        }
        if problem.inlier_mask[i] {
            reproj.0 += e;
            reproj.1 += 1;
            let d = c.ray.depth_of(&estimate.apply(&c.world_point)) - problem.ground_truth_depths[i];
            depth_sq += d * d;
        }
    }
    let n = reproj.1.max(1) as f64;
    ErrorReport {
        rotation_error_deg: rotation_error_deg(&estimate.rotation, &truth.rotation),
        translation_error_abs: dt,
        translation_error_rel: dt / truth.translation.norm().max(TRANSLATION_EPS),
        scale_error_rel: (estimate.scale - truth.scale).abs() / truth.scale,
        mean_reprojection_px: reproj.0 / n,
        inlier_count,
        depth_rmse: (depth_sq / n).sqrt(),
    }
}

pub fn depth_rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    let n = estimate.len().max(1) as f64;
    (estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt()
}

/// A 4-correspondence minimal problem drawn from a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalProblem {
    pub sample: [Correspondence; 4],
    pub depths: [f64; 4],
    pub ground_truth: SimilarityTransform,
    pub scene_scale: f64,
}

/// Draws 4 distinct true inliers from the scene generated by `recipe`.
pub fn minimal_problem(recipe: &SceneRecipe) -> Result<MinimalProblem, RecipeError> {
    let problem = generate(recipe)?;
    let inl = problem.inlier_indices();
    if inl.len() < 4 {
        return Err(RecipeError::Invalid("scene has fewer than 4 inliers"));
    }
    let mut rng = seeding::stream(recipe.seed, 1);
    let pick = index::sample(&mut rng, inl.len(), 4);
    let idx: [usize; 4] = std::array::from_fn(|k| inl[pick.index(k)]);
    Ok(MinimalProblem {
        sample: idx.map(|i| problem.correspondences[i]),
        depths: idx.map(|i| problem.ground_truth_depths[i]),
        ground_truth: problem.ground_truth,
        scene_scale: problem.scene_scale(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRow {
    pub trial: usize,
    pub num_hypotheses: usize,
    /// `inf` when the solve returned nothing.
    pub depth_rmse: f64,
    pub rotation_error_deg: f64,
    pub translation_error_rel: f64,
    /// `‖t − t*‖` over the scene scale.
    pub translation_error_scene: f64,
    pub scale_error_rel: f64,
    pub coplanar_path: bool,
}

impl StabilityRow {
    fn failed(trial: usize) -> Self {
        Self {
            trial,
            num_hypotheses: 0,
            depth_rmse: f64::INFINITY,
            rotation_error_deg: f64::INFINITY,
            translation_error_rel: f64::INFINITY,
            translation_error_scene: f64::INFINITY,
            scale_error_rel: f64::INFINITY,
            coplanar_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    /// Depth RMSE of every trial, ascending.
    pub depth_rmse_cdf: Vec<f64>,
}

impl StabilityTable {
    pub fn fraction(&self, pred: impl Fn(&StabilityRow) -> bool) -> f64 {
        self.rows.iter().filter(|r| pred(r)).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn mean_hypotheses(&self) -> f64 {
        self.rows.iter().map(|r| r.num_hypotheses as f64).sum::<f64>() / self.rows.len().max(1) as f64
    }
}

/// Picks the hypothesis closest to the ground-truth depths.
pub fn best_hypothesis<'a>(hyps: &'a [Hypothesis], depths: &[f64; 4]) -> Option<&'a Hypothesis> {
    hyps.iter().min_by(|a, b| depth_rmse(&a.depths, depths).total_cmp(&depth_rmse(&b.depths, depths)))
}

fn stability_trial(trial: usize, recipe: &SceneRecipe, variant: &SolverVariant, seed: u64) -> StabilityRow {
    let trial_seed = seeding::derive(seed, trial as u64);
    let Ok(mp) = minimal_problem(&recipe.with_seed(trial_seed)) else {
        return StabilityRow::failed(trial);
    };
    let Ok(hyps) = pipeline::solve_minimal(&mp.sample, variant, trial_seed) else {
        return StabilityRow::failed(trial);
    };
    let best = best_hypothesis(&hyps, &mp.depths).expect("non-empty on success");
    let gt = &mp.ground_truth;
    let (rot, trel, tscene, scale) = match best.similarity() {
        Some(t) => {
            let dt = (t.translation - gt.translation).norm();
            (
                rotation_error_deg(&t.rotation, &gt.rotation),
                dt / gt.translation.norm().max(TRANSLATION_EPS),
                dt / mp.scene_scale,
                (t.scale - gt.scale).abs() / gt.scale,
            )
        }
        None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    StabilityRow {
        trial,
        num_hypotheses: hyps.len(),
        depth_rmse: depth_rmse(&best.depths, &mp.depths),
        rotation_error_deg: rot,
        translation_error_rel: trel,
        translation_error_scene: tscene,
        scale_error_rel: scale,
        coplanar_path: best.path == SolverPath::Coplanar,
    }
}

/// Noise-free minimal solves: best-hypothesis depth RMSE and transform errors.
pub fn run_stability(trials: usize, recipe: &SceneRecipe, variant: &SolverVariant, seed: u64) -> StabilityTable {
    let rows: Vec<StabilityRow> =
        (0..trials).into_par_iter().map(|t| stability_trial(t, recipe, variant, seed)).collect();
    let mut cdf: Vec<f64> = rows.iter().map(|r| r.depth_rmse).collect();
    cdf.sort_by(f64::total_cmp);
    StabilityTable { rows, depth_rmse_cdf: cdf }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RansacRow {
    pub run: usize,
    pub success: bool,
    pub rotation_error_deg: f64,
    pub translation_error_rel: f64,
    pub scale_error_rel: f64,
    pub depth_rmse: f64,
    pub mean_reprojection_px: f64,
    pub inliers: usize,
    pub true_inliers: usize,
    /// Fraction of true inliers in the returned inlier set.
    pub inlier_recall: f64,
    /// Fraction of the returned inlier set that are true inliers.
    pub inlier_precision: f64,
    pub best_iteration: usize,
    pub hypotheses_scored: usize,
}

fn ransac_run(run: usize, recipe: &SceneRecipe, config: &RansacConfig, seed: u64) -> RansacRow {
    let run_seed = seeding::derive(seed, run as u64);
    let problem = generate(&recipe.with_seed(run_seed)).expect("recipe validated");
    let true_inliers = problem.inlier_mask.iter().filter(|m| **m).count();
    let cfg = RansacConfig { seed: run_seed, ..*config };
    match robust::estimate(&problem.correspondences, &problem.rig, &cfg) {
        Ok(r) => {
            let e = error_report(&r.transform, &problem.ground_truth, &problem);
            let hit = r.inlier_indices.iter().filter(|&&i| problem.inlier_mask[i]).count();
            RansacRow {
                run,
                success: true,
                rotation_error_deg: e.rotation_error_deg,
                translation_error_rel: e.translation_error_rel,
                scale_error_rel: e.scale_error_rel,
                depth_rmse: e.depth_rmse,
                mean_reprojection_px: e.mean_reprojection_px,
                inliers: r.inlier_indices.len(),
                true_inliers,
                inlier_recall: hit as f64 / true_inliers.max(1) as f64,
                inlier_precision: hit as f64 / r.inlier_indices.len().max(1) as f64,
                best_iteration: r.best_iteration,
                hypotheses_scored: r.hypotheses_scored,
            }
        }
        Err(_) => RansacRow {
            run,
            success: false,
            rotation_error_deg: f64::INFINITY,
            translation_error_rel: f64::INFINITY,
            scale_error_rel: f64::INFINITY,
            depth_rmse: f64::INFINITY,
            mean_reprojection_px: f64::INFINITY,
            inliers: 0,
            true_inliers,
            inlier_recall: 0.0,
            inlier_precision: 0.0,
            best_iteration: 0,
            hypotheses_scored: 0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RansacSummary {
    pub runs: usize,
    pub successes: usize,
    /// Runs with recall ≥ 0.9 and rotation error < 1°.
    pub robust_runs: usize,
    /// Mean over all runs, a failed run counting as 180°.
    pub mean_rotation_error_deg: f64,
    pub median_rotation_error_deg: f64,
    pub mean_inlier_recall: f64,
}

pub const FAILED_ROTATION_DEG: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RansacBench {
    pub rows: Vec<RansacRow>,
    pub summary: RansacSummary,
}

pub fn run_ransac_bench(runs: usize, recipe: &SceneRecipe, config: &RansacConfig, seed: u64) -> RansacBench {
    let rows: Vec<RansacRow> = (0..runs).into_par_iter().map(|r| ransac_run(r, recipe, config, seed)).collect();
    let summary = summarize_ransac(&rows);
    RansacBench { rows, summary }
}

fn summarize_ransac(rows: &[RansacRow]) -> RansacSummary {
    let n = rows.len().max(1) as f64;
    let mut rot: Vec<f64> = rows
        .iter()
        .map(|r| if r.success { r.rotation_error_deg } else { FAILED_ROTATION_DEG })
        .collect();
    let mean = rot.iter().sum::<f64>() / n;
    rot.sort_by(f64::total_cmp);
    RansacSummary {
        runs: rows.len(),
        successes: rows.iter().filter(|r| r.success).count(),
        robust_runs: rows.iter().filter(|r| r.success && r.inlier_recall >= 0.9 && r.rotation_error_deg < 1.0).count(),
        mean_rotation_error_deg: mean,
        median_rotation_error_deg: median(&rot).unwrap_or(f64::NAN),
        mean_inlier_recall: rows.iter().map(|r| r.inlier_recall).sum::<f64>() / n,
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub sigma_px: f64,
    pub runs: usize,
    pub ransac_successes: usize,
    /// RANSAC means over successful runs.
    pub mean_rotation_error_deg: f64,
    pub mean_translation_error_rel: f64,
    pub mean_scale_error_rel: f64,
    pub mean_reprojection_px: f64,
    pub mean_inlier_recall: f64,
    /// Raw minimal solves on 4 true inliers, best hypothesis by depth.
    pub minimal_successes: usize,
    pub minimal_mean_depth_rmse: f64,
    pub minimal_mean_rotation_error_deg: f64,
}

pub fn run_noise_sweep(levels: &[f64], recipe: &SceneRecipe, runs: usize, config: &RansacConfig, seed: u64) -> Vec<NoiseRow> {
    levels
        .iter()
        .enumerate()
        .map(|(li, &sigma)| {
            let level_seed = seeding::derive(seed, li as u64);
            let rec = SceneRecipe { noise_sigma_px: sigma, ..*recipe };
            let bench = run_ransac_bench(runs, &rec, config, level_seed);
            let ok: Vec<&RansacRow> = bench.rows.iter().filter(|r| r.success).collect();
            let mean = |f: fn(&RansacRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len().max(1) as f64;
            let minimal = run_stability(runs, &rec, &config.variant, level_seed);
            let mins: Vec<&StabilityRow> = minimal.rows.iter().filter(|r| r.num_hypotheses > 0).collect();
            let mmean = |f: fn(&StabilityRow) -> f64| mins.iter().map(|r| f(r)).sum::<f64>() / mins.len().max(1) as f64;
            NoiseRow {
                sigma_px: sigma,
                runs,
                ransac_successes: ok.len(),
                mean_rotation_error_deg: mean(|r| r.rotation_error_deg),
                mean_translation_error_rel: mean(|r| r.translation_error_rel),
                mean_scale_error_rel: mean(|r| r.scale_error_rel),
                mean_reprojection_px: mean(|r| r.mean_reprojection_px),
                mean_inlier_recall: mean(|r| r.inlier_recall),
                minimal_successes: mins.len(),
                minimal_mean_depth_rmse: mmean(|r| r.depth_rmse),
                minimal_mean_rotation_error_deg: mmean(|r| r.rotation_error_deg),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub samples: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub min_us: f64,
}

impl TimingStats {
    fn from_us(mut t: Vec<f64>) -> Option<Self> {
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        Some(Self {
            samples: t.len(),
            mean_us: t.iter().sum::<f64>() / t.len() as f64,
            median_us: median(&t).expect("non-empty"),
            min_us: t[0],
        })
    }
}

/// Deterministic work counters accumulated by [`run_timing`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OperationCounts {
    pub general_solves: usize,
    pub coplanar_solves: usize,
    pub tracker_steps: usize,
    pub general_hypotheses: usize,
    pub coplanar_hypotheses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingReport {
    pub trials: usize,
    pub general: Option<TimingStats>,
    pub coplanar: Option<TimingStats>,
    /// General median over coplanar median.
    pub speedup: Option<f64>,
    pub counts: OperationCounts,
}

/// Times the closed-form path against the quartic path on the same coplanar
/// minimal samples, serially, after one warm-up solve of each.
pub fn run_timing(recipe: &SceneRecipe, trials: usize, seed: u64) -> TimingReport {
    let rec = SceneRecipe { coplanar: true, noise_sigma_px: 0.0, outlier_fraction: 0.0, ..*recipe };
    let problems: Vec<MinimalProblem> = (0..trials)
        .filter_map(|t| minimal_problem(&rec.with_seed(seeding::derive(seed, t as u64))).ok())
        .collect();
    let mut counts = OperationCounts::default();
    if problems.is_empty() {
        return TimingReport { trials, general: None, coplanar: None, speedup: None, counts };
    }
    let coplanar = SolverVariant::plus_s();
    let general = SolverVariant { force_general: true, ..coplanar };
    let _ = pipeline::solve_minimal(&problems[0].sample, &coplanar, 0);
    let _ = pipeline::solve_minimal(&problems[0].sample, &general, 0);

    let time = |variant: &SolverVariant, counts: &mut OperationCounts| -> Vec<f64> {
        problems
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let start = Instant::now();
                let out = pipeline::solve_minimal_detailed(&p.sample, variant, i as u64);
                let us = start.elapsed().as_secs_f64() * 1e6;
                if let Ok(o) = out {
                    counts.general_solves += o.diagnostics.general_solves;
                    counts.coplanar_solves += o.diagnostics.coplanar_solves;
                    counts.tracker_steps += o.diagnostics.tracker_steps;
                    if variant.force_general {
                        counts.general_hypotheses += o.hypotheses.len();
                    } else {
                        counts.coplanar_hypotheses += o.hypotheses.len();
                    }
                }
                us
            })
            .collect()
    };
    let cop = TimingStats::from_us(time(&coplanar, &mut counts));
    let gen = TimingStats::from_us(time(&general, &mut counts));
    let speedup = match (gen, cop) {
        (Some(g), Some(c)) if c.median_us > 0.0 => Some(g.median_us / c.median_us),
        _ => None,
    };
    TimingReport { trials, general: gen, coplanar: cop, speedup, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoplanarBench {
    pub stability: StabilityTable,
    pub timing: TimingReport,
}

/// Closed-form accuracy on coplanar scenes plus the timing comparison.
pub fn run_coplanar_bench(trials: usize, recipe: &SceneRecipe, seed: u64) -> CoplanarBench {
    let rec = SceneRecipe { coplanar: true, ..*recipe };
    CoplanarBench {
        stability: run_stability(trials, &rec, &SolverVariant::plus_s(), seed),
        timing: run_timing(&rec, trials, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::{coplanarity_test, DEFAULT_COPLANAR_TOL};
    use rand::SeedableRng;

    #[test]
    fn noise_free_identity_scene_reprojects_exactly() {
        let p = generate(&SceneRecipe::default().with_seed(3)).unwrap();
        assert_eq!(p.correspondences.len(), 100);
        assert_eq!(p.rig.len(), 10);
        for c in &p.correspondences {
            assert!(robust::reprojection_error(&SimilarityTransform::identity(), c, &p.rig) <= 1e-9);
        }
        for (i, c) in p.correspondences.iter().enumerate() {
            let y = c.ray.point_at(p.ground_truth_depths[i]);
            assert!((y - p.rig_points[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn random_similarity_scene_is_honest() {
        let rec = SceneRecipe { transform: TransformKind::RandomSimilarity, ..SceneRecipe::default() };
        for seed in 0..5 {
            let p = generate(&rec.with_seed(seed)).unwrap();
            assert!((0.5..=2.0).contains(&p.ground_truth.scale));
            for c in &p.correspondences {
                assert!(robust::reprojection_error(&p.ground_truth, c, &p.rig) <= 1e-9);
            }
        }
    }

    #[test]
    fn coplanar_scene_subsets_are_coplanar() {
        let rec = SceneRecipe { coplanar: true, num_points: 12, ..SceneRecipe::default() };
        let p = generate(&rec.with_seed(4)).unwrap();
        let pts = &p.rig_points;
        let n = pts.len();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        let sub = [pts[a], pts[b], pts[c], pts[d]];
                        assert!(coplanarity_test(&sub, DEFAULT_COPLANAR_TOL).unwrap());
                    }
                }
            }
        }
        assert!(p.rig_points.iter().all(|q| rec.point_cube.contains(q)));
    }

    #[test]
    fn outlier_mask_matches_construction() {
        let rec = SceneRecipe { outlier_fraction: 0.75, ..SceneRecipe::default() };
        let p = generate(&rec.with_seed(5)).unwrap();
        assert_eq!(p.inlier_mask.iter().filter(|m| !**m).count(), 75);
        for (i, c) in p.correspondences.iter().enumerate() {
            if p.inlier_mask[i] {
                assert!(robust::reprojection_error(&p.ground_truth, c, &p.rig) <= 1e-9);
            }
        }
    }

    #[test]
    fn noise_level_is_calibrated() {
        let rec = SceneRecipe { noise_sigma_px: 0.5, ..SceneRecipe::default() };
        let mut residuals = Vec::new();
        for seed in 0..60 {
            let p = generate(&rec.with_seed(seed)).unwrap();
            for c in &p.correspondences {
                let cam = &p.rig.cameras()[c.camera_index];
                let px = cam.project(&p.ground_truth.apply(&c.world_point)).unwrap();
                residuals.push(c.pixel.x - px.x);
                residuals.push(c.pixel.y - px.y);
            }
        }
        assert!(residuals.len() >= 10_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((0.45..=0.55).contains(&std), "{std}");
    }

    #[test]
    fn invalid_recipes_are_rejected() {
        let bad = [
            SceneRecipe { num_points: 0, ..SceneRecipe::default() },
            SceneRecipe { outlier_fraction: 1.0, ..SceneRecipe::default() },
            SceneRecipe { point_cube: Box3::new([0.0; 3], [0.0; 3]), ..SceneRecipe::default() },
            SceneRecipe { noise_sigma_px: -1.0, ..SceneRecipe::default() },
        ];
        for r in bad {
            assert!(generate(&r).is_err());
        }
    }

    #[test]
    fn error_report_examples() {
        let p = generate(&SceneRecipe::default().with_seed(6)).unwrap();
        let t = p.ground_truth;
        let e = error_report(&t, &t, &p);
        assert_eq!(e.rotation_error_deg, 0.0);
        assert_eq!(e.translation_error_abs, 0.0);
        assert_eq!(e.scale_error_rel, 0.0);
        assert!(e.mean_reprojection_px < 1e-9);
        assert!(e.depth_rmse < 1e-9);
        assert_eq!(e.inlier_count, 100);

        let rz = Rotation::from_axis_angle(&Vec3::z(), 1f64.to_radians());
        let est = SimilarityTransform { rotation: rz.compose(&t.rotation), ..t };
        assert!((error_report(&est, &t, &p).rotation_error_deg - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_error_matches_quaternion_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let qa = UnitQuaternion::from_matrix(a.matrix());
            let qb = UnitQuaternion::from_matrix(b.matrix());
            let w = (qa * qb.inverse()).w.abs().min(1.0);
            let oracle = (2.0 * w.acos()).to_degrees();
            assert!((rotation_error_deg(&a, &b) - oracle).abs() < 1e-10 * 180.0);
        }
    }

    #[test]
    fn stability_single_trial_is_deterministic() {
        let rec = SceneRecipe::default();
        let a = run_stability(1, &rec, &SolverVariant::plus_s(), 11);
        let b = run_stability(1, &rec, &SolverVariant::plus_s(), 11);
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn timing_with_no_trials_is_empty() {
        let r = run_timing(&SceneRecipe::default(), 0, 1);
        assert!(r.general.is_none() && r.coplanar.is_none() && r.speedup.is_none());
        assert_eq!(r.counts, OperationCounts::default());
    }

    #[test]
    fn timing_counts_repeat() {
        let a = run_timing(&SceneRecipe::default(), 5, 2);
        let b = run_timing(&SceneRecipe::default(), 5, 2);
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.counts.coplanar_solves, 5);
    }

    #[test]
    fn noise_sweep_shape_and_trend() {
        let levels = [0.0, 2.0];
        let cfg = RansacConfig { iterations: 30, ..RansacConfig::default() };
        let rows = run_noise_sweep(&levels, &SceneRecipe::default(), 4, &cfg, 3);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].mean_rotation_error_deg < 1e-4);
        assert!(rows[1].minimal_mean_depth_rmse >= rows[0].minimal_mean_depth_rmse);
    }
}
