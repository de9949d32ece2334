//! Fixed-iteration RANSAC around the minimal solver.

use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use crate::alignment::{self, PointPairSet};
use crate::geometry::{Correspondence, GeneralizedCamera, PointMap, SimilarityTransform};
use crate::pipeline::{self, Hypothesis, HypothesisTransform, SolverPath, SolverVariant};
use crate::seeding;

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_THRESHOLD_PX: f64 = 2.5;
const MIN_INLIERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold_px: f64,
    pub seed: u64,
    pub variant: SolverVariant,
    /// Keep the per-iteration best inlier count.
    pub record_history: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            inlier_threshold_px: DEFAULT_THRESHOLD_PX,
            seed: 0,
            variant: SolverVariant::default(),
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HypothesisKind {
    Similarity,
    Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub transform: SimilarityTransform,
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
    pub best_hypothesis_kind: HypothesisKind,
    /// The winning hypothesis before the final refit.
    pub best_hypothesis: Hypothesis,
    pub best_iteration: usize,
    pub score_history: Option<Vec<usize>>,
    /// Hypotheses scored over all iterations.
    pub hypotheses_scored: usize,
    /// Iterations whose minimal solve produced no hypothesis.
    pub failed_samples: usize,
    pub coplanar_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RansacError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no hypothesis reached {MIN_INLIERS} inliers")]
    EstimationFailure,
}

/// Pixel distance between the observation and the projection of the
/// transformed world point; `+∞` behind the camera or for a bad index.
pub fn reprojection_error<T: PointMap + ?Sized>(transform: &T, corr: &Correspondence, rig: &GeneralizedCamera) -> f64 {
    let Ok(camera) = rig.camera(corr.camera_index) else {
        return f64::INFINITY;
    };
    match camera.project(&transform.map_point(&corr.world_point)) {
        Ok(px) => {
            let e = (px - corr.pixel).norm();
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        }
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    inliers: usize,
    mean_error: f64,
}

impl Score {
    const NONE: Score = Score { inliers: 0, mean_error: f64::INFINITY };

    fn beats(&self, other: &Score) -> bool {
        self.inliers > other.inliers || (self.inliers == other.inliers && self.mean_error < other.mean_error)
    }
}

fn score<T: PointMap + ?Sized>(t: &T, corrs: &[Correspondence], rig: &GeneralizedCamera, thr: f64) -> Score {
    let (mut n, mut sum) = (0usize, 0.0);
    for c in corrs {
        let e = reprojection_error(t, c, rig);
        if e <= thr {
            n += 1;
            sum += e;
        }
    }
    Score { inliers: n, mean_error: if n > 0 { sum / n as f64 } else { f64::INFINITY } }
}

fn inliers<T: PointMap + ?Sized>(t: &T, corrs: &[Correspondence], rig: &GeneralizedCamera, thr: f64) -> Vec<usize> {
    (0..corrs.len()).filter(|&i| reprojection_error(t, &corrs[i], rig) <= thr).collect()
}

struct IterationBest {
    score: Score,
    hypothesis: Option<Hypothesis>,
    scored: usize,
    failed: bool,
    coplanar: bool,
}

fn run_iteration(
    iter: usize,
    corrs: &[Correspondence],
    rig: &GeneralizedCamera,
    config: &RansacConfig,
) -> IterationBest {
    let mut rng = seeding::stream(config.seed, iter as u64);
    let picked = index::sample(&mut rng, corrs.len(), 4);
    let sample: [Correspondence; 4] = std::array::from_fn(|k| corrs[picked.index(k)]);
    let solve_seed = seeding::derive(config.seed ^ 0x5EED, iter as u64);
    let mut best = IterationBest { score: Score::NONE, hypothesis: None, scored: 0, failed: true, coplanar: false };
    let Ok(hyps) = pipeline::solve_minimal(&sample, &config.variant, solve_seed) else {
        return best;
    };
    best.failed = false;
    best.scored = hyps.len();
    best.coplanar = hyps.iter().any(|h| h.path == SolverPath::Coplanar);
    for h in hyps {
        let s = score(&h.transform, corrs, rig, config.inlier_threshold_px);
        if best.hypothesis.is_none() || s.beats(&best.score) {
            best.score = s;
            best.hypothesis = Some(h);
        }
    }
    best
}

pub fn estimate(
    correspondences: &[Correspondence],
    rig: &GeneralizedCamera,
    config: &RansacConfig,
) -> Result<RansacResult, RansacError> {
    if correspondences.len() < 4 {
        return Err(RansacError::TooFewCorrespondences(correspondences.len()));
    }
    if config.iterations == 0 {
        return Err(RansacError::InvalidConfig("iterations must be at least 1"));
    }
    if !(config.inlier_threshold_px > 0.0) {
        return Err(RansacError::InvalidConfig("inlier threshold must be positive"));
    }

    let per_iter: Vec<IterationBest> = (0..config.iterations)
        .into_par_iter()
        .map(|i| run_iteration(i, correspondences, rig, config))
        .collect();

    let mut best: Option<(usize, Score, Hypothesis)> = None;
    let mut history = config.record_history.then(|| Vec::with_capacity(config.iterations));
    let (mut scored, mut failed, mut coplanar) = (0, 0, 0);
    for (i, it) in per_iter.into_iter().enumerate() {
        scored += it.scored;
        failed += usize::from(it.failed);
        coplanar += usize::from(it.coplanar);
        if let Some(h) = it.hypothesis {
            if best.as_ref().is_none_or(|(_, s, _)| it.score.beats(s)) {
                best = Some((i, it.score, h));
            }
        }
        if let Some(hist) = history.as_mut() {
            hist.push(best.as_ref().map_or(0, |(_, s, _)| s.inliers));
        }
    }

    let Some((best_iteration, best_score, hypothesis)) = best else {
        return Err(RansacError::EstimationFailure);
    };
    if best_score.inliers < MIN_INLIERS {
        return Err(RansacError::EstimationFailure);
    }

    let thr = config.inlier_threshold_px;
    let hyp_inliers = inliers(&hypothesis.transform, correspondences, rig, thr);
    let (transform, inlier_indices, kind) = match &hypothesis.transform {
        HypothesisTransform::Similarity(t) => {
            let (t, idx) = refit_similarity(t, &hyp_inliers, correspondences, rig, thr);
            (t, idx, HypothesisKind::Similarity)
        }
        HypothesisTransform::Affine(a) => {
            let pairs = ray_pairs(a, &hyp_inliers, correspondences);
            let t = alignment::similarity_from_affine_inliers(&pairs).map_err(|_| RansacError::EstimationFailure)?;
            (t, hyp_inliers, HypothesisKind::Affine)
        }
    };

    Ok(RansacResult {
        transform,
        inlier_indices,
        iterations_run: config.iterations,
        best_hypothesis_kind: kind,
        best_hypothesis: hypothesis,
        best_iteration,
        score_history: history,
        hypotheses_scored: scored,
        failed_samples: failed,
        coplanar_samples: coplanar,
    })
}

/// World points paired with the closest points on their rays to the
/// transformed world points.
fn ray_pairs<T: PointMap + ?Sized>(t: &T, idx: &[usize], corrs: &[Correspondence]) -> PointPairSet {
    idx.iter()
        .map(|&i| {
            let c = &corrs[i];
            let y = t.map_point(&c.world_point);
            (c.world_point, c.ray.point_at(c.ray.depth_of(&y)))
        })
        .collect()
}

/// Umeyama over the ray-induced pairs; kept only if it loses no inliers.
fn refit_similarity(
    t: &SimilarityTransform,
    hyp_inliers: &[usize],
    corrs: &[Correspondence],
    rig: &GeneralizedCamera,
    thr: f64,
) -> (SimilarityTransform, Vec<usize>) {
    let pairs = ray_pairs(t, hyp_inliers, corrs);
    if let Ok(refit) = alignment::umeyama_similarity(&pairs) {
        let idx = inliers(&refit, corrs, rig, thr);
        if idx.len() >= hyp_inliers.len() {
            return (refit, idx);
        }
    }
    (*t, hyp_inliers.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PinholeCamera, Rotation, Vec2, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn rig() -> GeneralizedCamera {
        let flip = Rotation::from_axis_angle(&v(1.0, 0.0, 0.0), std::f64::consts::PI);
        let cams = [v(-4.0, -3.0, 15.0), v(4.0, -2.0, 18.0), v(-1.0, 4.0, 20.0), v(3.0, 3.0, 14.0)]
            .into_iter()
            .map(|c| PinholeCamera::centered(c, flip, 1000.0, 1000, 1000).unwrap())
            .collect();
        GeneralizedCamera::new(cams).unwrap()
    }

    fn scene(n: usize, outliers: usize, seed: u64) -> (GeneralizedCamera, Vec<Correspondence>) {
        let rig = rig();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corrs = (0..n)
            .map(|i| {
                let cam = i % rig.len();
                let y = v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                let mut px: Vec2 = rig.cameras()[cam].project(&y).unwrap();
                if i < outliers {
                    px = Vec2::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                }
                Correspondence::observe(&rig, cam, y, px).unwrap()
            })
            .collect();
        (rig, corrs)
    }

    #[test]
    fn reprojection_examples() {
        let (rig, corrs) = scene(10, 0, 1);
        for c in &corrs {
            assert!(reprojection_error(&SimilarityTransform::identity(), c, &rig) < 1e-9);
        }
        let behind = SimilarityTransform::new(1.0, Rotation::identity(), v(0.0, 0.0, 100.0)).unwrap();
        assert_eq!(reprojection_error(&behind, &corrs[0], &rig), f64::INFINITY);
    }

    #[test]
    fn noise_free_identity_scene() {
        let (rig, corrs) = scene(40, 0, 2);
        let cfg = RansacConfig { iterations: 20, record_history: true, ..RansacConfig::default() };
        let r = estimate(&corrs, &rig, &cfg).unwrap();
        assert_eq!(r.inlier_indices.len(), 40);
        assert!(r.transform.rotation.angle().to_degrees() < 1e-5);
        let hist = r.score_history.unwrap();
        assert_eq!(hist.len(), 20);
        assert!(hist.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn outliers_are_rejected() {
        let (rig, corrs) = scene(60, 30, 3);
        for variant in [SolverVariant::plus_s(), SolverVariant::plus_a()] {
            let cfg = RansacConfig { iterations: 200, variant, seed: 5, ..RansacConfig::default() };
            let r = estimate(&corrs, &rig, &cfg).unwrap();
            let true_in = r.inlier_indices.iter().filter(|&&i| i >= 30).count();
            assert!(true_in >= 29, "{true_in}");
            assert!(r.transform.rotation.angle().to_degrees() < 1e-3);
        }
    }

    #[test]
    fn too_few_correspondences() {
        let (rig, corrs) = scene(3, 0, 4);
        assert_eq!(estimate(&corrs, &rig, &RansacConfig::default()), Err(RansacError::TooFewCorrespondences(3)));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (rig, corrs) = scene(40, 20, 6);
        let cfg = RansacConfig { iterations: 50, seed: 9, record_history: true, ..RansacConfig::default() };
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let multi = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = single.install(|| estimate(&corrs, &rig, &cfg));
        let b = multi.install(|| estimate(&corrs, &rig, &cfg));
        assert_eq!(a, b);
    }

    #[test]
    fn ties_prefer_lower_error_then_earlier() {
        let a = Score { inliers: 5, mean_error: 1.0 };
        let b = Score { inliers: 5, mean_error: 0.5 };
        assert!(b.beats(&a));
        assert!(!a.beats(&b));
        assert!(!a.beats(&a));
        assert!(Score { inliers: 6, mean_error: 2.0 }.beats(&b));
    }
}
