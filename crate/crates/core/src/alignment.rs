//! Point-to-point alignment: Umeyama similarity and linear affine fits.

use nalgebra::{DMatrix, Matrix3x4};
use thiserror::Error;

use crate::geometry::{AffineTransform, Mat3, Rotation, SimilarityTransform, Vec3};

const RANK_TOL: f64 = 1e-12;
const COPLANAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
}

/// Paired `(source, target)` points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointPairSet {
    pub pairs: Vec<(Vec3, Vec3)>,
}

impl PointPairSet {
    pub fn new(pairs: Vec<(Vec3, Vec3)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn centroids(&self) -> (Vec3, Vec3) {
        let n = self.pairs.len() as f64;
        let (a, b) = self
            .pairs
            .iter()
            .fold((Vec3::zeros(), Vec3::zeros()), |(a, b), (s, t)| (a + s, b + t));
        (a / n, b / n)
    }
}

impl FromIterator<(Vec3, Vec3)> for PointPairSet {
    fn from_iter<I: IntoIterator<Item = (Vec3, Vec3)>>(iter: I) -> Self {
        Self { pairs: iter.into_iter().collect() }
    }
}

/// Least-squares `c, R, t` minimizing `Σ‖target − (c R source + t)‖²`
/// (Umeyama 1991), with the reflection case folded into a proper rotation.
pub fn umeyama_similarity(pairs: &PointPairSet) -> Result<SimilarityTransform, AlignmentError> {
    if pairs.len() < 3 {
        return Err(AlignmentError::DegenerateConfiguration("fewer than 3 point pairs"));
    }
    let n = pairs.len() as f64;
    let (mu_s, mu_t) = pairs.centroids();
    let mut cov = Mat3::zeros();
    let mut src_cov = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, t) in &pairs.pairs {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose();
        src_cov += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let src_sv = src_cov.symmetric_eigenvalues();
    let mut sv = [src_sv[0].abs(), src_sv[1].abs(), src_sv[2].abs()];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(AlignmentError::DegenerateConfiguration("source points are collinear"));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let mut signs = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let k = (0..3).min_by(|&i, &j| d[i].total_cmp(&d[j])).unwrap();
        signs[k] = -1.0;
    }
    let r = u * Mat3::from_diagonal(&signs) * v_t;
    let scale = d.component_mul(&signs).sum() / var_s;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(AlignmentError::DegenerateConfiguration("non-positive scale"));
    }
    let rotation = Rotation::from_matrix_unchecked(reorthonormalize(&r));
    let translation = mu_t - rotation.rotate(&mu_s) * scale;
    Ok(SimilarityTransform { scale, rotation, translation })
}

/// Projects a nearly-orthonormal matrix back onto SO(3).
fn reorthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut m = u * v_t;
    if m.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        m = u * v_t;
    }
    m
}

/// 12-parameter fit `target = L · source + t`; exact for 4 non-coplanar
/// pairs, Householder least squares for more.
pub fn affine_fit(pairs: &PointPairSet) -> Result<AffineTransform, AlignmentError> {
    if pairs.len() < 4 {
        return Err(AlignmentError::DegenerateConfiguration("fewer than 4 point pairs"));
    }
    let (mu_s, _) = pairs.centroids();
    let mut src_cov = Mat3::zeros();
    for (s, _) in &pairs.pairs {
        let ds = s - mu_s;
        src_cov += ds * ds.transpose();
    }
    let ev = src_cov.symmetric_eigenvalues();
    let max = ev.amax();
    let min = ev.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(max > 0.0) || min <= COPLANAR_TOL * max {
        return Err(AlignmentError::DegenerateConfiguration("source points are coplanar"));
    }

    // Center sources for conditioning, solve [ds 1] · P = target.
    let n = pairs.len();
    let design = DMatrix::from_fn(n, 4, |i, j| if j < 3 { pairs.pairs[i].0[j] - mu_s[j] } else { 1.0 });
    let rhs = DMatrix::from_fn(n, 3, |i, j| pairs.pairs[i].1[j]);
    let qr = design.qr();
    let qt_b = qr.q().transpose() * rhs;
    let p = qr
        .r()
        .solve_upper_triangular(&qt_b)
        .ok_or(AlignmentError::DegenerateConfiguration("affine design matrix is singular"))?;
    let pt: Matrix3x4<f64> = Matrix3x4::from_fn(|i, j| p[(j, i)]);
    let linear: Mat3 = pt.fixed_columns::<3>(0).into_owned();
    let offset = Vec3::new(pt[(0, 3)], pt[(1, 3)], pt[(2, 3)]);
    Ok(AffineTransform { linear, translation: offset - linear * mu_s })
}

/// Final similarity from the inliers of the best affine hypothesis.
pub fn similarity_from_affine_inliers(pairs: &PointPairSet) -> Result<SimilarityTransform, AlignmentError> {
    umeyama_similarity(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| v(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect()
    }

    fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform {
        let axis = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        SimilarityTransform::new(
            rng.random_range(0.3..3.0),
            Rotation::from_axis_angle(&axis, rng.random_range(-3.1..3.1)),
            v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        )
        .unwrap()
    }

    fn sq_residual(t: &SimilarityTransform, pairs: &PointPairSet) -> f64 {
        pairs.pairs.iter().map(|(s, q)| (q - t.apply(s)).norm_squared()).sum()
    }

    #[test]
    fn identity_pairs_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: PointPairSet = random_points(&mut rng, 5).into_iter().map(|p| (p, p)).collect();
        let t = umeyama_similarity(&pairs).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.angle() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_random_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let truth = random_similarity(&mut rng);
            let pairs: PointPairSet = random_points(&mut rng, 4).into_iter().map(|p| (p, truth.apply(&p))).collect();
            let t = umeyama_similarity(&pairs).unwrap();
            assert!(t.rotation.angle_to(&truth.rotation) < 1e-10);
            assert!((t.scale - truth.scale).abs() < 1e-10);
            assert!((t.translation - truth.translation).norm() < 1e-10);
        }
    }

    #[test]
    fn reflection_is_folded_into_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: PointPairSet = random_points(&mut rng, 4).into_iter().map(|p| (p, -p)).collect();
        let t = umeyama_similarity(&pairs).unwrap();
        let r = t.rotation.matrix();
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-12);
        assert!(t.scale > 0.0);
    }

    #[test]
    fn collinear_sources_are_degenerate() {
        let pairs: PointPairSet = (0..3).map(|i| v(i as f64, 2.0 * i as f64, 0.0)).map(|p| (p, p)).collect();
        assert!(umeyama_similarity(&pairs).is_err());
        assert!(similarity_from_affine_inliers(&pairs).is_err());
    }

    #[test]
    fn umeyama_is_locally_optimal_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random_similarity(&mut rng);
        let pairs: PointPairSet = random_points(&mut rng, 8)
            .into_iter()
            .map(|p| {
                let noise = v(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                (p, truth.apply(&p) + noise)
            })
            .collect();
        let best = umeyama_similarity(&pairs).unwrap();
        let base = sq_residual(&best, &pairs);
        for _ in 0..1000 {
            let axis = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dr = Rotation::from_axis_angle(&axis, rng.random_range(-1e-3..1e-3));
            let perturbed = SimilarityTransform::new(
                best.scale * (1.0 + rng.random_range(-1e-3..1e-3)),
                dr.compose(&best.rotation),
                best.translation + v(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3), 0.0),
            )
            .unwrap();
            assert!(sq_residual(&perturbed, &pairs) >= base - 1e-12);
        }
    }

    #[test]
    fn affine_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = random_points(&mut rng, 4);
        let same: PointPairSet = src.iter().map(|p| (*p, *p)).collect();
        let a = affine_fit(&same).unwrap();
        assert!((a.linear - Mat3::identity()).amax() < 1e-12);
        assert!(a.translation.amax() < 1e-12);

        let diag = Mat3::from_diagonal(&v(1.0, 2.0, 3.0));
        let scaled: PointPairSet = src.iter().map(|p| (*p, diag * p)).collect();
        let a = affine_fit(&scaled).unwrap();
        assert!((a.linear - diag).amax() < 1e-12);
        for (s, t) in &scaled.pairs {
            assert!((a.apply(s) - t).norm() <= 1e-10 * 10.0);
        }

        let flat: PointPairSet = src.iter().map(|p| v(p.x, p.y, 0.0)).map(|p| (p, p)).collect();
        assert!(matches!(affine_fit(&flat), Err(AlignmentError::DegenerateConfiguration(_))));
    }

    #[test]
    fn affine_least_squares_with_more_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lin = Mat3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let t = v(1.0, -2.0, 3.0);
        let pairs: PointPairSet = random_points(&mut rng, 20).into_iter().map(|p| (p, lin * p + t)).collect();
        let a = affine_fit(&pairs).unwrap();
        assert!((a.linear - lin).amax() < 1e-10);
        assert!((a.translation - t).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn rotation_equivariance(seed in 0u64..1000, angle in -3.0..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_similarity(&mut rng);
            let q = Rotation::from_axis_angle(&v(0.3, -0.2, 0.9), angle);
            let pts = random_points(&mut rng, 5);
            let base: PointPairSet = pts.iter().map(|p| (*p, truth.apply(p))).collect();
            let rotated: PointPairSet = pts.iter().map(|p| (q.rotate(p), truth.apply(p))).collect();
            let a = umeyama_similarity(&base).unwrap();
            let b = umeyama_similarity(&rotated).unwrap();
            let expected = a.rotation.compose(&q.inverse());
            prop_assert!(b.rotation.angle_to(&expected) < 1e-9);
            prop_assert!((a.scale - b.scale).abs() < 1e-9 * a.scale);
            prop_assert!((a.translation - b.translation).norm() < 1e-8);
        }
    }
}
