//! The minimal solver: four correspondences in, transform hypotheses out.

use thiserror::Error;

use crate::alignment::{self, AlignmentError, PointPairSet};
use crate::congruence::{self, CongruenceError, DEFAULT_COPLANAR_TOL};
use crate::coplanar::{self, CoplanarError};
use crate::geometry::{AffineTransform, Correspondence, PointMap, Ray, SimilarityTransform, Vec3};
use crate::quartic::{self, QuadricSystem, SolveError, SolveOptions, DEFAULT_POSITIVITY_SLACK};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlignmentKind {
    /// Umeyama similarity from the four point pairs.
    PlusS,
    /// Exact affine fit; the similarity is recovered after RANSAC.
    PlusA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PermutationMode {
    OneP,
    SixP,
}

/// The partitions of the sample into the line pairs `(x1x2 | x3x4)`, as
/// zero-based index orders. Index 0 is the sample's own order.
pub const PERMUTATIONS: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [2, 3, 0, 1],
    [0, 2, 1, 3],
    [1, 3, 0, 2],
    [0, 3, 1, 2],
    [1, 2, 0, 3],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverVariant {
    pub alignment: AlignmentKind,
    pub permutations: PermutationMode,
    /// Threshold handed to [`congruence::coplanarity_test`].
    pub coplanar_tol: f64,
    /// Always use the quartic solver, even for coplanar samples.
    pub force_general: bool,
}

impl SolverVariant {
    pub fn new(alignment: AlignmentKind, permutations: PermutationMode) -> Self {
        Self { alignment, permutations, coplanar_tol: DEFAULT_COPLANAR_TOL, force_general: false }
    }

    pub fn plus_s() -> Self {
        Self::new(AlignmentKind::PlusS, PermutationMode::OneP)
    }

    pub fn plus_a() -> Self {
        Self::new(AlignmentKind::PlusA, PermutationMode::OneP)
    }

    pub fn with_permutations(mut self, permutations: PermutationMode) -> Self {
        self.permutations = permutations;
        self
    }

    fn permutations(&self) -> &'static [[usize; 4]] {
        match self.permutations {
            PermutationMode::OneP => &PERMUTATIONS[..1],
            PermutationMode::SixP => &PERMUTATIONS[..],
        }
    }
}

impl Default for SolverVariant {
    fn default() -> Self {
        Self::plus_s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverPath {
    Coplanar,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HypothesisTransform {
    Similarity(SimilarityTransform),
    Affine(AffineTransform),
}

impl HypothesisTransform {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        match self {
            Self::Similarity(t) => t.apply(x),
            Self::Affine(t) => t.apply(x),
        }
    }
}

impl PointMap for HypothesisTransform {
    fn map_point(&self, x: &Vec3) -> Vec3 {
        self.apply(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub transform: HypothesisTransform,
    /// Depths in the sample's original order.
    pub depths: [f64; 4],
    /// `source_permutation[k]` is the sample index that played `x_{k+1}`.
    pub source_permutation: [usize; 4],
    pub path: SolverPath,
}

impl Hypothesis {
    pub fn similarity(&self) -> Option<&SimilarityTransform> {
        match &self.transform {
            HypothesisTransform::Similarity(t) => Some(t),
            HypothesisTransform::Affine(_) => None,
        }
    }

    pub fn affine(&self) -> Option<&AffineTransform> {
        match &self.transform {
            HypothesisTransform::Affine(t) => Some(t),
            HypothesisTransform::Similarity(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FailureCause {
    #[error(transparent)]
    Congruence(#[from] CongruenceError),
    #[error(transparent)]
    Coplanar(#[from] CoplanarError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no depth tuple with all depths positive")]
    NoPositiveRoot,
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
}

impl FailureCause {
    /// Later stages of the pipeline give more specific diagnoses.
    fn rank(&self) -> u8 {
        match self {
            Self::Congruence(_) => 0,
            Self::Coplanar(_) | Self::Solve(_) => 1,
            Self::NoPositiveRoot => 2,
            Self::Alignment(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("minimal sample produced no hypothesis: {0}")]
    NoHypothesis(FailureCause),
}

/// Work counters for one minimal solve. Deterministic for fixed inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub coplanar_solves: usize,
    pub general_solves: usize,
    /// Predictor-corrector steps over all tracked paths.
    pub tracker_steps: usize,
    /// Positive depth tuples before alignment.
    pub depth_tuples: usize,
}

impl std::ops::AddAssign for Diagnostics {
    fn add_assign(&mut self, o: Self) {
        self.coplanar_solves += o.coplanar_solves;
        self.general_solves += o.general_solves;
        self.tracker_steps += o.tracker_steps;
        self.depth_tuples += o.depth_tuples;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalOutcome {
    pub hypotheses: Vec<Hypothesis>,
    pub diagnostics: Diagnostics,
}

pub fn solve_minimal(
    sample: &[Correspondence; 4],
    variant: &SolverVariant,
    seed: u64,
) -> Result<Vec<Hypothesis>, PipelineError> {
    solve_minimal_detailed(sample, variant, seed).map(|o| o.hypotheses)
}

pub fn solve_minimal_detailed(
    sample: &[Correspondence; 4],
    variant: &SolverVariant,
    seed: u64,
) -> Result<MinimalOutcome, PipelineError> {
    let mut hypotheses = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut cause: Option<FailureCause> = None;
    for (index, perm) in variant.permutations().iter().enumerate() {
        let points: [Vec3; 4] = perm.map(|k| sample[k].world_point);
        let rays: [Ray; 4] = perm.map(|k| sample[k].ray);
        let perm_seed = seeding::derive(seed, index as u64);
        match solve_permutation(&points, &rays, variant, perm_seed, &mut diagnostics) {
            Ok((path, tuples)) => {
                let before = hypotheses.len();
                for depths in tuples {
                    match fit(&points, &rays, &depths, variant.alignment) {
                        Ok(transform) => hypotheses.push(Hypothesis {
                            transform,
                            depths: unpermute(perm, &depths),
                            source_permutation: *perm,
                            path,
                        }),
                        Err(e) => note(&mut cause, e.into()),
                    }
                }
                if hypotheses.len() == before && cause.is_none() {
                    cause = Some(FailureCause::NoPositiveRoot);
                }
            }
            Err(e) => note(&mut cause, e),
        }
    }
    if hypotheses.is_empty() {
        return Err(PipelineError::NoHypothesis(cause.unwrap_or(FailureCause::NoPositiveRoot)));
    }
    Ok(MinimalOutcome { hypotheses, diagnostics })
}

/// Number of hypotheses [`solve_minimal`] returns; zero on failure.
pub fn count_valid_solutions(sample: &[Correspondence; 4], variant: &SolverVariant, seed: u64) -> usize {
    solve_minimal(sample, variant, seed).map_or(0, |h| h.len())
}

fn note(slot: &mut Option<FailureCause>, cause: FailureCause) {
    if slot.as_ref().is_none_or(|c| cause.rank() > c.rank()) {
        *slot = Some(cause);
    }
}

fn unpermute(perm: &[usize; 4], depths: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, &orig) in perm.iter().enumerate() {
        out[orig] = depths[k];
    }
    out
}

fn solve_permutation(
    points: &[Vec3; 4],
    rays: &[Ray; 4],
    variant: &SolverVariant,
    seed: u64,
    diag: &mut Diagnostics,
) -> Result<(SolverPath, Vec<[f64; 4]>), FailureCause> {
    let coplanar = !variant.force_general && congruence::coplanarity_test(points, variant.coplanar_tol)?;
    let ratios = congruence::compute_ratios(points)?;
    let (path, set) = if coplanar {
        diag.coplanar_solves += 1;
        (SolverPath::Coplanar, coplanar::solve_with_ratios(rays, &ratios)?)
    } else {
        diag.general_solves += 1;
        let system = QuadricSystem::new(congruence::general_rows(rays, &ratios))?;
        let set = quartic::solve(&system, &SolveOptions::with_seed(seed))?;
        diag.tracker_steps += set.stats.steps;
        (SolverPath::General, quartic::filter_positive(set, DEFAULT_POSITIVITY_SLACK))
    };
    diag.depth_tuples += set.len();
    if set.is_empty() {
        return Err(FailureCause::NoPositiveRoot);
    }
    Ok((path, set.iter().map(|s| s.depths).collect()))
}

fn fit(
    points: &[Vec3; 4],
    rays: &[Ray; 4],
    depths: &[f64; 4],
    kind: AlignmentKind,
) -> Result<HypothesisTransform, AlignmentError> {
    let pairs: PointPairSet = (0..4).map(|i| (points[i], rays[i].point_at(depths[i]))).collect();
    match kind {
        AlignmentKind::PlusS => alignment::umeyama_similarity(&pairs).map(HypothesisTransform::Similarity),
        // No unique affine map exists for coplanar sources; the similarity
        // is its best-determined restriction.
        AlignmentKind::PlusA => match alignment::affine_fit(&pairs) {
            Ok(a) => Ok(HypothesisTransform::Affine(a)),
            Err(_) => alignment::umeyama_similarity(&pairs).map(|s| HypothesisTransform::Affine(s.to_affine())),
        },
    }
}
