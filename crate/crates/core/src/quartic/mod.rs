//! Real roots of four quadrics in `(s1, s2, s3, s4)`.
//!
//! [`solve`] is the production path (homotopy continuation over 16 start
//! paths). [`oracle_solve`] is a slow multi-start Newton search used to
//! cross-check it in tests.

mod homotopy;
mod oracle;

use std::cmp::Ordering;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::congruence::{cross_index, linear_index, square_index, ConstraintRow, CONST_INDEX};
use homotopy::{norm_inf, Homotopy, PathEnd, TrackerSettings};

pub use oracle::{oracle_solve, GridSpec};

/// Upper bound on isolated solutions of four quadrics.
pub const MAX_SOLUTIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("system has non-finite coefficients")]
    NonFinite,
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

/// A quadric `zᵀQz + bᵀz + c` with symmetric `Q`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Quadric {
    q: [[f64; 4]; 4],
    b: [f64; 4],
    c: f64,
}

impl Quadric {
    fn from_row(row: &ConstraintRow) -> Self {
        let k = row.coefficients();
        let mut q = [[0.0; 4]; 4];
        for i in 0..4 {
            q[i][i] = k[square_index(i)];
            for j in (i + 1)..4 {
                let h = 0.5 * k[cross_index(i, j)];
                q[i][j] = h;
                q[j][i] = h;
            }
        }
        Self { q, b: std::array::from_fn(|i| k[linear_index(i)]), c: k[CONST_INDEX] }
    }

    pub(crate) fn eval_complex(&self, z: &[C64; 4]) -> (C64, [C64; 4]) {
        let mut value = C64::new(self.c, 0.0);
        let mut grad = [C64::new(0.0, 0.0); 4];
        for i in 0..4 {
            let qz = z[0] * self.q[i][0] + z[1] * self.q[i][1] + z[2] * self.q[i][2] + z[3] * self.q[i][3];
            value += z[i] * (qz + self.b[i]);
            grad[i] = qz * 2.0 + self.b[i];
        }
        (value, grad)
    }
}

/// Four rows over the monomial basis, each scaled to unit max-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricSystem {
    rows: [ConstraintRow; 4],
}

impl QuadricSystem {
    pub fn new(rows: [ConstraintRow; 4]) -> Result<Self, SolveError> {
        if !rows.iter().all(ConstraintRow::is_finite) {
            return Err(SolveError::NonFinite);
        }
        let rows = rows.map(|r| {
            let m = r.max_abs();
            if m > 0.0 {
                r * (1.0 / m)
            } else {
                r
            }
        });
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ConstraintRow; 4] {
        &self.rows
    }

    /// `max_k |row_k · monomials(s)|` on the normalized rows.
    pub fn residual(&self, s: &[f64; 4]) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.eval(s).abs()))
    }

    pub(crate) fn jacobian(&self, s: &[f64; 4]) -> Matrix4<f64> {
        let g = self.rows.map(|r| r.gradient(s));
        Matrix4::from_fn(|i, j| g[i][j])
    }

    fn values(&self, s: &[f64; 4]) -> Vector4<f64> {
        Vector4::from_fn(|i, _| self.rows[i].eval(s))
    }

    /// Characteristic length of the roots, from the balance between the
    /// quadratic and constant (or linear) coefficient magnitudes.
    fn variable_scale(&self) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut cst = 0.0;
        for r in &self.rows {
            let k = r.coefficients();
            quad += k[..10].iter().map(|c| c.abs()).sum::<f64>();
            lin += k[10..14].iter().map(|c| c.abs()).sum::<f64>();
            cst += k[CONST_INDEX].abs();
        }
        let sigma = if quad > 0.0 && cst > 0.0 {
            (cst / quad).sqrt()
        } else if quad > 0.0 && lin > 0.0 {
            lin / quad
        } else {
            1.0
        };
        if sigma.is_finite() && sigma > 0.0 {
            sigma
        } else {
            1.0
        }
    }

    /// The system in `z = s / sigma`, with rows renormalized.
    fn rescaled(&self, sigma: f64) -> [Quadric; 4] {
        self.rows.map(|r| {
            let mut k = *r.coefficients();
            k[..10].iter_mut().for_each(|c| *c *= sigma * sigma);
            k[10..14].iter_mut().for_each(|c| *c *= sigma);
            let row = ConstraintRow(k);
            let m = row.max_abs();
            Quadric::from_row(&if m > 0.0 { row * (1.0 / m) } else { row })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Maximum accepted residual on the normalized system.
    pub residual_tol: f64,
    /// Relative distance under which two roots are merged.
    pub merge_tol: f64,
    /// A root is real when every `|Im z_i| ≤ imag_tol · (1 + |Re z_i|)`,
    /// measured in the solver's internally rescaled variables.
    pub imag_tol: f64,
    /// Seeds the random start system.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-6, merge_tol: 1e-7, imag_tol: 1e-6, seed: 0 }
    }
}

impl SolveOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

/// Default slack for [`filter_positive`].
pub const DEFAULT_POSITIVITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub depths: [f64; 4],
    pub residual: f64,
}

/// Path-tracking counters for one solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub finite_paths: usize,
    pub diverged_paths: usize,
    pub failed_paths: usize,
    pub retracked_paths: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionSet {
    pub solutions: Vec<Solution>,
    pub stats: SolveStats,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter()
    }

    /// Sorts lexicographically and merges roots within `merge_tol`,
    /// keeping the lower-residual representative.
    pub(crate) fn from_candidates(mut cands: Vec<Solution>, merge_tol: f64, stats: SolveStats) -> Self {
        cands.sort_by(|a, b| a.residual.total_cmp(&b.residual));
        let mut kept: Vec<Solution> = Vec::with_capacity(cands.len());
        for c in cands {
            let dup = kept.iter().any(|k| {
                let scale = 1.0 + max_abs(&k.depths).max(max_abs(&c.depths));
                (0..4).all(|i| (k.depths[i] - c.depths[i]).abs() <= merge_tol * scale)
            });
            if !dup {
                kept.push(c);
            }
        }
        kept.sort_by(|a, b| lex_cmp(&a.depths, &b.depths));
        Self { solutions: kept, stats }
    }
}

fn max_abs(s: &[f64; 4]) -> f64 {
    s.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn lex_cmp(a: &[f64; 4], b: &[f64; 4]) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Damped Newton on the real system. Returns the best point seen.
fn polish_real(system: &QuadricSystem, mut s: [f64; 4]) -> ([f64; 4], f64) {
    let mut res = system.residual(&s);
    for _ in 0..12 {
        if res <= 1e-12 {
            break;
        }
        let Some(dx) = system.jacobian(&s).lu().solve(&system.values(&s)) else { break };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda >= 1.0 / 64.0 {
            let trial: [f64; 4] = std::array::from_fn(|i| s[i] - lambda * dx[i]);
            let r = system.residual(&trial);
            if r < res {
                s = trial;
                res = r;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (s, res)
}

/// All isolated real roots of `system`.
pub fn solve(system: &QuadricSystem, opts: &SolveOptions) -> Result<SolutionSet, SolveError> {
    if system.rows.iter().any(|r| r.max_abs() == 0.0) {
        return Err(SolveError::SolverFailure("system has an all-zero row".into()));
    }
    let sigma = system.variable_scale();
    let target = system.rescaled(sigma);
    let homotopy = Homotopy::new(&target, opts.seed);
    let starts = homotopy.start_points();

    let mut stats = SolveStats::default();
    let mut ends: Vec<PathEnd> = Vec::with_capacity(MAX_SOLUTIONS);
    for start in starts {
        let r = homotopy.track(start, &TrackerSettings::DEFAULT);
        stats.steps += r.steps;
        ends.push(r.end);
    }

    // Two paths landing on the same point usually means one jumped; retrack
    // both with smaller steps.
    let mut suspects = vec![false; ends.len()];
    for i in 0..ends.len() {
        for j in (i + 1)..ends.len() {
            if let (PathEnd::Finite(a), PathEnd::Finite(b)) = (&ends[i], &ends[j]) {
                let d: [C64; 4] = std::array::from_fn(|k| a[k] - b[k]);
                if norm_inf(&d) <= 1e-6 * (1.0 + norm_inf(a)) {
                    suspects[i] = true;
                    suspects[j] = true;
                }
            }
        }
    }
    for (i, suspect) in suspects.iter().enumerate() {
        if *suspect || ends[i] == PathEnd::Failed {
            let r = homotopy.track(starts[i], &TrackerSettings::CAUTIOUS);
            stats.steps += r.steps;
            stats.retracked_paths += 1;
            if r.end != PathEnd::Failed || ends[i] == PathEnd::Failed {
                ends[i] = r.end;
            }
        }
    }

    let mut candidates = Vec::new();
    for end in &ends {
        match end {
            PathEnd::Finite(z) => {
                stats.finite_paths += 1;
                let real = z.iter().all(|c| c.im.abs() <= opts.imag_tol * (1.0 + c.re.abs()));
                if real {
                    let s0: [f64; 4] = std::array::from_fn(|i| z[i].re * sigma);
                    let (s, residual) = polish_real(system, s0);
                    if residual <= opts.residual_tol && s.iter().all(|x| x.is_finite()) {
                        candidates.push(Solution { depths: s, residual });
                    }
                }
            }
            PathEnd::Diverged => stats.diverged_paths += 1,
            PathEnd::Failed => stats.failed_paths += 1,
        }
    }
    if stats.finite_paths == 0 {
        return Err(SolveError::SolverFailure(format!(
            "no path reached a finite endpoint ({} diverged, {} failed)",
            stats.diverged_paths, stats.failed_paths
        )));
    }
    Ok(SolutionSet::from_candidates(candidates, opts.merge_tol, stats))
}

/// Keeps tuples whose components are all `≥ −slack`, clamping them to `≥ 0`.
pub fn filter_positive(solutions: SolutionSet, slack: f64) -> SolutionSet {
    let stats = solutions.stats;
    let kept = solutions
        .solutions
        .into_iter()
        .filter(|s| s.depths.iter().all(|d| *d >= -slack))
        .map(|mut s| {
            s.depths.iter_mut().for_each(|d| *d = d.max(0.0));
            s
        })
        .collect();
    SolutionSet { solutions: kept, stats }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `s_i² − 1 = 0` for every `i`.
    pub(crate) fn decoupled(constant: f64) -> QuadricSystem {
        QuadricSystem::new(std::array::from_fn(|i| {
            let mut r = ConstraintRow::zero();
            r.0[square_index(i)] = 1.0;
            r.0[CONST_INDEX] = constant;
            r
        }))
        .unwrap()
    }

    #[test]
    fn decoupled_system_has_all_sign_tuples() {
        let set = solve(&decoupled(-1.0), &SolveOptions::default()).unwrap();
        assert_eq!(set.len(), 16);
        for mask in 0..16usize {
            let want: [f64; 4] = std::array::from_fn(|i| if mask >> i & 1 == 0 { 1.0 } else { -1.0 });
            assert!(set.iter().any(|s| (0..4).all(|i| (s.depths[i] - want[i]).abs() < 1e-12)));
        }
        assert!(set.iter().all(|s| s.residual <= 1e-10));
        // lexicographic order
        for w in set.solutions.windows(2) {
            assert_eq!(lex_cmp(&w[0].depths, &w[1].depths), Ordering::Less);
        }
    }

    #[test]
    fn complex_only_system_has_no_real_roots() {
        let mut rows = *decoupled(-1.0).rows();
        rows[0].0[CONST_INDEX] = 1.0;
        let set = solve(&QuadricSystem::new(rows).unwrap(), &SolveOptions::default()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.stats.finite_paths, 16);
    }

    #[test]
    fn zero_row_is_a_solver_failure() {
        let mut rows = *decoupled(-1.0).rows();
        rows[2] = ConstraintRow::zero();
        let err = solve(&QuadricSystem::new(rows).unwrap(), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::SolverFailure(_)));
    }

    #[test]
    fn non_finite_rows_are_rejected() {
        let mut rows = *decoupled(-1.0).rows();
        rows[1].0[3] = f64::NAN;
        assert_eq!(QuadricSystem::new(rows), Err(SolveError::NonFinite));
    }

    #[test]
    fn rows_are_normalized() {
        let mut rows = *decoupled(-1.0).rows();
        rows[0] = rows[0] * 250.0;
        let sys = QuadricSystem::new(rows).unwrap();
        assert!(sys.rows().iter().all(|r| (r.max_abs() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn filter_positive_examples() {
        let set = SolutionSet {
            solutions: vec![
                Solution { depths: [1.0, 1.0, 1.0, 1.0], residual: 0.0 },
                Solution { depths: [-1.0, 1.0, 1.0, 1.0], residual: 0.0 },
                Solution { depths: [-1e-12, 1.0, 2.0, 3.0], residual: 0.0 },
            ],
            stats: SolveStats::default(),
        };
        let kept = filter_positive(set, DEFAULT_POSITIVITY_SLACK);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.solutions[0].depths, [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(kept.solutions[1].depths, [0.0, 1.0, 2.0, 3.0]);
        assert!(filter_positive(SolutionSet::default(), 1e-9).is_empty());
    }

    #[test]
    fn solve_is_deterministic_for_a_seed() {
        let mut rows = *decoupled(-1.0).rows();
        rows[0].0[cross_index(0, 1)] = 0.7;
        rows[3].0[linear_index(2)] = -0.3;
        let sys = QuadricSystem::new(rows).unwrap();
        let a = solve(&sys, &SolveOptions::with_seed(5)).unwrap();
        let b = solve(&sys, &SolveOptions::with_seed(5)).unwrap();
        assert_eq!(a, b);
    }
}
