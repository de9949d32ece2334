//! Affine-invariant ratios of 4-point sets and the polynomial constraint rows
//! they induce on the four ray depths.
//!
//! All rows are expressed over the fixed monomial basis
//!
//! ```text
//! [s1², s2², s3², s4², s1s2, s1s3, s1s4, s2s3, s2s4, s3s4, s1, s2, s3, s4, 1]
//! ```
//!
//! Indices in this module are zero-based: ray `0` carries depth `s1`.

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::geometry::{Mat3, Ray, Vec3};

pub const NUM_MONOMIALS: usize = 15;
pub const CONST_INDEX: usize = 14;

/// Default threshold on the scale-normalized volume used to dispatch to the
/// coplanar solver.
pub const DEFAULT_COPLANAR_TOL: f64 = 1e-9;

const PARALLEL_TOL: f64 = 1e-10;
const DISTINCT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CongruenceError {
    #[error("input points are not pairwise distinct")]
    DegenerateInput,
    #[error("lines x1x2 and x3x4 are parallel; closest points are not unique")]
    ParallelLines,
    #[error("edge pair {0:?} is not one of the five independent distance-ratio pairs")]
    UnknownPair((Edge, Edge)),
}

/// Position of `s_i²` in the monomial basis.
pub const fn square_index(i: usize) -> usize {
    i
}

/// Position of `s_i s_j` (`i != j`) in the monomial basis.
pub const fn cross_index(i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 1) => 4,
        (0, 2) => 5,
        (0, 3) => 6,
        (1, 2) => 7,
        (1, 3) => 8,
        (2, 3) => 9,
        _ => panic!("cross_index needs distinct indices in 0..4"),
    }
}

/// Position of `s_i` in the monomial basis.
pub const fn linear_index(i: usize) -> usize {
    10 + i
}

/// Evaluates the monomial basis at `s`.
pub fn monomials(s: &[f64; 4]) -> [f64; NUM_MONOMIALS] {
    let [a, b, c, d] = *s;
    [a * a, b * b, c * c, d * d, a * b, a * c, a * d, b * c, b * d, c * d, a, b, c, d, 1.0]
}

/// Coefficients of one quadratic polynomial in `s1..s4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow(pub [f64; NUM_MONOMIALS]);

impl ConstraintRow {
    pub fn zero() -> Self {
        Self([0.0; NUM_MONOMIALS])
    }

    pub fn coefficients(&self) -> &[f64; NUM_MONOMIALS] {
        &self.0
    }

    pub fn eval(&self, s: &[f64; 4]) -> f64 {
        self.0.iter().zip(monomials(s)).map(|(c, m)| c * m).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Gradient with respect to `s` at `s`.
    pub fn gradient(&self, s: &[f64; 4]) -> [f64; 4] {
        let c = &self.0;
        let mut g = [0.0; 4];
        for i in 0..4 {
            g[i] = 2.0 * c[square_index(i)] * s[i] + c[linear_index(i)];
            for j in 0..4 {
                if j != i {
                    g[i] += c[cross_index(i, j)] * s[j];
                }
            }
        }
        g
    }
}

impl Add for ConstraintRow {
    type Output = ConstraintRow;
    fn add(mut self, rhs: ConstraintRow) -> ConstraintRow {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for ConstraintRow {
    type Output = ConstraintRow;
    fn sub(mut self, rhs: ConstraintRow) -> ConstraintRow {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Mul<f64> for ConstraintRow {
    type Output = ConstraintRow;
    fn mul(mut self, k: f64) -> ConstraintRow {
        self.0.iter_mut().for_each(|a| *a *= k);
        self
    }
}

/// Vector expression `constant + Σ_k coeffs[k] · s_k`, affine in the depths.
#[derive(Debug, Clone, Copy)]
struct AffineVec {
    constant: Vec3,
    coeffs: [Vec3; 4],
}

impl AffineVec {
    fn zero() -> Self {
        Self { constant: Vec3::zeros(), coeffs: [Vec3::zeros(); 4] }
    }

    /// The point `p_i + s_i u_i` on ray `i`.
    fn on_ray(rays: &[Ray; 4], i: usize) -> Self {
        let mut v = Self::zero();
        v.constant = *rays[i].origin();
        v.coeffs[i] = *rays[i].direction();
        v
    }

    fn scaled(mut self, k: f64) -> Self {
        self.constant *= k;
        self.coeffs.iter_mut().for_each(|c| *c *= k);
        self
    }

    fn plus(mut self, o: &Self) -> Self {
        self.constant += o.constant;
        for (c, d) in self.coeffs.iter_mut().zip(o.coeffs.iter()) {
            *c += d;
        }
        self
    }

    fn minus(self, o: &Self) -> Self {
        self.plus(&o.scaled(-1.0))
    }

    /// Monomial coefficients of the dot product `self(s) · other(s)`.
    fn dot(&self, o: &Self) -> ConstraintRow {
        let mut row = ConstraintRow::zero();
        for i in 0..4 {
            row.0[square_index(i)] += self.coeffs[i].dot(&o.coeffs[i]);
            for j in (i + 1)..4 {
                row.0[cross_index(i, j)] +=
                    self.coeffs[i].dot(&o.coeffs[j]) + self.coeffs[j].dot(&o.coeffs[i]);
            }
            row.0[linear_index(i)] +=
                self.coeffs[i].dot(&o.constant) + o.coeffs[i].dot(&self.constant);
        }
        row.0[CONST_INDEX] = self.constant.dot(&o.constant);
        row
    }
}

/// One of the six edges of the tetrahedron `x1x2x3x4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    E12,
    E13,
    E14,
    E23,
    E24,
    E34,
}

impl Edge {
    pub const ALL: [Edge; 6] = [Edge::E12, Edge::E13, Edge::E14, Edge::E23, Edge::E24, Edge::E34];

    /// Zero-based endpoint indices.
    pub fn endpoints(self) -> (usize, usize) {
        match self {
            Edge::E12 => (0, 1),
            Edge::E13 => (0, 2),
            Edge::E14 => (0, 3),
            Edge::E23 => (1, 2),
            Edge::E24 => (1, 3),
            Edge::E34 => (2, 3),
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// The five edge pairs whose distance ratios are independent.
pub const INDEPENDENT_PAIRS: [(Edge, Edge); 5] = [
    (Edge::E12, Edge::E34),
    (Edge::E12, Edge::E13),
    (Edge::E12, Edge::E14),
    (Edge::E12, Edge::E23),
    (Edge::E12, Edge::E24),
];

/// Line parameters of the mutually closest points and the squared edge
/// lengths of a 4-point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongruenceRatios {
    /// `m′ = x1 + r1 (x2 − x1)`.
    pub r1: f64,
    /// `m″ = x3 + r2 (x4 − x3)`.
    pub r2: f64,
    /// Length of the common perpendicular `‖m′ − m″‖`; zero for coplanar sets.
    pub separation: f64,
    squared_lengths: [f64; 6],
}

impl CongruenceRatios {
    pub fn squared_length(&self, e: Edge) -> f64 {
        self.squared_lengths[e.slot()]
    }

    /// `K = d(first)² / d(second)²`.
    pub fn k(&self, first: Edge, second: Edge) -> f64 {
        self.squared_length(first) / self.squared_length(second)
    }

    /// Replaces one ratio by overriding the squared length of `second`
    /// relative to `first`. Test and diagnostics helper.
    pub fn with_k(mut self, first: Edge, second: Edge, k: f64) -> Self {
        self.squared_lengths[second.slot()] = self.squared_length(first) / k;
        self
    }
}

fn mean_pairwise_distance(points: &[Vec3; 4]) -> f64 {
    Edge::ALL
        .iter()
        .map(|e| {
            let (i, j) = e.endpoints();
            (points[i] - points[j]).norm()
        })
        .sum::<f64>()
        / 6.0
}

fn check_distinct(points: &[Vec3; 4]) -> Result<f64, CongruenceError> {
    let l = mean_pairwise_distance(points);
    let distinct = Edge::ALL.iter().all(|e| {
        let (i, j) = e.endpoints();
        (points[i] - points[j]).norm() >= DISTINCT_TOL * l
    });
    if !(distinct && l > 0.0 && l.is_finite()) {
        return Err(CongruenceError::DegenerateInput);
    }
    Ok(l)
}

/// Scale-normalized volume test `|(x2−x1)×(x3−x1)·(x4−x1)| / L³ ≤ tol`.
pub fn coplanarity_test(points: &[Vec3; 4], tol: f64) -> Result<bool, CongruenceError> {
    let l = check_distinct(points)?;
    let [x1, x2, x3, x4] = points;
    let vol = (x2 - x1).cross(&(x3 - x1)).dot(&(x4 - x1)).abs();
    Ok(vol / (l * l * l) <= tol)
}

pub fn compute_ratios(points: &[Vec3; 4]) -> Result<CongruenceRatios, CongruenceError> {
    check_distinct(points)?;
    let [x1, x2, x3, x4] = points;
    let d1 = x2 - x1;
    let d2 = x4 - x3;
    let w = x1 - x3;
    let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let (d, e) = (d1.dot(&w), d2.dot(&w));
    let denom = a * c - b * b;
    if denom <= PARALLEL_TOL * a * c {
        return Err(CongruenceError::ParallelLines);
    }
    let r1 = (b * e - c * d) / denom;
    let r2 = (a * e - b * d) / denom;
    let m1 = x1 + d1 * r1;
    let m2 = x3 + d2 * r2;
    let mut squared_lengths = [0.0; 6];
    for e in Edge::ALL {
        let (i, j) = e.endpoints();
        squared_lengths[e.slot()] = (points[i] - points[j]).norm_squared();
    }
    Ok(CongruenceRatios { r1, r2, separation: (m1 - m2).norm(), squared_lengths })
}

/// Coefficients of `‖(p_i + s_i u_i) − (p_j + s_j u_j)‖²`.
///
/// # Panics
/// If `i == j` or either index is outside `0..4`.
pub fn beta_coefficients(i: usize, j: usize, rays: &[Ray; 4]) -> ConstraintRow {
    assert!(i < 4 && j < 4 && i != j, "beta needs two distinct ray indices in 0..4");
    let e = AffineVec::on_ray(rays, i).minus(&AffineVec::on_ray(rays, j));
    e.dot(&e)
}

fn beta_edge(edge: Edge, rays: &[Ray; 4]) -> ConstraintRow {
    let (i, j) = edge.endpoints();
    beta_coefficients(i, j, rays)
}

/// `m12 − m34` as an affine function of the depths.
fn midpoint_gap(rays: &[Ray; 4], ratios: &CongruenceRatios) -> AffineVec {
    let (r1, r2) = (ratios.r1, ratios.r2);
    let m12 = AffineVec::on_ray(rays, 0)
        .scaled(1.0 - r1)
        .plus(&AffineVec::on_ray(rays, 1).scaled(r1));
    let m34 = AffineVec::on_ray(rays, 2)
        .scaled(1.0 - r2)
        .plus(&AffineVec::on_ray(rays, 3).scaled(r2));
    m12.minus(&m34)
}

/// `(y1 − y2)ᵀ(m12 − m34)` and `(y3 − y4)ᵀ(m12 − m34)`.
pub fn orthogonality_rows(rays: &[Ray; 4], ratios: &CongruenceRatios) -> [ConstraintRow; 2] {
    let gap = midpoint_gap(rays, ratios);
    let e12 = AffineVec::on_ray(rays, 0).minus(&AffineVec::on_ray(rays, 1));
    let e34 = AffineVec::on_ray(rays, 2).minus(&AffineVec::on_ray(rays, 3));
    [e12.dot(&gap), e34.dot(&gap)]
}

/// `β_first − K · β_second` for one of the [`INDEPENDENT_PAIRS`].
pub fn distance_ratio_row(
    pair: (Edge, Edge),
    rays: &[Ray; 4],
    ratios: &CongruenceRatios,
) -> Result<ConstraintRow, CongruenceError> {
    if !INDEPENDENT_PAIRS.contains(&pair) {
        return Err(CongruenceError::UnknownPair(pair));
    }
    let (first, second) = pair;
    Ok(ratio_combination(beta_edge(first, rays), beta_edge(second, rays), ratios.k(first, second)))
}

fn ratio_combination(first: ConstraintRow, second: ConstraintRow, k: f64) -> ConstraintRow {
    first - second * k
}

/// The four rows solved in the non-coplanar case: both orthogonality rows,
/// then the `(e12, e34)` and `(e12, e13)` distance-ratio rows.
pub fn general_rows(rays: &[Ray; 4], ratios: &CongruenceRatios) -> [ConstraintRow; 4] {
    let [o1, o2] = orthogonality_rows(rays, ratios);
    let b12 = beta_edge(Edge::E12, rays);
    let k1234 = ratio_combination(b12, beta_edge(Edge::E34, rays), ratios.k(Edge::E12, Edge::E34));
    let k1213 = ratio_combination(b12, beta_edge(Edge::E13, rays), ratios.k(Edge::E12, Edge::E13));
    [o1, o2, k1234, k1213]
}

/// `M · (s1, s2, s3)ᵀ = d0 + d1 · s4`, the three coordinates of `m12 = m34`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoplanarLinearSystem {
    /// Columns multiply `s1`, `s2`, `s3`.
    pub matrix: Mat3,
    pub rhs_constant: Vec3,
    pub rhs_s4: Vec3,
}

impl CoplanarLinearSystem {
    /// Per-row residual `M s − (d0 + d1 s4)`.
    pub fn residual(&self, s: &[f64; 4]) -> Vec3 {
        self.matrix * Vec3::new(s[0], s[1], s[2]) - (self.rhs_constant + self.rhs_s4 * s[3])
    }
}

pub fn coplanar_linear_system(rays: &[Ray; 4], ratios: &CongruenceRatios) -> CoplanarLinearSystem {
    let (r1, r2) = (ratios.r1, ratios.r2);
    let [p1, p2, p3, p4] = [0, 1, 2, 3].map(|i| *rays[i].origin());
    let [u1, u2, u3, u4] = [0, 1, 2, 3].map(|i| *rays[i].direction());
    let matrix = Mat3::from_columns(&[u1 * (1.0 - r1), u2 * r1, -u3 * (1.0 - r2)]);
    let rhs_constant = p3 * (1.0 - r2) + p4 * r2 - p1 * (1.0 - r1) - p2 * r1;
    CoplanarLinearSystem { matrix, rhs_constant, rhs_s4: u4 * r2 }
}
