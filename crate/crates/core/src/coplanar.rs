//! Closed-form solver for coplanar world points.
//!
//! When the four points are coplanar the two diagonals meet, which gives
//! three linear equations in the depths. Cramer's rule expresses `s1..s3` as
//! affine functions of `s4`; substituting them into the `(e12, e13)`
//! distance-ratio constraint leaves a quadratic in `s4`.

use thiserror::Error;

use crate::congruence::{
    self, coplanar_linear_system, CongruenceError, CongruenceRatios, ConstraintRow, Edge,
};
use crate::geometry::{Mat3, Ray, Vec3};
use crate::quartic::{Solution, SolutionSet, SolveStats};

const SINGULAR_TOL: f64 = 1e-12;
const LINEAR_FALLBACK_TOL: f64 = 1e-14;
const DOUBLE_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoplanarError {
    #[error("coplanar linear system is singular (normalized det {det:e})")]
    SingularConfiguration { det: f64 },
    #[error("depth quadratic has no real root (discriminant {discriminant:e})")]
    NoRealRoot { discriminant: f64 },
    #[error(transparent)]
    Congruence(#[from] CongruenceError),
}

/// `s_k = g[k] · s4 + h[k]` for `k = 1..3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoplanarReduction {
    pub g: [f64; 3],
    pub h: [f64; 3],
}

impl CoplanarReduction {
    pub fn depths(&self, s4: f64) -> [f64; 4] {
        [
            self.g[0] * s4 + self.h[0],
            self.g[1] * s4 + self.h[1],
            self.g[2] * s4 + self.h[2],
            s4,
        ]
    }
}

/// `a · s4² + b · s4 + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

pub fn reduce(rays: &[Ray; 4], ratios: &CongruenceRatios) -> Result<CoplanarReduction, CoplanarError> {
    let lin = coplanar_linear_system(rays, ratios);
    let mut m = lin.matrix;
    let mut d0 = lin.rhs_constant;
    let mut d1 = lin.rhs_s4;
    for i in 0..3 {
        let n = m.row(i).norm();
        if n > 0.0 {
            m.row_mut(i).scale_mut(1.0 / n);
            d0[i] /= n;
            d1[i] /= n;
        }
    }
    let det = m.determinant();
    if !(det.abs() > SINGULAR_TOL) {
        return Err(CoplanarError::SingularConfiguration { det });
    }
    let cramer = |rhs: &Vec3, k: usize| {
        let mut mk: Mat3 = m;
        mk.set_column(k, rhs);
        mk.determinant() / det
    };
    Ok(CoplanarReduction {
        g: std::array::from_fn(|k| cramer(&d1, k)),
        h: std::array::from_fn(|k| cramer(&d0, k)),
    })
}

/// The nine coefficients of `β12 − K1213 β13` on
/// `[s1², s2², s3², s1s2, s1s3, s1, s2, s3, 1]`.
pub fn c_terms(rays: &[Ray; 4], k1213: f64) -> [f64; 9] {
    let [u1, u2, u3] = [0, 1, 2].map(|i| *rays[i].direction());
    let p6 = rays[0].origin() - rays[1].origin();
    let p8 = rays[0].origin() - rays[2].origin();
    [
        1.0 - k1213,
        1.0,
        -k1213,
        -2.0 * u1.dot(&u2),
        2.0 * k1213 * u1.dot(&u3),
        2.0 * u1.dot(&p6) - 2.0 * k1213 * u1.dot(&p8),
        -2.0 * u2.dot(&p6),
        2.0 * k1213 * u3.dot(&p8),
        p6.dot(&p6) - k1213 * p8.dot(&p8),
    ]
}

pub fn quadratic_coefficients(
    reduction: &CoplanarReduction,
    rays: &[Ray; 4],
    k1213: f64,
) -> QuadraticCoefficients {
    let [c1, c2, c3, c4, c5, c6, c7, c8, c9] = c_terms(rays, k1213);
    let [g1, g2, g3] = reduction.g;
    let [h1, h2, h3] = reduction.h;
    QuadraticCoefficients {
        a: c1 * g1 * g1 + c2 * g2 * g2 + c3 * g3 * g3 + c4 * g1 * g2 + c5 * g1 * g3,
        b: 2.0 * (c1 * g1 * h1 + c2 * g2 * h2 + c3 * g3 * h3)
            + c4 * (g1 * h2 + g2 * h1)
            + c5 * (g1 * h3 + g3 * h1)
            + c6 * g1
            + c7 * g2
            + c8 * g3,
        c: c1 * h1 * h1 + c2 * h2 * h2 + c3 * h3 * h3 + c4 * h1 * h2 + c5 * h1 * h3 + c6 * h1 + c7 * h2 + c8 * h3 + c9,
    }
}

/// Real roots of the quadratic, with a linear fallback for vanishing `a`.
fn real_roots(q: &QuadraticCoefficients) -> Result<Vec<f64>, CoplanarError> {
    let QuadraticCoefficients { a, b, c } = *q;
    if a.abs() <= LINEAR_FALLBACK_TOL * b.abs().max(c.abs()) {
        if b == 0.0 {
            return Err(CoplanarError::NoRealRoot { discriminant: f64::NEG_INFINITY });
        }
        return Ok(vec![-c / b]);
    }
    let disc = b * b - 4.0 * a * c;
    let tol = DOUBLE_ROOT_TOL * b * b;
    if disc < -tol {
        return Err(CoplanarError::NoRealRoot { discriminant: disc });
    }
    if disc.abs() <= tol {
        return Ok(vec![-b / (2.0 * a)]);
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = vec![q / a];
    if q != 0.0 {
        roots.push(c / q);
    }
    Ok(roots)
}

/// Solves with precomputed ratios. Returns only all-positive depth tuples.
pub fn solve_with_ratios(rays: &[Ray; 4], ratios: &CongruenceRatios) -> Result<SolutionSet, CoplanarError> {
    let reduction = reduce(rays, ratios)?;
    let k1213 = ratios.k(Edge::E12, Edge::E13);
    let quad = quadratic_coefficients(&reduction, rays, k1213);
    let lin = coplanar_linear_system(rays, ratios);
    let ratio_row = congruence::distance_ratio_row((Edge::E12, Edge::E13), rays, ratios)?;
    let row_scale = ratio_row.max_abs().max(f64::MIN_POSITIVE);

    let mut solutions = Vec::with_capacity(2);
    for s4 in real_roots(&quad)? {
        let s = reduction.depths(s4);
        if s.iter().all(|x| *x > 0.0 && x.is_finite()) {
            solutions.push(Solution { depths: s, residual: residual(&lin, &ratio_row, row_scale, &s) });
        }
    }
    let stats = SolveStats { finite_paths: solutions.len(), ..SolveStats::default() };
    Ok(SolutionSet { solutions, stats })
}

fn residual(
    lin: &congruence::CoplanarLinearSystem,
    ratio_row: &ConstraintRow,
    row_scale: f64,
    s: &[f64; 4],
) -> f64 {
    lin.residual(s).amax().max(ratio_row.eval(s).abs() / row_scale)
}

pub fn solve_coplanar(rays: &[Ray; 4], points: &[Vec3; 4]) -> Result<SolutionSet, CoplanarError> {
    let ratios = congruence::compute_ratios(points)?;
    solve_with_ratios(rays, &ratios)
}
