//! Brute-force reference root finder: damped Newton from every node of a
//! regular grid. Slow, and only as complete as the grid is dense, so it is
//! meant for verification rather than for the solver hot path.

use nalgebra::{Matrix4, Vector4};

use super::{QuadricSystem, Solution, SolutionSet, SolveStats};
use crate::geometry::Ray;

const MAX_ITERS: usize = 60;
const ACCEPT_RESIDUAL: f64 = 1e-10;
const MERGE_TOL: f64 = 1e-7;

/// Axis-aligned box `[lower, upper]⁴` sampled with `nodes_per_axis` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub nodes_per_axis: usize,
}

impl GridSpec {
    pub fn cube(half_width: f64, nodes_per_axis: usize) -> Self {
        Self { lower: -half_width, upper: half_width, nodes_per_axis }
    }

    /// `[−10B, 10B]⁴` with 9 nodes per axis, where `B` is the largest
    /// pinhole-to-pinhole distance plus one.
    pub fn for_rays(rays: &[Ray; 4]) -> Self {
        let mut b: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                b = b.max((rays[i].origin() - rays[j].origin()).norm());
            }
        }
        Self::cube(10.0 * (b + 1.0), 9)
    }

    fn node(&self, k: usize) -> f64 {
        if self.nodes_per_axis <= 1 {
            return 0.5 * (self.lower + self.upper);
        }
        self.lower + (self.upper - self.lower) * k as f64 / (self.nodes_per_axis - 1) as f64
    }
}

fn eval(system: &QuadricSystem, s: &[f64; 4]) -> Vector4<f64> {
    Vector4::from_fn(|i, _| system.rows()[i].eval(s))
}

fn jac(system: &QuadricSystem, s: &[f64; 4]) -> Matrix4<f64> {
    let g = system.rows().map(|r| r.gradient(s));
    Matrix4::from_fn(|i, j| g[i][j])
}

/// Newton with Armijo backtracking on `½‖F‖²`.
fn newton(system: &QuadricSystem, mut s: [f64; 4]) -> Option<[f64; 4]> {
    let mut f = eval(system, &s);
    let mut merit = 0.5 * f.norm_squared();
    for _ in 0..MAX_ITERS {
        if f.amax() <= ACCEPT_RESIDUAL * 1e-2 {
            break;
        }
        let step = jac(system, &s).lu().solve(&(-f))?;
        let mut lambda = 1.0;
        loop {
            let trial: [f64; 4] = std::array::from_fn(|i| s[i] + lambda * step[i]);
            let ft = eval(system, &trial);
            let mt = 0.5 * ft.norm_squared();
            // the Newton direction has directional derivative −2·merit
            if mt <= (1.0 - 1e-4 * lambda) * merit || (mt < merit && lambda < 1e-6) {
                s = trial;
                f = ft;
                merit = mt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return None;
            }
        }
        if s.iter().any(|x| !x.is_finite()) {
            return None;
        }
    }
    (f.amax() <= ACCEPT_RESIDUAL).then_some(s)
}

pub fn oracle_solve(system: &QuadricSystem, grid: &GridSpec) -> SolutionSet {
    let n = grid.nodes_per_axis.max(1);
    let mut found = Vec::new();
    let mut idx = [0usize; 4];
    loop {
        let start: [f64; 4] = std::array::from_fn(|i| grid.node(idx[i]));
        if let Some(s) = newton(system, start) {
            found.push(Solution { depths: s, residual: system.residual(&s) });
        }
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == 4 {
                return SolutionSet::from_candidates(found, MERGE_TOL, SolveStats::default());
            }
        }
    }
}
