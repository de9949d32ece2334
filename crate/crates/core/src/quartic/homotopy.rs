//! Total-degree homotopy for four quadrics in four unknowns.
//!
//! The start system is `G_i(z) = z_i² − c_i` with random unit-modulus `c_i`,
//! whose 16 roots are the sign combinations of `√c_i`. Paths of
//! `H(z, t) = γ (1 − t) G(z) + t F(z)` are tracked from `t = 0` to `t = 1`
//! with an RK4 predictor, a Newton corrector and step-size adaptation.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Quadric;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy)]
pub(crate) struct TrackerSettings {
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Newton corrector convergence, relative to `1 + ‖z‖`.
    pub corrector_tol: f64,
    pub corrector_iters: usize,
    /// `‖z‖∞` beyond which a path is declared divergent.
    pub divergence_bound: f64,
}

impl TrackerSettings {
    pub const DEFAULT: TrackerSettings = TrackerSettings {
        initial_step: 0.02,
        max_step: 0.1,
        min_step: 1e-11,
        max_steps: 2000,
        corrector_tol: 1e-6,
        corrector_iters: 3,
        divergence_bound: 1e7,
    };

    pub const CAUTIOUS: TrackerSettings = TrackerSettings {
        initial_step: 0.005,
        max_step: 0.01,
        min_step: 1e-12,
        max_steps: 8000,
        corrector_tol: 1e-11,
        corrector_iters: 3,
        divergence_bound: 1e7,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PathEnd {
    Finite([C64; 4]),
    Diverged,
    Failed,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PathResult {
    pub end: PathEnd,
    pub steps: usize,
}

pub(crate) struct Homotopy<'a> {
    target: &'a [Quadric; 4],
    gamma: C64,
    start_constants: [C64; 4],
}

impl<'a> Homotopy<'a> {
    pub fn new(target: &'a [Quadric; 4], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phase = || C64::from_polar(1.0, rng.random_range(0.0..TAU));
        let gamma = phase();
        let start_constants = [phase(), phase(), phase(), phase()];
        Self { target, gamma, start_constants }
    }

    /// The 16 start roots, ordered by their sign pattern.
    pub fn start_points(&self) -> [[C64; 4]; 16] {
        let roots = self.start_constants.map(|c| c.sqrt());
        std::array::from_fn(|mask| {
            std::array::from_fn(|i| if mask >> i & 1 == 0 { roots[i] } else { -roots[i] })
        })
    }

    /// `H(z, t)`, `∂H/∂z` and `∂H/∂t`.
    fn eval(&self, z: &[C64; 4], t: f64) -> ([C64; 4], [[C64; 4]; 4], [C64; 4]) {
        let g_weight = self.gamma * (1.0 - t);
        let mut h = [ZERO; 4];
        let mut jac = [[ZERO; 4]; 4];
        let mut ht = [ZERO; 4];
        for (k, quad) in self.target.iter().enumerate() {
            let (f, grad) = quad.eval_complex(z);
            let g = z[k] * z[k] - self.start_constants[k];
            h[k] = g_weight * g + f * t;
            ht[k] = f - self.gamma * g;
            for j in 0..4 {
                jac[k][j] = grad[j] * t;
            }
            jac[k][k] += g_weight * 2.0 * z[k];
        }
        (h, jac, ht)
    }

    fn velocity(&self, z: &[C64; 4], t: f64) -> Option<[C64; 4]> {
        let (_, jac, ht) = self.eval(z, t);
        solve4(jac, ht).map(|v| v.map(|x| -x))
    }

    /// Newton iterations at fixed `t`. Returns the refined point when the
    /// last update is below `tol · (1 + ‖z‖)`.
    fn correct(&self, mut z: [C64; 4], t: f64, iters: usize, tol: f64) -> Option<[C64; 4]> {
        let mut prev = f64::INFINITY;
        for _ in 0..iters {
            let (h, jac, _) = self.eval(&z, t);
            let dz = solve4(jac, h)?;
            let step = norm_inf(&dz);
            for i in 0..4 {
                z[i] -= dz[i];
            }
            if step <= tol * (1.0 + norm_inf(&z)) {
                return Some(z);
            }
            if step > 0.5 * prev {
                return None;
            }
            prev = step;
        }
        None
    }

    pub fn track(&self, start: [C64; 4], cfg: &TrackerSettings) -> PathResult {
        let mut z = start;
        let mut t = 0.0;
        let mut dt = cfg.initial_step;
        let mut streak = 0;
        let mut steps = 0;
        while t < 1.0 {
            if steps >= cfg.max_steps || dt < cfg.min_step {
                return PathResult { end: PathEnd::Failed, steps };
            }
            steps += 1;
            let h = dt.min(1.0 - t);
            let t_next = if h == 1.0 - t { 1.0 } else { t + h };
            match self
                .rk4(&z, t, h)
                .and_then(|zp| self.correct(zp, t_next, cfg.corrector_iters, cfg.corrector_tol))
            {
                Some(zn) => {
                    z = zn;
                    t = t_next;
                    streak += 1;
                    if streak >= 2 {
                        dt = (dt * 2.0).min(cfg.max_step);
                        streak = 0;
                    }
                }
                None => {
                    dt *= 0.5;
                    streak = 0;
                }
            }
            if norm_inf(&z) > cfg.divergence_bound {
                return PathResult { end: PathEnd::Diverged, steps };
            }
        }
        let z = self.polish_target(z);
        if norm_inf(&z) > cfg.divergence_bound || z.iter().any(|c| !c.is_finite()) {
            return PathResult { end: PathEnd::Diverged, steps };
        }
        PathResult { end: PathEnd::Finite(z), steps }
    }

    fn rk4(&self, z: &[C64; 4], t: f64, h: f64) -> Option<[C64; 4]> {
        let axpy = |a: &[C64; 4], s: f64, b: &[C64; 4]| -> [C64; 4] { std::array::from_fn(|i| a[i] + b[i] * s) };
        let k1 = self.velocity(z, t)?;
        let k2 = self.velocity(&axpy(z, 0.5 * h, &k1), t + 0.5 * h)?;
        let k3 = self.velocity(&axpy(z, 0.5 * h, &k2), t + 0.5 * h)?;
        let k4 = self.velocity(&axpy(z, h, &k3), t + h)?;
        Some(std::array::from_fn(|i| z[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0)))
    }

    /// Plain Newton on the target system; stops on stagnation.
    fn polish_target(&self, mut z: [C64; 4]) -> [C64; 4] {
        for _ in 0..8 {
            let (h, jac, _) = self.eval(&z, 1.0);
            let Some(dz) = solve4(jac, h) else { break };
            for i in 0..4 {
                z[i] -= dz[i];
            }
            if norm_inf(&dz) <= 1e-14 * (1.0 + norm_inf(&z)) {
                break;
            }
        }
        z
    }
}

/// Max-norm over real and imaginary parts; within `√2` of the modulus norm
/// and free of `hypot` calls.
pub(crate) fn norm_inf(z: &[C64; 4]) -> f64 {
    z.iter().fold(0.0, |m, c| m.max(c.re.abs()).max(c.im.abs()))
}

/// Gaussian elimination with partial pivoting on a 4×4 complex system.
fn solve4(mut a: [[C64; 4]; 4], mut b: [C64; 4]) -> Option<[C64; 4]> {
    let scale_sq = a.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm_sqr()));
    if !(scale_sq > 0.0 && scale_sq.is_finite()) {
        return None;
    }
    for col in 0..4 {
        let mut pivot = col;
        let mut best = a[col][col].norm_sqr();
        for row in (col + 1)..4 {
            let m = a[row][col].norm_sqr();
            if m > best {
                best = m;
                pivot = row;
            }
        }
        if best <= 1e-28 * scale_sq {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].inv();
        for row in (col + 1)..4 {
            let f = a[row][col] * inv;
            if f == ZERO {
                continue;
            }
            for k in col..4 {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [ZERO; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in (row + 1)..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve4_matches_known_solution() {
        let c = |re, im| C64::new(re, im);
        let a = [
            [c(2.0, 1.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, -1.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0), c(1.0, 1.0)],
            [c(1.0, 0.0), c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 2.0), c(1.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)],
        ];
        let x = [c(1.0, 0.0), c(-1.0, 2.0), c(0.5, 0.5), c(0.0, -3.0)];
        let b: [C64; 4] = std::array::from_fn(|i| (0..4).map(|j| a[i][j] * x[j]).sum());
        let got = solve4(a, b).unwrap();
        for i in 0..4 {
            assert!((got[i] - x[i]).norm() < 1e-13);
        }
        assert!(solve4([[ZERO; 4]; 4], b).is_none());
    }
}
