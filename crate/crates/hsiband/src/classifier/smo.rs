//! Sequential minimal optimization for a single soft-margin RBF machine.
//!
//! Platt-style working-set selection: the second-choice heuristic picks the
//! partner maximizing |E1 - E2| over non-bound examples, and the fallback
//! scans start at a seeded random position, so training is deterministic for
//! a fixed seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SvmParams;

/// Largest training-set size for which the full Gram matrix is kept.
const GRAM_LIMIT: usize = 2048;

/// Dual solution of one binary subproblem.
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub sweeps: usize,
}

pub struct Gram<'a> {
    x: &'a [f64],
    n: usize,
    dim: usize,
    gamma: f64,
    full: Option<Vec<f64>>,
}

impl<'a> Gram<'a> {
    pub fn new(x: &'a [f64], n: usize, dim: usize, gamma: f64) -> Gram<'a> {
        debug_assert_eq!(x.len(), n * dim);
        let full = if n <= GRAM_LIMIT {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let k = rbf(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim], gamma);
                    m[i * n + j] = k;
                    m[j * n + i] = k;
                }
            }
            Some(m)
        } else {
            None
        };
        Gram {
            x,
            n,
            dim,
            gamma,
            full,
        }
    }

    #[inline]
    pub fn k(&self, i: usize, j: usize) -> f64 {
        match &self.full {
            Some(m) => m[i * self.n + j],
            None => rbf(
                &self.x[i * self.dim..(i + 1) * self.dim],
                &self.x[j * self.dim..(j + 1) * self.dim],
                self.gamma,
            ),
        }
    }

    /// Row i of the Gram matrix into `buf`.
    pub fn row_into(&self, i: usize, buf: &mut [f64]) {
        match &self.full {
            Some(m) => buf.copy_from_slice(&m[i * self.n..(i + 1) * self.n]),
            None => {
                let xi = &self.x[i * self.dim..(i + 1) * self.dim];
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = rbf(xi, &self.x[j * self.dim..(j + 1) * self.dim], self.gamma);
                }
            }
        }
    }
}

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d = 0.0;
    for (&u, &v) in a.iter().zip(b) {
        let t = u - v;
        d += t * t;
    }
    (-gamma * d).exp()
}

struct Solver<'a> {
    gram: &'a Gram<'a>,
    y: &'a [f64],
    c: f64,
    tol: f64,
    alphas: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    row1: Vec<f64>,
    row2: Vec<f64>,
}

const STEP_EPS: f64 = 1e-6;

impl<'a> Solver<'a> {
    fn non_bound(&self) -> Vec<usize> {
        (0..self.y.len())
            .filter(|&i| self.alphas[i] > 0.0 && self.alphas[i] < self.c)
            .collect()
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2_old - a1_old).max(0.0), (self.c + a2_old - a1_old).min(self.c))
        } else {
            ((a1_old + a2_old - self.c).max(0.0), (a1_old + a2_old).min(self.c))
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let k11 = self.gram.k(i1, i1);
        let k12 = self.gram.k(i1, i2);
        let k22 = self.gram.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Flat direction: evaluate the dual objective at both ends.
            let gamma_sum = a1_old + s * a2_old;
            let v1 = (e1 + y1) - self.bias - y1 * a1_old * k11 - y2 * a2_old * k12;
            let v2 = (e2 + y2) - self.bias - y1 * a1_old * k12 - y2 * a2_old * k22;
            let obj = |a2e: f64| {
                let a1e = gamma_sum - s * a2e;
                0.5 * k11 * a1e * a1e
                    + 0.5 * k22 * a2e * a2e
                    + s * k12 * a1e * a2e
                    + y1 * a1e * v1
                    + y2 * a2e * v2
                    - a1e
                    - a2e
            };
            let (obj_lo, obj_hi) = (obj(lo), obj(hi));
            if obj_lo < obj_hi - 1e-12 {
                lo
            } else if obj_lo > obj_hi + 1e-12 {
                hi
            } else {
                return false;
            }
        };
        if (a2 - a2_old).abs() < STEP_EPS * (a2 + a2_old + STEP_EPS) {
            return false;
        }
        let mut a1 = a1_old + s * (a2_old - a2);
        if a1 < 0.0 {
            a1 = 0.0;
        } else if a1 > self.c {
            a1 = self.c;
        }
        if a2 < 0.0 {
            a2 = 0.0;
        } else if a2 > self.c {
            a2 = self.c;
        }

        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let bias_delta = new_bias - self.bias;
        self.bias = new_bias;
        self.alphas[i1] = a1;
        self.alphas[i2] = a2;

        let n = self.y.len();
        self.gram.row_into(i1, &mut self.row1[..n]);
        self.gram.row_into(i2, &mut self.row2[..n]);
        for i in 0..n {
            self.errors[i] += d1 * self.row1[i] + d2 * self.row2[i] + bias_delta;
        }
        true
    }

    fn examine(&mut self, i2: usize, rng: &mut ChaCha8Rng) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alphas[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let nb = self.non_bound();
        if nb.len() > 1 {
            let mut best = nb[0];
            let mut best_gap = -1.0;
            for &i in &nb {
                let gap = (self.errors[i] - e2).abs();
                if gap > best_gap {
                    best_gap = gap;
                    best = i;
                }
            }
            if self.take_step(best, i2) {
                return true;
            }
        }
        if !nb.is_empty() {
            let start = rng.gen_range(0..nb.len());
            for k in 0..nb.len() {
                let i1 = nb[(start + k) % nb.len()];
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let n = self.y.len();
        let start = rng.gen_range(0..n);
        for k in 0..n {
            let i1 = (start + k) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

/// Solve the dual problem for labels in {-1, +1}.
pub fn solve(gram: &Gram, y: &[f64], params: &SvmParams, rng: &mut ChaCha8Rng) -> SmoSolution {
    let n = y.len();
    let mut solver = Solver {
        gram,
        y,
        c: params.c,
        tol: params.tolerance,
        alphas: vec![0.0; n],
        errors: y.iter().map(|&yi| -yi).collect(),
        bias: 0.0,
        row1: vec![0.0; n],
        row2: vec![0.0; n],
    };
    let mut examine_all = true;
    let mut num_changed = 1usize;
    let mut sweeps = 0usize;
    let mut converged = true;
    while num_changed > 0 || examine_all {
        if sweeps >= params.max_passes {
            converged = false;
            break;
        }
        num_changed = 0;
        if examine_all {
            for i in 0..n {
                num_changed += solver.examine(i, rng) as usize;
            }
        } else {
            for i in solver.non_bound() {
                num_changed += solver.examine(i, rng) as usize;
            }
        }
        sweeps += 1;
        if examine_all {
            examine_all = false;
        } else if num_changed == 0 {
            examine_all = true;
        }
    }
    SmoSolution {
        alphas: solver.alphas,
        bias: solver.bias,
        converged,
        sweeps,
    }
}
