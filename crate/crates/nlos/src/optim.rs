//! Small dense-vector optimization helpers: Armijo backtracking and a
//! limited-memory BFGS direction via the two-loop recursion.
//!
//! These back the visibility and normal updates of the factored solver but
//! are generic over any smooth objective on `Vec<f64>`.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

/// Sufficient-decrease constant used by the factored solver's line searches.
pub const ARMIJO_C: f64 = 1e-4;
/// Step shrink factor per backtracking round.
pub const BACKTRACK_SHRINK: f64 = 0.5;
/// Steps below this abort the search and keep the current iterate.
pub const MIN_STEP: f64 = 1e-14;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Curvature-pair store for the L-BFGS two-loop recursion.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl LbfgsHistory {
    pub fn new(memory: usize) -> Self {
        LbfgsHistory { memory: memory.max(1), pairs: VecDeque::new() }
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Records an (s, y) displacement/gradient-change pair; pairs with
    /// non-positive curvature are skipped to keep the implicit Hessian
    /// positive definite.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&y, &y).max(1e-30)) || !sy.is_finite() {
            return;
        }
        while self.pairs.len() >= self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Descent direction `-H g` from the two-loop recursion, scaled by the
    /// standard `s.y / y.y` initial Hessian. Falls back to `-g` with an empty
    /// history.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, inv_sy) in self.pairs.iter().rev() {
            let a = inv_sy * dot(s, &q);
            for (qk, yk) in q.iter_mut().zip(y) {
                *qk -= a * yk;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for qk in q.iter_mut() {
                *qk *= gamma;
            }
        }
        for ((s, y, inv_sy), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = inv_sy * dot(y, &q);
            for (qk, sk) in q.iter_mut().zip(s) {
                *qk += (a - b) * sk;
            }
        }
        for qk in q.iter_mut() {
            *qk = -*qk;
        }
        q
    }
}

/// Outcome of a backtracking search.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub point: Vec<f64>,
    pub value: f64,
    pub step: f64,
    pub evaluations: usize,
}

/// Armijo backtracking along `direction` from `x`.
///
/// Shrinks the step until `f(x + a d) <= fx + c a g.d`, requiring `g.d < 0`.
/// Returns `None` when the direction is not a descent direction or the step
/// underflows [`MIN_STEP`]; the caller keeps its current iterate in that case.
pub fn armijo_backtrack(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    fx: f64,
    grad: &[f64],
    direction: &[f64],
    initial_step: f64,
) -> Option<LineSearchStep> {
    let slope = dot(grad, direction);
    if !(slope < 0.0) {
        return None;
    }
    let mut step = initial_step;
    let mut evaluations = 0;
    while step >= MIN_STEP {
        let candidate: Vec<f64> = x
            .iter()
            .zip(direction)
            .map(|(xi, di)| xi + step * di)
            .collect();
        let value = f(&candidate);
        evaluations += 1;
        if value.is_finite() && value <= fx + ARMIJO_C * step * slope {
            return Some(LineSearchStep { point: candidate, value, step, evaluations });
        }
        step *= BACKTRACK_SHRINK;
    }
    None
}
