//! Limited-memory BFGS: two-loop recursion with Armijo backtracking.

use std::collections::VecDeque;

use crate::error::{AtlasError, Result};

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;
/// Curvature pairs with y.s at or below this are discarded.
const CURVATURE_MIN: f64 = 1e-12;
/// Consecutive curvature rejections after which the (stale) history is
/// dropped and the next step restarts from scaled steepest descent.
const MAX_CONSECUTIVE_REJECTS: usize = 5;

/// Bounded history of (s, y, 1/y.s) curvature pairs.
#[derive(Debug)]
pub struct LbfgsState {
    history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
    consecutive_rejects: usize,
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        Self {
            history: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            consecutive_rejects: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn clear(&mut self) {
        self.history.clear();
        self.consecutive_rejects = 0;
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, ys: f64) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((s, y, 1.0 / ys));
    }

    /// Two-loop recursion: returns the quasi-Newton descent direction
    /// -H grad, with the initial Hessian scaled by y.s / y.y of the most
    /// recent pair.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.history.len());
        for (s, y, rho) in self.history.iter().rev() {
            let alpha = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= alpha * yi;
            }
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = self.history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), alpha) in self.history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (alpha - beta) * si;
            }
        }
        for qi in q.iter_mut() {
            *qi = -*qi;
        }
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One L-BFGS step on a generic objective returning (value, gradient).
///
/// Backtracking enforces the Armijo condition f(x + a d) <= f(x) + c a g.d,
/// so the objective value never increases within a step. Returns the
/// (pre, post) objective values. Exhausting the backtracking budget leaves
/// `x` unchanged and reports [`AtlasError::LineSearchFailure`].
pub fn lbfgs_minimize_step<F>(
    x: &mut Vec<f64>,
    state: &mut LbfgsState,
    objective: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (f0, g0) = objective(x)?;
    let mut dir = state.direction(&g0);
    let mut slope = dot(&g0, &dir);
    if slope >= 0.0 {
        // not a descent direction (stale curvature pairs): restart from
        // steepest descent
        state.clear();
        dir = g0.iter().map(|g| -g).collect();
        slope = -dot(&g0, &g0);
    }

    let mut alpha = 1.0;
    let mut candidate = x.clone();
    let mut f1 = f0;
    let mut accepted = false;
    for _ in 0..=MAX_BACKTRACKS {
        for i in 0..x.len() {
            candidate[i] = x[i] + alpha * dir[i];
        }
        f1 = objective(&candidate)?.0;
        if f1 <= f0 + ARMIJO_C * alpha * slope {
            accepted = true;
            break;
        }
        alpha *= BACKTRACK_SHRINK;
    }
    if !accepted {
        return Err(AtlasError::LineSearchFailure {
            backtracks: MAX_BACKTRACKS,
            grad_norm: norm(&g0),
        });
    }

    let (_, g1) = objective(&candidate)?;
    let s: Vec<f64> = candidate.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    let ys = dot(&y, &s);
    if ys > CURVATURE_MIN {
        state.push(s, y, ys);
        state.consecutive_rejects = 0;
    } else {
        // Armijo alone does not guarantee y.s > 0; persistent rejections
        // mean the stored pairs no longer describe the local curvature
        state.consecutive_rejects += 1;
        if state.consecutive_rejects >= MAX_CONSECUTIVE_REJECTS {
            state.clear();
        }
    }
    *x = candidate;
    Ok((f0, f1))
}
