//! Limited-memory BFGS with Armijo backtracking. Memory 0 is plain gradient
//! descent with the same line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Converged,
    MaxIter,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub iters: usize,
    pub status: Status,
}

const MAX_BACKTRACKS: usize = 80;
const F_NOISE: f64 = 1e-13;
const WOLFE_SIGMA: f64 = 0.9;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` from `x` in place. `f(x, grad)` returns the value and fills
/// the gradient.
pub(crate) fn minimize<F>(mut f: F, x: &mut [f64], cfg: &LbfgsConfig) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x.len();
    let mut g = vec![0.0; dim];
    let mut fx = f(x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Outcome {
            iters: 0,
            status: Status::NonFinite,
        };
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut g_trial = vec![0.0; dim];
    let mut alpha_buf = vec![0.0; cfg.memory.max(1)];
    let mut first_step = true;

    for iter in 0..cfg.max_iter {
        let gnorm = inf_norm(&g);
        if gnorm <= cfg.grad_tol {
            return Outcome {
                iters: iter,
                status: Status::Converged,
            };
        }

        // two-loop recursion
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (j, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[j] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        } else if first_step {
            let scale = 1.0 / gnorm.max(1.0);
            dir.iter_mut().for_each(|d| *d *= scale);
        }
        for (j, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha_buf[j] - b) * si);
        }

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi / gnorm.max(1.0));
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..dim {
                trial[i] = x[i] + step * dir[i];
            }
            let ft = f(&trial, &mut g_trial);
            if ft.is_finite() && ft <= fx + cfg.armijo_c1 * step * slope {
                accepted = Some(ft);
                break;
            }
            // Near a minimizer the decrease drops below the rounding level of
            // f; fall back to the approximate Wolfe test on the directional
            // derivative.
            if ft.is_finite() && ft <= fx + F_NOISE * (1.0 + fx.abs()) {
                let slope_t = dot(&g_trial, &dir);
                if slope_t >= WOLFE_SIGMA * slope && slope_t <= (2.0 * cfg.armijo_c1 - 1.0) * slope {
                    accepted = Some(ft);
                    break;
                }
            }
            step *= cfg.shrink;
        }
        let Some(ft) = accepted else {
            if !pairs.is_empty() {
                // retry along steepest descent before giving up
                pairs.clear();
                continue;
            }
            return Outcome {
                iters: iter,
                status: Status::LineSearchFailed,
            };
        };
        first_step = false;

        let s: Vec<f64> = (0..dim).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..dim).map(|i| g_trial[i] - g[i]).collect();
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        fx = ft;
        if g.iter().any(|v| !v.is_finite()) {
            return Outcome {
                iters: iter + 1,
                status: Status::NonFinite,
            };
        }
        let sy = dot(&s, &y);
        if cfg.memory > 0 && sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
    }
    let gnorm = inf_norm(&g);
    Outcome {
        iters: cfg.max_iter,
        status: if gnorm <= cfg.grad_tol {
            Status::Converged
        } else {
            Status::MaxIter
        },
    }
}
