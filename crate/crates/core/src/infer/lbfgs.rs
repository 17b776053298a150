//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the start and every accepted step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns `None` where the objective cannot be
/// evaluated; such points are treated as `+∞` by the line search.
///
/// Stops when the relative decrease of two consecutive accepted steps falls
/// below `rel_tol` (reported as converged), when no descent step can be found,
/// or after `max_iters` iterations.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, max_iters: usize, rel_tol: f64) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut small_steps = 0;
    let mut trace = vec![fx];
    let n = x.len();

    for iter in 0..max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 {
            return Some(Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: true,
                trace,
            });
        }

        let mut dir = two_loop(&g, &history);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if history.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = (0..n).map(|k| x[k] + step * dir[k]).collect();
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope && gt.iter().all(|v| v.is_finite()) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                return Some(Minimum {
                    x,
                    f: fx,
                    iterations: iter,
                    converged: false,
                    trace,
                });
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = (0..n).map(|k| x_new[k] - x[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| g_new[k] - g[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let decrease = (fx - f_new) / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if decrease < rel_tol {
            small_steps += 1;
            if small_steps >= 2 {
                return Some(Minimum {
                    x,
                    f: fx,
                    iterations: iter + 1,
                    converged: true,
                    trace,
                });
            }
        } else {
            small_steps = 0;
        }
    }
    Some(Minimum {
        x,
        f: fx,
        iterations: max_iters,
        converged: false,
        trace,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qk, yk) in q.iter_mut().zip(y) {
            *qk -= a * yk;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qk, sk) in q.iter_mut().zip(s) {
            *qk += (a - b) * sk;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
