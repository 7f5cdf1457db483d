//! Projected limited-memory BFGS for box-constrained smooth minimization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Minimum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's ∞-norm falls below this.
    pub pg_tol: f64,
    /// Stop when `(f_prev − f) / max(|f_prev|, |f|, 1)` falls below this.
    pub rel_tol: f64,
    /// Stop when an accepted step moves no coordinate by more than this.
    pub x_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            pg_tol: 1e-8,
            rel_tol: 1e-12,
            x_tol: 1e-12,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - (x[i] - g[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

/// Coordinates pinned at a bound with the gradient pushing outward.
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        .collect()
}

/// Two-loop recursion restricted to the free coordinates.
fn direction(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, &f)| if f { *x } else { 0.0 }).collect() };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let s = mask(s);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(mask(y)) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        if yy > 0.0 {
            let gamma = dot(&s, &y) / yy;
            if gamma > 0.0 {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let (s, y) = (mask(s), mask(y));
        let b = rho * dot(&y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimize `f` over the box `[lo, hi]`. `f_only` evaluates the objective,
/// `f_grad` the objective and its gradient.
pub fn minimize<F, G>(mut f_only: F, mut f_grad: G, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f_grad(&x);
    let mut out = Minimum {
        x: x.clone(),
        f: fx,
        iterations: 0,
        function_evals: 0,
        gradient_evals: 1,
        curve: vec![(0, fx)],
        path: vec![x.clone()],
        converged: false,
    };
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return out;
    }

    for iter in 1..=opts.max_iterations {
        if projected_gradient_norm(&x, &g, lo, hi) < opts.pg_tol {
            out.converged = true;
            break;
        }
        let free: Vec<bool> = pinned(&x, &g, lo, hi).iter().map(|p| !p).collect();
        let mut d = direction(&g, &free, &memory);
        if dot(&d, &g) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
            memory.clear();
            d = g.iter().zip(&free).map(|(v, &f)| if f { -v } else { 0.0 }).collect();
        }
        let mut alpha = if memory.is_empty() {
            let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if dmax > 0.0 {
                (1.0 / dmax).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + alpha * d[i]).collect();
            project(&mut trial, lo, hi);
            let step: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            let decrease = dot(&g, &step);
            if decrease >= 0.0 {
                alpha *= 0.5;
                continue;
            }
            let ft = f_only(&trial);
            out.function_evals += 1;
            if ft.is_finite() && ft <= fx + opts.armijo * decrease {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(x_new) = accepted else {
            break;
        };

        let (f_new, g_new) = f_grad(&x_new);
        out.gradient_evals += 1;
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s.clone(), y, 1.0 / sy));
        }
        let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        let moved = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

        x = x_new;
        fx = f_new;
        g = g_new;
        out.iterations = iter;
        out.curve.push((iter, fx));
        out.path.push(x.clone());
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        if rel < opts.rel_tol || moved < opts.x_tol {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    out.f = fx;
    out
}
