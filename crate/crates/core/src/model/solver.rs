//! Limited-memory BFGS with a backtracking line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop once the gradient sup-norm is at or below this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g` for the inverse-Hessian estimate `H`.
fn search_direction(grad: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = match history.back() {
        Some(p) => dot(&p.s, &p.y) / dot(&p.y, &p.y),
        None => 1.0 / dot(grad, grad).sqrt().max(1.0),
    };
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (p, a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes a smooth function given by `value_and_gradient`, starting at `x0`.
pub fn minimize<F>(x0: Vec<f64>, value_and_gradient: F, opts: SolverOptions) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = value_and_gradient(&x);
    let mut g_norm = sup_norm(&g);
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    while g_norm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut d = search_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = search_direction(&g, &history);
            slope = dot(&g, &d);
        }

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (f_new, g_new) = value_and_gradient(&trial);
            if f_new.is_finite() {
                let armijo = f_new <= f + ARMIJO * step * slope;
                // Near the optimum the decrease drops below the resolution of
                // f; accept steps that are flat in f but shrink the gradient.
                let flat =
                    f_new <= f + 8.0 * f64::EPSILON * f.abs().max(1.0) && sup_norm(&g_new) < g_norm;
                if armijo || flat {
                    accepted = Some((trial, f_new, g_new));
                    break;
                }
            }
            step *= BACKTRACK;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Pair {
                s,
                y,
                rho: 1.0 / sy,
            });
        }
        x = x_new;
        f = f_new;
        g = g_new;
        g_norm = sup_norm(&g);
    }

    Minimum {
        x,
        value: f,
        gradient_norm: g_norm,
        iterations,
        converged: g_norm <= opts.tol,
    }
}
