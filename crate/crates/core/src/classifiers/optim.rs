//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// A smooth objective: returns the value and writes the gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    /// Stop once the gradient infinity-norm drops below this.
    pub tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 1000, tol: 1e-5, memory: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn minimize(f: &dyn Objective, x0: Vec<f64>, opts: LbfgsOptions) -> Result<LbfgsOutcome> {
    const C1: f64 = 1e-4;
    let n = f.dim();
    assert_eq!(x0.len(), n, "starting point has the wrong dimension");

    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f.value_grad(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::NonFinite { stage: "objective at the starting point".into() });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    let mut iterations = 0;
    while iterations < opts.max_iter {
        let gnorm = inf_norm(&g);
        if gnorm < opts.tol {
            return Ok(LbfgsOutcome { x, value: fx, grad_inf_norm: gnorm, iterations, converged: true });
        }

        // Two-loop recursion for d = -H g.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / dot(&g, &g).sqrt().max(1e-12), |(s, y, _)| dot(s, y) / dot(y, y));
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = f.value_grad(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + C1 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if !fx.is_finite() {
                return Err(Error::NonFinite { stage: "line search".into() });
            }
            // No progress possible at double precision.
            let gnorm = inf_norm(&g);
            return Ok(LbfgsOutcome { x, value: fx, grad_inf_norm: gnorm, iterations, converged: gnorm < opts.tol });
        }
    }
    let gnorm = inf_norm(&g);
    Ok(LbfgsOutcome { x, value: fx, grad_inf_norm: gnorm, iterations, converged: gnorm < opts.tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            3
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let scales = [1.0, 10.0, 100.0];
            let mut v = 0.0;
            for i in 0..3 {
                let d = x[i] - (i as f64 + 1.0);
                v += 0.5 * scales[i] * d * d;
                g[i] = scales[i] * d;
            }
            v
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let out = minimize(&Quadratic, vec![0.0; 3], LbfgsOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert!(out.converged);
        for (i, xi) in out.x.iter().enumerate() {
            assert!((xi - (i as f64 + 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&Rosenbrock, vec![-1.2, 1.0], LbfgsOptions { tol: 1e-8, ..Default::default() }).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }
}
