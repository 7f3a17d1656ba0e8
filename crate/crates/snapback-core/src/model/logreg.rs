//! L2-regularized logistic regression.
//!
//! Objective: mean negative log-likelihood + (reg/2) * ||w||^2, bias
//! unpenalized. Solved with L-BFGS (history 10) and Armijo backtracking from
//! zero initialization; converged when the full gradient norm drops below
//! `tol`. Deterministic: no randomness anywhere in the solver.

use crate::error::{Error, Result};

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each accepted step; non-increasing.
    pub objective_history: Vec<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
#[inline]
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// theta = [w_0..w_{d-1}, b]
fn objective_and_gradient(
    theta: &[f64],
    x: &[Vec<f64>],
    y: &[u8],
    reg: f64,
) -> (f64, Vec<f64>) {
    let n = x.len();
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let inv_n = 1.0 / n as f64;

    let mut obj = 0.0;
    let mut grad = vec![0.0f64; d + 1];
    for (row, &yi) in x.iter().zip(y) {
        let mut z = b;
        for (j, &v) in row.iter().enumerate() {
            z += w[j] * v;
        }
        let yi = f64::from(yi);
        obj += log1p_exp(z) - yi * z;
        let r = sigmoid(z) - yi;
        for (j, &v) in row.iter().enumerate() {
            grad[j] += r * v;
        }
        grad[d] += r;
    }
    obj *= inv_n;
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    for j in 0..d {
        obj += 0.5 * reg * w[j] * w[j];
        grad[j] += reg * w[j];
    }
    (obj, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn train_logreg(
    x: &[Vec<f64>],
    y: &[u8],
    reg_strength: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LogRegFit> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidInput(
            "feature matrix and labels must be non-empty and aligned".into(),
        ));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("ragged feature matrix".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }

    let mut theta = vec![0.0f64; d + 1];
    let (mut obj, mut grad) = objective_and_gradient(&theta, x, y, reg_strength);
    let mut history = vec![obj];
    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut rho_list: Vec<f64> = Vec::new();
    let mut converged = norm(&grad) < tol;
    let mut iterations = 0;

    while !converged && iterations < max_iter {
        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|&g| -g).collect();
        let mut alphas = vec![0.0f64; s_list.len()];
        for i in (0..s_list.len()).rev() {
            let a = rho_list[i] * dot(&s_list[i], &dir);
            alphas[i] = a;
            for (dj, yj) in dir.iter_mut().zip(&y_list[i]) {
                *dj -= a * yj;
            }
        }
        if let (Some(s), Some(yv)) = (s_list.last(), y_list.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            for dj in dir.iter_mut() {
                *dj *= gamma;
            }
        }
        for i in 0..s_list.len() {
            let beta = rho_list[i] * dot(&y_list[i], &dir);
            for (dj, sj) in dir.iter_mut().zip(&s_list[i]) {
                *dj += (alphas[i] - beta) * sj;
            }
        }

        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // curvature information went stale; fall back to steepest descent
            dir = grad.iter().map(|&g| -g).collect();
            slope = dot(&grad, &dir);
            s_list.clear();
            y_list.clear();
            rho_list.clear();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&dir)
                .map(|(&t, &dj)| t + step * dj)
                .collect();
            let (cand_obj, cand_grad) = objective_and_gradient(&cand, x, y, reg_strength);
            if cand_obj <= obj + ARMIJO_C1 * step * slope {
                accepted = Some((cand, cand_obj, cand_grad));
                break;
            }
            step *= BACKTRACK;
        }
        let Some((new_theta, new_obj, new_grad)) = accepted else {
            break; // no further progress possible at float precision
        };

        let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
        let yv: Vec<f64> = new_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if s_list.len() == LBFGS_MEMORY {
                s_list.remove(0);
                y_list.remove(0);
                rho_list.remove(0);
            }
            rho_list.push(1.0 / sy);
            s_list.push(s);
            y_list.push(yv);
        }

        theta = new_theta;
        obj = new_obj;
        grad = new_grad;
        history.push(obj);
        iterations += 1;
        converged = norm(&grad) < tol;
    }

    let bias = theta[d];
    theta.truncate(d);
    Ok(LogRegFit {
        weights: theta,
        bias,
        converged,
        iterations,
        objective_history: history,
    })
}
