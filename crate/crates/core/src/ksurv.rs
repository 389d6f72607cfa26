//! Kernel survival SVM with a squared-hinge ranking loss.
//!
//! For comparable pairs `(i, j)` (earlier event `i`, later time `j`) the model
//! wants `f_i - f_j >= 1`, so a larger score means higher risk. With
//! `f = K b` the objective is
//!
//! ```text
//! J(b) = 1/2 b^T K b + alpha/2 * sum_{(i,j)} max(0, 1 - (f_i - f_j))^2
//! ```
//!
//! minimized by truncated Newton (conjugate gradient on Hessian-vector
//! products) with a backtracking line search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::{min_eigenvalue, PSD_TOLERANCE};

pub const DEFAULT_ALPHA: f64 = 0.125;
pub const DEFAULT_CENSOR_HORIZON: f64 = 10.0;
pub const DEFAULT_MAX_NEWTON: usize = 500;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Ordered pairs `(i, j)` with `T_i < T_j` and an observed event at `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparablePairs {
    pub pairs: Vec<(usize, usize)>,
}

impl ComparablePairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_outcomes(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: events.len(),
        });
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::validation(format!("survival time {t} is not a finite nonnegative number")));
    }
    Ok(())
}

/// Administrative censoring: times past `horizon` become `horizon`, censored.
pub fn truncate(times: &[f64], events: &[bool], horizon: f64) -> (Vec<f64>, Vec<bool>) {
    times
        .iter()
        .zip(events)
        .map(|(&t, &e)| if t > horizon { (horizon, false) } else { (t, e) })
        .unzip()
}

/// Pair rule without truncation.
pub fn pairs_untruncated(times: &[f64], events: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        for j in 0..times.len() {
            if times[i] < times[j] {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn comparable_pairs(times: &[f64], events: &[bool], censor_horizon: f64) -> Result<ComparablePairs> {
    check_outcomes(times, events)?;
    if !(censor_horizon > 0.0) {
        return Err(Error::validation("censor horizon must be positive"));
    }
    let (t, e) = truncate(times, events, censor_horizon);
    Ok(ComparablePairs {
        pairs: pairs_untruncated(&t, &e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvModel {
    pub train_ids: Vec<String>,
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub iterations: usize,
    pub objective: f64,
}

/// Pair residuals `r_p = max(0, 1 - (f_i - f_j))`.
fn residuals(f: &[f64], pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(i, j)| (1.0 - (f[i] - f[j])).max(0.0)).collect()
}

fn mat_vec(k: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|r| (0..n).map(|c| k[(r, c)] * v[c]).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_problem(k: &DMatrix<f64>, beta_len: usize, pairs: &[(usize, usize)]) -> Result<()> {
    if k.nrows() != k.ncols() || k.nrows() != beta_len {
        return Err(Error::Shape(format!(
            "kernel is {}x{} for {beta_len} coefficients",
            k.nrows(),
            k.ncols()
        )));
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= beta_len || j >= beta_len || i == j) {
        return Err(Error::validation(format!("invalid pair ({i}, {j})")));
    }
    Ok(())
}

/// Objective value at `beta`.
pub fn objective(k: &DMatrix<f64>, pairs: &ComparablePairs, alpha: f64, beta: &[f64]) -> Result<f64> {
    check_problem(k, beta.len(), &pairs.pairs)?;
    let f = mat_vec(k, beta);
    Ok(objective_from_f(&f, beta, &pairs.pairs, alpha))
}

fn objective_from_f(f: &[f64], beta: &[f64], pairs: &[(usize, usize)], alpha: f64) -> f64 {
    let loss: f64 = residuals(f, pairs).iter().map(|r| r * r).sum();
    0.5 * dot(beta, f) + 0.5 * alpha * loss
}

/// `K (b - alpha A^T r)`, the exact gradient of [`objective`].
pub fn gradient(k: &DMatrix<f64>, pairs: &ComparablePairs, alpha: f64, beta: &[f64]) -> Result<Vec<f64>> {
    check_problem(k, beta.len(), &pairs.pairs)?;
    let f = mat_vec(k, beta);
    Ok(gradient_from_f(k, &f, beta, &pairs.pairs, alpha))
}

fn gradient_from_f(k: &DMatrix<f64>, f: &[f64], beta: &[f64], pairs: &[(usize, usize)], alpha: f64) -> Vec<f64> {
    let r = residuals(f, pairs);
    let mut w = beta.to_vec();
    for (&(i, j), &rp) in pairs.iter().zip(&r) {
        w[i] -= alpha * rp;
        w[j] += alpha * rp;
    }
    mat_vec(k, &w)
}

/// Generalized Hessian product `K v + alpha K A^T D A K v` over active pairs.
fn hess_vec(k: &DMatrix<f64>, active: &[(usize, usize)], alpha: f64, v: &[f64]) -> Vec<f64> {
    let u = mat_vec(k, v);
    let mut w = v.to_vec();
    for &(i, j) in active {
        let s = alpha * (u[i] - u[j]);
        w[i] += s;
        w[j] -= s;
    }
    mat_vec(k, &w)
}

/// Solves `H d = -g` by conjugate gradient; `None` if curvature turns
/// non-positive before any progress.
fn newton_direction(k: &DMatrix<f64>, active: &[(usize, usize)], alpha: f64, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = 1e-10 * rr.sqrt();
    for _ in 0..(2 * n).max(10) {
        let hp = hess_vec(k, active, alpha, &p);
        let curv = dot(&p, &hp);
        if !(curv > 0.0) {
            break;
        }
        let step = rr / curv;
        for t in 0..n {
            x[t] += step * p[t];
            r[t] -= step * hp[t];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            break;
        }
        let ratio = rr_new / rr;
        for t in 0..n {
            p[t] = r[t] + ratio * p[t];
        }
        rr = rr_new;
    }
    if x.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvFitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SurvFitOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_NEWTON,
            tol: GRADIENT_TOLERANCE,
        }
    }
}

pub fn fit(k: &DMatrix<f64>, pairs: &ComparablePairs, alpha: f64, train_ids: &[String]) -> Result<SurvModel> {
    fit_with(k, pairs, alpha, train_ids, &SurvFitOptions::default())
}

pub fn fit_with(
    k: &DMatrix<f64>,
    pairs: &ComparablePairs,
    alpha: f64,
    train_ids: &[String],
    opts: &SurvFitOptions,
) -> Result<SurvModel> {
    let n = train_ids.len();
    check_problem(k, n, &pairs.pairs)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation("alpha must be positive and finite"));
    }
    if pairs.is_empty() {
        return Err(Error::NoComparablePairs(
            "the training set has no comparable pairs (every earlier subject is censored)".into(),
        ));
    }
    let min_eig = min_eigenvalue(k);
    if min_eig < -PSD_TOLERANCE * n as f64 {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    let pairs = &pairs.pairs;

    let mut beta = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut j = objective_from_f(&f, &beta, pairs, alpha);
    let mut iter = 0;
    loop {
        let g = gradient_from_f(k, &f, &beta, pairs, alpha);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= opts.tol * (1.0 + j.abs()) {
            break;
        }
        if iter >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                violation: gmax,
            });
        }
        iter += 1;

        let active: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(a, b)| f[a] - f[b] < 1.0).collect();
        let mut dir = newton_direction(k, &active, alpha, &g);
        let mut slope = dir.as_ref().map(|d| dot(&g, d)).unwrap_or(0.0);
        if !(slope < 0.0) {
            log::debug!("Newton direction rejected at iteration {iter}; using steepest descent");
            dir = Some(g.iter().map(|v| -v).collect());
            slope = -dot(&g, &g);
        }
        let d = dir.expect("direction set");
        let kd = mat_vec(k, &d);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_b: Vec<f64> = beta.iter().zip(&d).map(|(b, v)| b + step * v).collect();
            let cand_f: Vec<f64> = f.iter().zip(&kd).map(|(x, v)| x + step * v).collect();
            let cand_j = objective_from_f(&cand_f, &cand_b, pairs, alpha);
            if cand_j <= j + 1e-4 * step * slope {
                beta = cand_b;
                f = cand_f;
                j = cand_j;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable decrease left: stationary to working precision
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax <= 1e3 * opts.tol * (1.0 + j.abs()) {
                break;
            }
            return Err(Error::NotConverged {
                iterations: iter,
                violation: gmax,
            });
        }
    }
    Ok(SurvModel {
        train_ids: train_ids.to_vec(),
        betas: beta,
        alpha,
        iterations: iter,
        objective: j,
    })
}

/// `f(t) = sum_i b_i K(t, i)` for each row of the test x train block.
pub fn risk_scores(model: &SurvModel, k_cross: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k_cross.ncols() != model.betas.len() {
        return Err(Error::Shape(format!(
            "cross kernel has {} columns, model has {} coefficients",
            k_cross.ncols(),
            model.betas.len()
        )));
    }
    Ok((0..k_cross.nrows())
        .map(|t| model.betas.iter().enumerate().map(|(i, b)| b * k_cross[(t, i)]).sum())
        .collect())
}
