//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use wsimmd::cluster::Linkage;
use wsimmd::dataio::FeatureSet;
use wsimmd::ksvm::{decision_function, SvmModel};

/// Direct triple loop over patch pairs, no expansion tricks.
pub fn naive_mmd(a: &FeatureSet, b: &FeatureSet, sigma: f64) -> f64 {
    let k = |x: &[f32], y: &[f32]| {
        let sq: f64 = x.iter().zip(y).map(|(&p, &q)| (f64::from(p) - f64::from(q)).powi(2)).sum();
        (-sq / (4.0 * sigma * sigma)).exp()
    };
    let mean = |s: &FeatureSet, t: &FeatureSet| {
        let mut acc = 0.0;
        for x in s.patches() {
            for y in t.patches() {
                acc += k(x, y);
            }
        }
        acc / (s.len() * t.len()) as f64
    };
    mean(a, a) + mean(b, b) - 2.0 * mean(a, b)
}

pub fn random_set<R: Rng>(rng: &mut R, id: &str, n: usize, d: usize, shift: f32) -> FeatureSet {
    let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0) + shift).collect();
    FeatureSet::new(id, d, data).unwrap()
}

pub fn rbf_kernel(points: &[Vec<f64>], width: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d / width).exp()
    })
}

/// Random RBF kernel, labels with both classes, and a box constraint.
pub fn random_svm_instance<R: Rng>(rng: &mut R) -> (DMatrix<f64>, Vec<i8>, f64) {
    let n = rng.random_range(2..=8);
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    y[0] = 1;
    y[1] = -1;
    let c = [0.5, 2.0, 10.0][rng.random_range(0..3)];
    (rbf_kernel(&points, rng.random_range(0.5..4.0)), y, c)
}

/// `e^T a - 1/2 a^T Q a`.
pub fn dual_value(k: &DMatrix<f64>, y: &[i8], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * f64::from(y[i]) * f64::from(y[j]) * k[(i, j)];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y^T a = 0}` by bisection on the
/// equality multiplier.
fn project(z: &[f64], y: &[i8], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { z.iter().zip(y).map(|(v, &s)| (v - nu * f64::from(s)).clamp(0.0, c)).collect() };
    let resid = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(v, &s)| v * f64::from(s)).sum() };
    let bound = z.iter().map(|v| v.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if resid(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the dual QP; returns the dual value.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[i8], c: f64) -> f64 {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| f64::from(y[i]) * f64::from(y[j]) * k[(i, j)]);
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let mut a = vec![0.0; n];
    let mut v = a.clone();
    let mut t = 1.0f64;
    for it in 0..200_000 {
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[(i, j)] * v[j]).sum::<f64>() - 1.0).collect();
        let z: Vec<f64> = v.iter().zip(&g).map(|(x, gi)| x - gi / lip).collect();
        let next = project(&z, y, c);
        let moved = next.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        v = next.iter().zip(&a).map(|(x, xo)| x + (t - 1.0) / t_next * (x - xo)).collect();
        a = next;
        t = t_next;
        if it > 100 && moved < 1e-13 {
            break;
        }
    }
    dual_value(k, y, &a)
}

/// Margin conditions per dual-variable class plus the equality constraint.
pub fn kkt_audit(model: &SvmModel, k: &DMatrix<f64>, y: &[i8], tol: f64) -> Result<(), String> {
    let f = decision_function(model, k).unwrap();
    let alpha = model.dense_alphas();
    let eq: f64 = alpha.iter().zip(y).map(|(a, &s)| a * f64::from(s)).sum();
    if eq.abs() > 1e-8 * model.c {
        return Err(format!("sum a_i y_i = {eq}"));
    }
    for i in 0..y.len() {
        let cap = if y[i] == 1 { model.c_bounds.0 } else { model.c_bounds.1 };
        let m = f64::from(y[i]) * f[i];
        let ok = if alpha[i] <= 0.0 {
            m >= 1.0 - tol
        } else if alpha[i] >= cap {
            m <= 1.0 + tol
        } else {
            (m - 1.0).abs() <= tol
        };
        if !ok || alpha[i] < 0.0 || alpha[i] > cap {
            return Err(format!("point {i}: alpha {} margin {m}", alpha[i]));
        }
    }
    Ok(())
}

/// Survival objective written out term by term.
pub fn surv_objective(k: &DMatrix<f64>, pairs: &[(usize, usize)], alpha: f64, beta: &[f64]) -> f64 {
    let n = beta.len();
    let f: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * beta[j]).sum()).collect();
    let reg: f64 = (0..n).map(|i| beta[i] * f[i]).sum();
    let loss: f64 = pairs.iter().map(|&(i, j)| (1.0 - (f[i] - f[j])).max(0.0).powi(2)).sum();
    0.5 * reg + 0.5 * alpha * loss
}

pub fn central_difference(k: &DMatrix<f64>, pairs: &[(usize, usize)], alpha: f64, beta: &[f64]) -> Vec<f64> {
    (0..beta.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + beta[i].abs());
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[i] += h;
            dn[i] -= h;
            (surv_objective(k, pairs, alpha, &up) - surv_objective(k, pairs, alpha, &dn)) / (2.0 * h)
        })
        .collect()
}

/// Plain gradient descent with backtracking, run to a tight tolerance.
pub fn surv_gd_oracle(k: &DMatrix<f64>, pairs: &[(usize, usize)], alpha: f64) -> f64 {
    let n = k.nrows();
    let grad = |b: &[f64]| -> Vec<f64> {
        let f: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * b[j]).sum()).collect();
        let mut w = b.to_vec();
        for &(i, j) in pairs {
            let r = (1.0 - (f[i] - f[j])).max(0.0);
            w[i] -= alpha * r;
            w[j] += alpha * r;
        }
        (0..n).map(|i| (0..n).map(|j| k[(i, j)] * w[j]).sum()).collect()
    };
    let mut b = vec![0.0; n];
    let mut j = surv_objective(k, pairs, alpha, &b);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let g = grad(&b);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg.sqrt() < 1e-11 {
            break;
        }
        step *= 2.0;
        loop {
            let cand: Vec<f64> = b.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            let cj = surv_objective(k, pairs, alpha, &cand);
            if cj <= j - 0.5 * step * gg {
                b = cand;
                j = cj;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return j;
            }
        }
    }
    j
}

/// Agglomeration recomputing every linkage distance from member lists.
pub fn cluster_oracle(d: &DMatrix<f64>, linkage: Linkage) -> Vec<(usize, usize, f64, usize)> {
    let n = d.nrows();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut vals = Vec::new();
                for &x in &clusters[a].1 {
                    for &y in &clusters[b].1 {
                        vals.push(d[(x, y)]);
                    }
                }
                let h = match linkage {
                    Linkage::Average => vals.iter().sum::<f64>() / vals.len() as f64,
                    Linkage::Complete => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Single => vals.iter().cloned().fold(f64::INFINITY, f64::min),
                };
                let lo = clusters[a].0.min(clusters[b].0);
                let hi = clusters[a].0.max(clusters[b].0);
                if best.is_none_or(|(bh, bl, bhi, _, _)| h < bh || (h == bh && (lo, hi) < (bl, bhi))) {
                    best = Some((h, lo, hi, a, b));
                }
            }
        }
        let (h, lo, hi, a, b) = best.unwrap();
        let mut members = clusters[a].1.clone();
        members.extend(clusters[b].1.iter().copied());
        out.push((lo, hi, h, members.len()));
        clusters.remove(b);
        clusters[a] = (n + step, members);
    }
    out
}
