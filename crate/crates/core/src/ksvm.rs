//! Binary soft-margin C-SVM over a precomputed kernel, trained with SMO.
//!
//! The dual solved is
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K_ij
//! s.t.   0 <= a_i <= C_i,  y^T a = 0
//! ```
//!
//! Working pairs are chosen as the maximal KKT-violating pair; iteration stops
//! once `max_{I_up} -y G - min_{I_low} -y G < tol`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::{min_eigenvalue, PSD_TOLERANCE};

pub const DEFAULT_C: f64 = 10_000.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Curvature floor for non-positive pair curvature.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    #[default]
    None,
    /// `C_y = C * n / (2 n_y)`
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub class_weight: ClassWeight,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            class_weight: ClassWeight::None,
        }
    }
}

/// Fitted model. Indices refer to rows/columns of the training kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub n_train: usize,
    pub support_indices: Vec<usize>,
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    pub c: f64,
    /// Per-class upper bounds `(C_+, C_-)` actually used.
    pub c_bounds: (f64, f64),
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
    /// `e^T a - 1/2 a^T Q a`
    pub dual_objective: f64,
}

impl SvmModel {
    /// Full dual vector over all training points.
    pub fn dense_alphas(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n_train];
        for (&i, &v) in self.support_indices.iter().zip(&self.alphas) {
            a[i] = v;
        }
        a
    }
}

fn check_labels(y: &[i8]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::validation(format!("SVM labels must be +1/-1, got {bad}")));
    }
    let pos = y.iter().any(|&v| v == 1);
    let neg = y.iter().any(|&v| v == -1);
    if !(pos && neg) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Converts `{0,1}` labels to `{-1,+1}`.
pub fn to_signed(labels: &[u8]) -> Vec<i8> {
    labels.iter().map(|&l| if l == 1 { 1 } else { -1 }).collect()
}

/// Trains on the training block of the kernel.
pub fn fit_smo(k: &DMatrix<f64>, y: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::Shape(format!(
            "kernel is {}x{} for {n} labels",
            k.nrows(),
            k.ncols()
        )));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::validation("C must be positive and finite"));
    }
    if !(params.tol > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    check_labels(y)?;
    let min_eig = min_eigenvalue(k);
    if min_eig < -PSD_TOLERANCE * n as f64 {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }

    let (c_pos, c_neg) = match params.class_weight {
        ClassWeight::None => (params.c, params.c),
        ClassWeight::Balanced => {
            let n_pos = y.iter().filter(|&&v| v == 1).count() as f64;
            let n_neg = n as f64 - n_pos;
            (
                params.c * n as f64 / (2.0 * n_pos),
                params.c * n as f64 / (2.0 * n_neg),
            )
        }
    };
    let ys: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let cap: Vec<f64> = y.iter().map(|&v| if v == 1 { c_pos } else { c_neg }).collect();
    let q = |i: usize, j: usize| ys[i] * ys[j] * k[(i, j)];

    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let in_up = |a: f64, yi: f64, c: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64, c: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    #[cfg(debug_assertions)]
    let mut last_obj = 0.0f64;

    let mut iter = 0;
    let violation = loop {
        let mut i_sel = None;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            if in_up(alpha[t], ys[t], cap[t]) && v > m_up {
                m_up = v;
                i_sel = Some(t);
            }
            if in_low(alpha[t], ys[t], cap[t]) && v < m_low {
                m_low = v;
                j_sel = Some(t);
            }
        }
        let gap = m_up - m_low;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= params.tol => (i, j),
            _ => break gap.max(0.0),
        };
        if iter >= params.max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                violation: gap,
            });
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (cap[i], cap[j]);
        if ys[i] != ys[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }

        #[cfg(debug_assertions)]
        {
            let obj = dual_objective_from_grad(&alpha, &grad);
            debug_assert!(
                obj >= last_obj - 1e-9 * (1.0 + last_obj.abs()),
                "dual objective decreased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
    };

    let bias = -compute_rho(&alpha, &grad, &ys, &cap);
    let dual_objective = dual_objective_from_grad(&alpha, &grad);

    let mut support_indices = Vec::new();
    let mut alphas = Vec::new();
    let mut labels = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_indices.push(t);
            alphas.push(alpha[t]);
            labels.push(y[t]);
        }
    }
    Ok(SvmModel {
        n_train: n,
        support_indices,
        alphas,
        labels,
        bias,
        c: params.c,
        c_bounds: (c_pos, c_neg),
        iterations: iter,
        violation,
        dual_objective,
    })
}

/// `e^T a - 1/2 a^T Q a` from `G = Q a - e`.
fn dual_objective_from_grad(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Offset `rho` (decision = sum - rho): mean of `y G` over free vectors, or
/// the midpoint of the feasible interval when none are free.
fn compute_rho(alpha: &[f64], grad: &[f64], ys: &[f64], cap: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] >= cap[t] {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// Scores `sum_i a_i y_i K(t, i) + b` for each row of the test x train block.
pub fn decision_function(model: &SvmModel, k_cross: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k_cross.ncols() != model.n_train {
        return Err(Error::Shape(format!(
            "cross kernel has {} columns, model was trained on {}",
            k_cross.ncols(),
            model.n_train
        )));
    }
    Ok((0..k_cross.nrows())
        .map(|t| {
            model
                .support_indices
                .iter()
                .zip(&model.alphas)
                .zip(&model.labels)
                .map(|((&i, &a), &y)| a * f64::from(y) * k_cross[(t, i)])
                .sum::<f64>()
                + model.bias
        })
        .collect())
}
