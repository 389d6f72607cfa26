//! Dataset-level MMD distance matrices and their exponentiated Mercer kernels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::estimator::{check_dims, clamp_residue, MmdEstimator, PatchKernelConfig};
use crate::dataio::FeatureSet;
use crate::error::{Error, Result};
use crate::util::median;

/// Default kernel width for the classification workflow.
pub const DEFAULT_GAMMA: f64 = 4.0;
/// Tolerance on the minimum eigenvalue, multiplied by N.
pub const PSD_TOLERANCE: f64 = 1e-6;
/// Diagonal jitter, multiplied by trace / N.
pub const JITTER_SCALE: f64 = 1e-8;

/// Symmetric, zero-diagonal matrix of squared MMD values.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps a precomputed matrix. Tiny negative entries
    /// (down to -1e-12) are clamped to zero.
    pub fn new(ids: Vec<String>, mut values: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::Shape(format!(
                "{} ids but a {}x{} matrix",
                n,
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(Error::validation(format!(
                    "distance diagonal entry {i} is {} (expected 0)",
                    values[(i, i)]
                )));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::validation(format!("entry ({i}, {j}) is not finite")));
                }
                if v != values[(j, i)] {
                    return Err(Error::validation(format!("entry ({i}, {j}) breaks symmetry")));
                }
                if v < -1e-12 {
                    return Err(Error::validation(format!("entry ({i}, {j}) is negative")));
                }
            }
        }
        values.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v = 0.0);
        Ok(Self { ids, values })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Entries strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }
}

/// Builds `D[I][J] = mmd_sq(sets[I], sets[J])` for every pair.
///
/// Per-set self terms are computed once in a parallel pre-pass; the upper
/// triangle is then distributed over the rayon pool one pair per task and
/// mirrored. Each cell has one writer, so the result does not depend on the
/// number of threads.
pub fn distance_matrix(sets: &[FeatureSet], estimator: &MmdEstimator) -> Result<DistanceMatrix> {
    let n = sets.len();
    if n < 2 {
        return Err(Error::validation(format!(
            "distance matrix needs at least 2 sets, got {n}"
        )));
    }
    for j in 1..n {
        check_dims(&sets[0], &sets[j]).map_err(|e| Error::Pair {
            i: 0,
            j,
            source: Box::new(e),
        })?;
    }

    let prepared: Vec<_> = sets.par_iter().map(|s| estimator.prepare(s)).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let cells: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let raw = estimator.mmd_sq_raw(&prepared[i], &prepared[j]);
            clamp_residue(raw, sets[i].id(), sets[j].id())
        })
        .collect();

    let mut values = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&cells) {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    let ids = sets.iter().map(|s| s.id().to_string()).collect();
    Ok(DistanceMatrix { ids, values })
}

/// Convenience wrapper using the default block size.
pub fn distance_matrix_with(sets: &[FeatureSet], cfg: &PatchKernelConfig) -> Result<DistanceMatrix> {
    distance_matrix(sets, &MmdEstimator::new(*cfg, super::DEFAULT_BLOCK_SIZE)?)
}

/// Mercer kernel `K = exp(-gamma * D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    ids: Vec<String>,
    gamma: Option<f64>,
    values: DMatrix<f64>,
    min_eigenvalue: f64,
    jitter: f64,
}

impl KernelMatrix {
    /// Wraps a precomputed kernel (e.g. read from disk). The PSD check is run
    /// and jitter applied exactly as in [`kernel_from_distance`].
    pub fn from_values(ids: Vec<String>, gamma: Option<f64>, values: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::Shape(format!(
                "{} ids but a {}x{} matrix",
                n,
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() || v != values[(j, i)] {
                    return Err(Error::validation(format!(
                        "kernel entry ({i}, {j}) is not finite or breaks symmetry"
                    )));
                }
            }
        }
        let mut k = Self {
            ids,
            gamma,
            values,
            min_eigenvalue: f64::NAN,
            jitter: 0.0,
        };
        k.check_psd();
        Ok(k)
    }

    fn check_psd(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        self.min_eigenvalue = min_eigenvalue(&self.values);
        if self.min_eigenvalue < -PSD_TOLERANCE * n as f64 {
            let jitter = JITTER_SCALE * self.values.trace() / n as f64;
            log::warn!(
                "kernel min eigenvalue {:e} below -{:e}; adding diagonal jitter {jitter:e}",
                self.min_eigenvalue,
                PSD_TOLERANCE * n as f64
            );
            for i in 0..n {
                self.values[(i, i)] += jitter;
            }
            self.jitter = jitter;
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Smallest eigenvalue measured before any jitter.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Diagonal jitter that was added (0 when the check passed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Sub-block `K[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.values[(rows[r], cols[c])])
    }
}

/// Exponentiates a distance matrix entrywise. The diagonal is exactly 1 and
/// the PSD check result is recorded on the returned kernel.
pub fn kernel_from_distance(d: &DistanceMatrix, gamma: f64) -> Result<KernelMatrix> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::validation(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    let n = d.len();
    let values = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (-gamma * d.get(i, j)).exp()
        }
    });
    let mut k = KernelMatrix {
        ids: d.ids.clone(),
        gamma: Some(gamma),
        values,
        min_eigenvalue: f64::NAN,
        jitter: 0.0,
    };
    k.check_psd();
    Ok(k)
}

/// `1 / median(strict upper triangle of D)`.
pub fn median_inverse_gamma(d: &DistanceMatrix) -> Result<f64> {
    if d.len() < 2 {
        return Err(Error::validation("median gamma needs at least 2 sets"));
    }
    let upper = d.upper_triangle();
    if upper.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "all pairwise distances are zero; gamma = 1/median is undefined".into(),
        ));
    }
    let m = median(&upper).expect("non-empty upper triangle");
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!(
            "median pairwise distance is {m}; gamma = 1/median is undefined"
        )));
    }
    Ok(1.0 / m)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
