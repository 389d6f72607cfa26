//! Set-level squared MMD, dataset distance matrices, and Mercer kernels.

mod estimator;
mod io;
mod matrix;

pub use estimator::{
    mmd_sq, patch_kernel, MmdEstimator, PatchKernelConfig, PreparedSet, CLAMP_WARN_THRESHOLD,
    DEFAULT_BLOCK_SIZE, DEFAULT_SIGMA,
};
pub use io::{
    decode_matrix, encode_matrix, matrix_from_csv, matrix_to_csv, read_distance, read_kernel,
    read_stored_matrix, write_distance, write_kernel, MatrixKind, StoredMatrix, MATRIX_MAGIC,
    MATRIX_VERSION,
};
pub use matrix::{
    distance_matrix, distance_matrix_with, kernel_from_distance, median_inverse_gamma,
    min_eigenvalue, DistanceMatrix, KernelMatrix, DEFAULT_GAMMA, JITTER_SCALE, PSD_TOLERANCE,
};
