//! Dense linear algebra used throughout the crate. Storage is
//! `nalgebra::DMatrix`; factorizations are implemented here so they can run
//! in double-double as well as `f64`.

mod dd;
mod eigen;
mod lu;
mod real;

pub use dd::DoubleDouble;
pub use eigen::{
    ql_iteration_cap, symmetric_eigen, symmetric_eigenvalues, tridiagonal_ql, SymmetricEigen,
};
pub use lu::{norm as lu_norm, Lu};
pub use real::Real;

use nalgebra::DMatrix;

/// Convert an `f64` matrix to another precision.
pub fn promote<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::from_f64)
}

/// Round a matrix back to `f64`.
pub fn demote<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].to_f64())
}

/// `a * b` for generic precision (nalgebra's product needs numeric traits
/// that `DoubleDouble` does not implement).
pub fn matmul<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(a.ncols(), b.nrows(), "dimension mismatch");
    let mut out = DMatrix::from_element(a.nrows(), b.ncols(), T::zero());
    for j in 0..b.ncols() {
        for k in 0..a.ncols() {
            let bkj = b[(k, j)];
            if bkj == T::zero() {
                continue;
            }
            for i in 0..a.nrows() {
                out[(i, j)] += a[(i, k)] * bkj;
            }
        }
    }
    out
}

/// Largest absolute entry difference between two matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_norm(a: &DMatrix<f64>) -> crate::Result<f64> {
    let vals = symmetric_eigenvalues(a)?;
    Ok(vals.iter().map(|v| v.abs()).fold(0.0, f64::max))
}
