use nalgebra::DMatrix;

use super::Real;
use crate::error::{Error, Result};

/// Dense LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T: Real> {
    factors: DMatrix<T>,
    perm: Vec<usize>,
    original: DMatrix<T>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &DMatrix<T>) -> Result<Self> {
        assert!(a.is_square(), "LU requires a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    pivot = i;
                }
            }
            if best == T::zero() {
                return Err(Error::Singular { pivot: k });
            }
            if pivot != k {
                lu.swap_rows(pivot, k);
                perm.swap(pivot, k);
            }
            let diag = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / diag;
                lu[(i, k)] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self {
            factors: lu,
            perm,
            original: a.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn substitute(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.factors[(i, j)] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.factors[(i, j)] * y[j];
            }
            y[i] = acc / self.factors[(i, i)];
        }
        y
    }

    fn residual(&self, x: &[T], b: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = b[i];
                for j in 0..n {
                    acc -= self.original[(i, j)] * x[j];
                }
                acc
            })
            .collect()
    }

    /// Solve `A x = b` with one pass of iterative refinement. Returns the
    /// solution and the Euclidean norm of the final residual.
    pub fn solve_refined(&self, b: &[T]) -> (Vec<T>, f64) {
        let mut x = self.substitute(b);
        let r = self.residual(&x, b);
        let dx = self.substitute(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        let r = self.residual(&x, b);
        (x, norm(&r))
    }

    /// Solve for every column of `rhs`. Returns the solution matrix and the
    /// per-column residual norms.
    pub fn solve_columns(&self, rhs: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>) {
        let n = self.dim();
        let mut out = DMatrix::from_element(n, rhs.ncols(), T::zero());
        let mut residuals = Vec::with_capacity(rhs.ncols());
        for c in 0..rhs.ncols() {
            let b: Vec<T> = (0..n).map(|i| rhs[(i, c)]).collect();
            let (x, res) = self.solve_refined(&b);
            for (i, v) in x.into_iter().enumerate() {
                out[(i, c)] = v;
            }
            residuals.push(res);
        }
        (out, residuals)
    }
}

/// Euclidean norm evaluated at precision `T`.
pub fn norm<T: Real>(v: &[T]) -> f64 {
    let mut acc = T::zero();
    for &x in v {
        acc += x * x;
    }
    acc.sqrt().to_f64()
}
