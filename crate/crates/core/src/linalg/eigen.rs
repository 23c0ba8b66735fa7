//! Symmetric eigensolvers: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration (the EISPACK `tred2`/`tql2`
//! pair), generic over [`Real`].

use nalgebra::DMatrix;

use super::Real;
use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix. Eigenvalues ascend;
/// column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: DMatrix<T>,
}

/// Iteration cap for the QL sweep on an `n × n` tridiagonal matrix.
pub fn ql_iteration_cap(n: usize) -> usize {
    50 * n.max(1) * n.max(1)
}

/// Implicit-shift QL on the tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off.len() == diag.len() - 1`). `vectors` is the
/// accumulated transform (identity for a plain tridiagonal problem).
pub fn tridiagonal_ql<T: Real>(
    diag: &[T],
    off: &[T],
    vectors: Option<DMatrix<T>>,
) -> Result<SymmetricEigen<T>> {
    let n = diag.len();
    assert!(n == 0 || off.len() + 1 == n, "off-diagonal length mismatch");
    let mut d = diag.to_vec();
    // e[i] couples rows i and i+1; e[n-1] = 0.
    let mut e: Vec<T> = off.to_vec();
    e.push(T::zero());
    e.truncate(n);
    let mut v = vectors.unwrap_or_else(|| identity(n));
    let eps = T::from_f64(T::epsilon());
    let cap = ql_iteration_cap(n);
    let mut iterations = 0usize;

    let two = T::from_f64(2.0);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                iterations += 1;
                if iterations > cap {
                    return Err(Error::NonConvergence { iterations: cap });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = T::hypot(p, T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = T::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("NaN eigenvalue"));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}

pub(crate) fn identity<T: Real>(n: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
}

/// Householder reduction of a symmetric matrix. Returns the diagonal, the
/// off-diagonal and the orthogonal transform.
fn householder_tridiagonal<T: Real>(a: &DMatrix<T>) -> (Vec<T>, Vec<T>, DMatrix<T>) {
    let n = a.nrows();
    let mut v = a.clone();
    let mut d: Vec<T> = (0..n).map(|j| v[(n - 1, j)]).collect();
    let mut e = vec![T::zero(); n];

    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[(k, j)] -= upd;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    if n > 0 {
        v[(n - 1, n - 1)] = T::one();
    }
    // e[i] couples i-1 and i; shift to the QL convention.
    let off = e.into_iter().skip(1).collect();
    (d, off, v)
}

/// Full eigen-decomposition of a symmetric matrix (only the lower triangle
/// is read).
pub fn symmetric_eigen<T: Real>(a: &DMatrix<T>) -> Result<SymmetricEigen<T>> {
    assert!(a.is_square(), "symmetric_eigen requires a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: DMatrix::from_element(0, 0, T::zero()),
        });
    }
    let sym = DMatrix::from_fn(n, n, |i, j| if i >= j { a[(i, j)] } else { a[(j, i)] });
    let (d, off, v) = householder_tridiagonal(&sym);
    tridiagonal_ql(&d, &off, Some(v))
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    symmetric_eigen(a).map(|e| e.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DoubleDouble;

    fn reconstruct_error(a: &DMatrix<f64>, eig: &SymmetricEigen<f64>) -> f64 {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.values.clone()));
        let back = &eig.vectors * lambda * eig.vectors.transpose();
        (back - a).abs().max()
    }

    #[test]
    fn path_graph_eigenvalues() {
        let n = 5;
        let eig = tridiagonal_ql(&vec![0.0; n], &vec![1.0; n - 1], None).unwrap();
        for (k, v) in eig.values.iter().enumerate() {
            let expected = -2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_agrees_with_nalgebra() {
        let n = 9;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let (i, j) = (i.min(j) as f64, i.max(j) as f64);
            (1.0 + i * 0.37 + j * j * 0.11).sin()
        });
        let ours = symmetric_eigen(&a).unwrap();
        let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(a.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert!(reconstruct_error(&a, &ours) < 1e-12);
    }

    #[test]
    fn handles_trivial_sizes() {
        let one = DMatrix::from_element(1, 1, 3.5);
        assert_eq!(symmetric_eigenvalues(&one).unwrap(), vec![3.5]);
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(symmetric_eigenvalues(&zero).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn double_double_resolves_tiny_splitting() {
        // diag(1e8, 1e8 + 1e-12) rotated by 45 degrees: f64 cannot see the split.
        let big = 1e8;
        let split = 1e-12;
        let a = |x: f64| DoubleDouble::from_f64(x);
        let half = a(0.5);
        let m = DMatrix::from_fn(2, 2, |i, j| {
            let s = a(big) * a(2.0) + a(split);
            let dlt = a(split);
            match (i, j) {
                (0, 0) | (1, 1) => half * s,
                _ => half * dlt,
            }
        });
        let vals = symmetric_eigenvalues(&m).unwrap();
        let gap = (vals[1] - vals[0]).to_f64();
        assert!((gap - split).abs() < 1e-20, "gap {gap:e}");
    }
}
