//! Restricted resolvents `P_p (H - z)^{-1} P_q`, the Schur-complement
//! reduction of `P_0 (H - r)^{-1} P_0` onto the origin box, and the large-`r`
//! truncation of that reduction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{
    build_hamiltonian, face_product, laplacian_integer, submatrix, BoxIndex, BoxPartition,
    DisorderSample, LatticeOperator,
};
use crate::linalg::{demote, lu_norm, matmul, promote, Lu, Real};

/// Solver residual budget per column, relative to `(1 + |z|)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Columns of the inverse larger than this mean `z` sits within `1e-6` of
/// the spectrum.
pub const PROXIMITY_NORM: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct RestrictedResolvent {
    pub p: BoxIndex,
    pub q: BoxIndex,
    pub z: f64,
    pub block: DMatrix<f64>,
}

/// One factorization of `H - z`, reused for every block at that `z`.
pub struct ResolventSolver<'a> {
    partition: &'a BoxPartition,
    z: f64,
    lu: Lu<f64>,
}

impl<'a> ResolventSolver<'a> {
    pub fn new(h: &LatticeOperator, partition: &'a BoxPartition, z: f64) -> Result<Self> {
        let n = h.dim();
        let shifted = &h.matrix - DMatrix::<f64>::identity(n, n) * z;
        let lu = Lu::factor(&shifted).map_err(|_| Error::SpectralProximity {
            z,
            residual: f64::INFINITY,
            detail: "H - z is singular".into(),
        })?;
        Ok(Self { partition, z, lu })
    }

    pub fn block(&self, p: &BoxIndex, q: &BoxIndex) -> Result<RestrictedResolvent> {
        let rows = self.partition.box_site_indices(p)?;
        let cols = self.partition.box_site_indices(q)?;
        let n = self.lu.dim();
        let mut rhs = DMatrix::<f64>::zeros(n, cols.len());
        for (c, &k) in cols.iter().enumerate() {
            rhs[(k, c)] = 1.0;
        }
        let (x, residuals) = self.lu.solve_columns(&rhs);
        check_solve(self.z, &x, &rhs, &residuals)?;
        Ok(RestrictedResolvent {
            p: p.clone(),
            q: q.clone(),
            z: self.z,
            block: submatrix(&x, &rows, &(0..cols.len()).collect::<Vec<_>>()),
        })
    }
}

fn check_solve<T: Real>(z: f64, x: &DMatrix<T>, rhs: &DMatrix<T>, residuals: &[f64]) -> Result<()> {
    let budget = RESIDUAL_TOLERANCE * (1.0 + z.abs());
    for (c, &res) in residuals.iter().enumerate() {
        let col: Vec<T> = x.column(c).iter().copied().collect();
        let b: Vec<T> = rhs.column(c).iter().copied().collect();
        let norm = lu_norm(&col);
        let rhs_norm = lu_norm(&b).max(f64::MIN_POSITIVE);
        if !res.is_finite() || res > budget * rhs_norm {
            return Err(Error::SpectralProximity {
                z,
                residual: res,
                detail: format!("column {c} residual above {:e}", budget * rhs_norm),
            });
        }
        if norm > PROXIMITY_NORM * rhs_norm {
            return Err(Error::SpectralProximity {
                z,
                residual: res,
                detail: format!("solution norm {norm:e} implies distance below 1e-6"),
            });
        }
    }
    Ok(())
}

/// `P_p (H - z)^{-1} P_q` for real `z` off the spectrum.
pub fn restricted_resolvent(
    h: &LatticeOperator,
    partition: &BoxPartition,
    z: f64,
    p: &BoxIndex,
    q: &BoxIndex,
) -> Result<RestrictedResolvent> {
    ResolventSolver::new(h, partition, z)?.block(p, q)
}

/// `G^λ = G^0 - λ G^0_{0n} (I + λ G^0_{nn})^{-1} G^0_{n0}`: the origin block
/// after adding `λ P_n`, computed from the unperturbed blocks.
pub fn rank_perturbed_block(
    g00: &DMatrix<f64>,
    g0n: &DMatrix<f64>,
    gnn: &DMatrix<f64>,
    gn0: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let k = gnn.nrows();
    let inner = DMatrix::<f64>::identity(k, k) + gnn * lambda;
    let lu = Lu::factor(&inner)?;
    let (solved, _) = lu.solve_columns(gn0);
    Ok(g00 - g0n * solved * lambda)
}

/// `H_r = P_0ΔP_0 - P_0Δ(I-P_0)(H̃ - r)^{-1}(I-P_0)ΔP_0` on `Λ(0)`, with
/// `ω_0` kept aside.
#[derive(Clone, Debug)]
pub struct SchurReduced<T: Real = f64> {
    pub r: f64,
    pub matrix: DMatrix<T>,
    pub omega0: f64,
}

impl<T: Real> SchurReduced<T> {
    /// `r² H_r`.
    pub fn scaled(&self) -> DMatrix<T> {
        let r2 = T::from_f64(self.r) * T::from_f64(self.r);
        self.matrix.map(|v| v * r2)
    }
}

impl SchurReduced<f64> {
    /// `G_00(r) = (H_r + ω_0 - r)^{-1}`.
    pub fn origin_resolvent(&self) -> Result<DMatrix<f64>> {
        let n = self.matrix.nrows();
        let shifted = &self.matrix + DMatrix::<f64>::identity(n, n) * (self.omega0 - self.r);
        let lu = Lu::factor(&shifted).map_err(|_| Error::SpectralProximity {
            z: self.r,
            residual: f64::INFINITY,
            detail: "reduced matrix is singular at this shift".into(),
        })?;
        let (inv, _) = lu.solve_columns(&DMatrix::identity(n, n));
        Ok(inv)
    }
}

struct OriginSplit {
    origin: Vec<usize>,
    rest: Vec<usize>,
    hamiltonian: LatticeOperator,
    omega0: f64,
}

fn split(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
) -> Result<OriginSplit> {
    let d = partition.d();
    let origin_box = BoxIndex::origin(d);
    let hamiltonian = build_hamiltonian(partition, disorder, boosts)?;
    let omega0 = disorder
        .get(&origin_box)
        .ok_or_else(|| Error::IncompleteSample {
            missing: origin_box.0.clone(),
        })?;
    Ok(OriginSplit {
        origin: partition.box_site_indices(&origin_box)?,
        rest: partition.complement_of_origin(),
        hamiltonian,
        omega0,
    })
}

/// Schur reduction in `f64`.
pub fn schur_reduced(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
) -> Result<SchurReduced<f64>> {
    schur_reduced_in::<f64>(partition, disorder, boosts, r)
}

/// Schur reduction carried out entirely at precision `T`.
pub fn schur_reduced_in<T: Real>(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
) -> Result<SchurReduced<T>> {
    let parts = split(partition, disorder, boosts)?;
    let h = &parts.hamiltonian.matrix;
    let outer: DMatrix<T> = promote(&submatrix(h, &parts.rest, &parts.rest));
    let m = outer.nrows();
    let rt = T::from_f64(r);
    let shifted = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            outer[(i, j)] - rt
        } else {
            outer[(i, j)]
        }
    });
    // Hopping between Λ(0) and the rest; H and Δ agree off the diagonal.
    let hop: DMatrix<T> = promote(&submatrix(h, &parts.rest, &parts.origin));
    let lu = Lu::factor(&shifted).map_err(|_| Error::SpectralProximity {
        z: r,
        residual: f64::INFINITY,
        detail: "decoupled operator minus r is singular".into(),
    })?;
    let (solved, residuals) = lu.solve_columns(&hop);
    check_solve(r, &solved, &hop, &residuals)?;
    let correction = matmul(&hop.transpose(), &solved);
    let inner: DMatrix<T> = promote(&submatrix(h, &parts.origin, &parts.origin));
    let v = parts.origin.len();
    // The diagonal of the origin block carries ω_0, which the reduction keeps
    // separate.
    let matrix = DMatrix::from_fn(v, v, |i, j| {
        let base = if i == j { T::zero() } else { inner[(i, j)] };
        base - correction[(i, j)]
    });
    Ok(SchurReduced {
        r,
        matrix,
        omega0: parts.omega0,
    })
}

/// Leading terms of `r² H_r` and the first neglected operator.
#[derive(Clone, Debug)]
pub struct NeumannTerms {
    /// `A_r = r²P_0ΔP_0 + rP_0Δ(I-P_0)ΔP_0 + Σ_{|n|=1} ω_n P_0ΔP_nΔP_0 + Σ λ_i P_0ΔP_{e_i}ΔP_0`.
    pub leading: DMatrix<f64>,
    /// `P_0Δ(I-P_0)Δ(I-P_0)ΔP_0`.
    pub third_order: DMatrix<f64>,
}

pub fn neumann_truncation(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
) -> Result<NeumannTerms> {
    if partition.radius() < 2 {
        return Err(Error::InsufficientVolume {
            radius: partition.radius(),
            required: 2,
        });
    }
    let d = partition.d();
    if !boosts.is_empty() && boosts.len() != d {
        return Err(Error::InvalidGeometry(format!(
            "expected {d} boosts, got {}",
            boosts.len()
        )));
    }
    let origin = partition.box_site_indices(&BoxIndex::origin(d))?;
    let rest = partition.complement_of_origin();
    let lap = laplacian_integer(partition);
    let inner = submatrix(&lap, &origin, &origin).map(|v| v as f64);
    let v = origin.len();

    let mut leading = inner * (r * r);
    let neighbors = disorder.neighbor_values(d)?;
    for (i, &(omega_minus, omega_plus)) in neighbors.iter().enumerate() {
        let lambda = boosts.get(i).copied().unwrap_or(0.0);
        let minus = face_product(partition, i, false)?.product.map(|x| x as f64);
        let plus = face_product(partition, i, true)?.product.map(|x| x as f64);
        leading += minus * (r + omega_minus);
        leading += plus * (r + omega_plus + lambda);
    }
    debug_assert_eq!(leading.nrows(), v);

    let hop = submatrix(&lap, &rest, &origin);
    let outer = submatrix(&lap, &rest, &rest);
    let third = hop.transpose() * outer * hop;
    Ok(NeumannTerms {
        leading,
        third_order: third.map(|x| x as f64),
    })
}

/// Raised when double precision cannot resolve a quantity on top of the
/// `r²`-sized entries of `r² H_r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionWarning {
    pub r: f64,
    pub floor: f64,
    pub quantity: f64,
}

/// `Some` when `r² 2^-52 > 10^-3 · quantity`.
pub fn precision_guard(r: f64, quantity: f64) -> Option<PrecisionWarning> {
    let floor = r * r * f64::EPSILON;
    (floor > 1e-3 * quantity.abs()).then_some(PrecisionWarning { r, floor, quantity })
}

/// Round an extended-precision reduction back to `f64`.
pub fn demote_reduced<T: Real>(s: &SchurReduced<T>) -> SchurReduced<f64> {
    SchurReduced {
        r: s.r,
        matrix: demote(&s.matrix),
        omega0: s.omega0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_laplacian;
    use crate::linalg::{max_abs_diff, symmetric_eigenvalues, symmetric_norm, DoubleDouble};

    #[test]
    fn origin_block_matches_direct_inverse() {
        let p = BoxPartition::new(1, &[2], 1).unwrap();
        let h = build_laplacian(&p);
        let o = BoxIndex(vec![0]);
        let g = restricted_resolvent(&h, &p, 10.0, &o, &o).unwrap();
        let inv = (h.matrix.clone() - DMatrix::identity(6, 6) * 10.0)
            .try_inverse()
            .unwrap();
        let direct = submatrix(&inv, &[2, 3], &[2, 3]);
        assert!(max_abs_diff(&g.block, &direct) < 1e-10);
        assert!((g.block[(0, 1)] - g.block[(1, 0)]).abs() < 1e-10);
    }

    #[test]
    fn resolvent_norm_bound() {
        let p = BoxPartition::new(2, &[2, 2], 1).unwrap();
        let omega = DisorderSample::uniform(&p, -1.0, 1.0, 3);
        let h = build_hamiltonian(&p, &omega, &[]).unwrap();
        let spec = symmetric_eigenvalues(&h.matrix).unwrap();
        let z = 0.123;
        let dist = spec.iter().map(|e| (e - z).abs()).fold(f64::INFINITY, f64::min);
        let o = BoxIndex::origin(2);
        let g = restricted_resolvent(&h, &p, z, &o, &BoxIndex(vec![1, 0])).unwrap();
        assert!(g.block.norm() <= 1.0 / dist * (1.0 + 1e-12) * 2.0);
        let sv = g.block.clone().svd(false, false).singular_values;
        assert!(sv.max() <= 1.0 / dist * (1.0 + 1e-10));
    }

    #[test]
    fn eigenvalue_is_rejected() {
        let p = BoxPartition::new(1, &[3], 0).unwrap();
        let h = build_laplacian(&p);
        let o = BoxIndex(vec![0]);
        let err = restricted_resolvent(&h, &p, 2f64.sqrt(), &o, &o).unwrap_err();
        assert!(matches!(err, Error::SpectralProximity { .. }), "{err}");
    }

    #[test]
    fn reduction_tends_to_inner_laplacian() {
        let p = BoxPartition::new(2, &[2, 3], 2).unwrap();
        let zero = DisorderSample::constant(&p, 0.0);
        let s = schur_reduced(&p, &zero, &[], 1e6).unwrap();
        let origin = p.box_site_indices(&BoxIndex::origin(2)).unwrap();
        let inner = submatrix(&build_laplacian(&p).matrix, &origin, &origin);
        assert!(max_abs_diff(&s.matrix, &inner) < 1e-4);
    }

    #[test]
    fn reduction_is_symmetric_and_extended_agrees() {
        let p = BoxPartition::new(2, &[2, 2], 2).unwrap();
        let omega = DisorderSample::uniform(&p, -1.0, 1.0, 9);
        let s = schur_reduced(&p, &omega, &[0.5, -0.25], 40.0).unwrap();
        assert!(max_abs_diff(&s.matrix, &s.matrix.transpose()) < 1e-10);
        let e = schur_reduced_in::<DoubleDouble>(&p, &omega, &[0.5, -0.25], 40.0).unwrap();
        assert!(max_abs_diff(&s.matrix, &demote_reduced(&e).matrix) < 1e-14);
    }

    #[test]
    fn truncation_hand_example() {
        let p = BoxPartition::new(1, &[2], 2).unwrap();
        let zero = DisorderSample::constant(&p, 0.0);
        let t = neumann_truncation(&p, &zero, &[], 1.0).unwrap();
        assert_eq!(t.leading, DMatrix::from_element(2, 2, 1.0));
        let small = BoxPartition::new(1, &[2], 1).unwrap();
        assert!(matches!(
            neumann_truncation(&small, &zero, &[], 1.0),
            Err(Error::InvalidGeometry(_)) | Err(Error::InsufficientVolume { .. })
        ));
    }

    #[test]
    fn third_order_norm_bound() {
        for (d, lengths) in [(1, vec![3]), (2, vec![2, 3]), (3, vec![2, 2, 2])] {
            let p = BoxPartition::new(d, &lengths, 2).unwrap();
            let zero = DisorderSample::constant(&p, 0.0);
            let t = neumann_truncation(&p, &zero, &[], 1.0).unwrap();
            let bound = (2.0 * d as f64).powi(3);
            assert!(symmetric_norm(&t.third_order).unwrap() <= bound);
        }
    }

    #[test]
    fn guard_threshold() {
        assert!(precision_guard(100.0, 1.0).is_none());
        let w = precision_guard(1e7, 1.0).unwrap();
        assert!(w.floor > 1e-3);
        assert!(precision_guard(1e6, 1.0).is_none());
    }
}
