//! The boundary-perturbed path matrix
//! `D_r^{a,b} = r² Δ_l + (a + r)|δ_1⟩⟨δ_1| + (b + r)|δ_l⟩⟨δ_l|`,
//! its exact spectrum, and its large-`r` eigenvalue expansion.
//!
//! Writing `θ_n = πn/(l+1)`, `E_n = 2cos θ_n` and
//! `a_n = (2/(l+1)) sin² θ_n`, the eigenvalue attached to mode `n` is
//!
//! ```text
//! r² E_n + 2r a_n + (a + b) a_n - 4 C_n - 4 C_n (a + b)/r + O(1/r)
//! ```
//!
//! with `C_n = a_n Σ_{m ≠ n, m ≡ n (mod 2)} a_m / (E_m - E_n)`. The `O(1/r)`
//! remainder has no closed form here; it is only bounded.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_ql;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TridiagSpec {
    pub l: usize,
    pub a: f64,
    pub b: f64,
    pub r: f64,
}

impl TridiagSpec {
    pub fn new(l: usize, a: f64, b: f64, r: f64) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidGeometry("path length must be at least 1".into()));
        }
        if !(r > 0.0) {
            return Err(Error::InvalidGeometry(format!("r must be positive, got {r}")));
        }
        Ok(TridiagSpec { l, a, b, r })
    }

    /// The expansion is only asserted for `r > max(|a|, |b|, 1)`.
    pub fn in_expansion_regime(&self) -> bool {
        self.r > self.a.abs().max(self.b.abs()).max(1.0)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let (diag, off) = self.bands();
        let l = self.l;
        DMatrix::from_fn(l, l, |i, j| {
            if i == j {
                diag[i]
            } else if i.abs_diff(j) == 1 {
                off[i.min(j)]
            } else {
                0.0
            }
        })
    }

    fn bands(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.l;
        let mut diag = vec![0.0; l];
        diag[0] += self.a + self.r;
        diag[l - 1] += self.b + self.r;
        (diag, vec![self.r * self.r; l - 1])
    }
}

fn angle(l: usize, n: usize) -> f64 {
    PI * n as f64 / (l + 1) as f64
}

/// `cos(πn/(l+1))`, evaluated as `sin(π(l+1-2n)/(2(l+1)))` so the middle
/// mode is exactly zero.
fn mode_cos(l: usize, n: usize) -> f64 {
    let num = (l + 1) as f64 - 2.0 * n as f64;
    (PI * num / (2 * (l + 1)) as f64).sin()
}

/// `2 cos(πn/(l+1))`.
pub fn mode_energy(l: usize, n: usize) -> f64 {
    2.0 * mode_cos(l, n)
}

/// `(2/(l+1)) sin²(πn/(l+1))`, the squared boundary amplitude of mode `n`.
pub fn mode_weight(l: usize, n: usize) -> f64 {
    2.0 / (l + 1) as f64 * angle(l, n).sin().powi(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletMode {
    pub n: usize,
    pub energy: f64,
    pub weight: f64,
    pub vector: Vec<f64>,
}

/// Eigenpairs of the path adjacency `Δ_l`:
/// `φ_n(x) = sqrt(2/(l+1)) sin(πnx/(l+1))` with eigenvalue `2cos(πn/(l+1))`.
pub fn dirichlet_modes(l: usize) -> Vec<DirichletMode> {
    let norm = (2.0 / (l + 1) as f64).sqrt();
    (1..=l)
        .map(|n| DirichletMode {
            n,
            energy: mode_energy(l, n),
            weight: mode_weight(l, n),
            vector: (1..=l)
                .map(|x| norm * (PI * (n * x) as f64 / (l + 1) as f64).sin())
                .collect(),
        })
        .collect()
}

/// `C_{l,n} = (2/(l+1)²) sin²θ_n Σ_{m≠n, m≡n mod 2} sin²θ_m / (cos θ_m - cos θ_n)`.
pub fn c_coefficient(l: usize, n: usize) -> f64 {
    assert!((1..=l).contains(&n), "mode {n} outside 1..={l}");
    let theta_n = angle(l, n);
    let sum: f64 = (1..=l)
        .filter(|&m| m != n && (m % 2) == (n % 2))
        .map(|m| {
            let theta_m = angle(l, m);
            theta_m.sin().powi(2) / (mode_cos(l, m) - mode_cos(l, n))
        })
        .sum();
    2.0 / ((l + 1) as f64).powi(2) * theta_n.sin().powi(2) * sum
}

/// Ascending eigenvalues of `D_r^{a,b}`, each verified against its
/// eigenvector residual.
pub fn exact_spectrum(spec: &TridiagSpec) -> Result<Vec<f64>> {
    let (diag, off) = spec.bands();
    let eig = tridiagonal_ql(&diag, &off, None)?;
    let m = spec.matrix();
    let scale = m.abs().row_sum().max();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(k);
        let res = (&m * v - v * lambda).norm();
        if res > 1e-10 * scale.max(1.0) {
            return Err(Error::NonConvergence {
                iterations: crate::linalg::ql_iteration_cap(spec.l),
            });
        }
    }
    Ok(eig.values)
}

/// How many terms of the expansion to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExpansionOrder {
    /// `2r² cos θ_n`.
    R2,
    /// adds `(4r/(l+1)) sin² θ_n`.
    R1,
    /// adds `(2(a+b)/(l+1)) sin² θ_n - 4C_n`.
    Const,
    /// adds `-4C_n (a+b)/r`.
    COverR,
}

impl FromStr for ExpansionOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" => Ok(Self::R2),
            "r1" => Ok(Self::R1),
            "const" => Ok(Self::Const),
            "c_over_r" => Ok(Self::COverR),
            other => Err(Error::InvalidOrder(other.to_string())),
        }
    }
}

impl fmt::Display for ExpansionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::R2 => "r2",
            Self::R1 => "r1",
            Self::Const => "const",
            Self::COverR => "c_over_r",
        };
        f.write_str(s)
    }
}

/// The individual pieces of the expansion for one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    pub n: usize,
    pub cos_term: f64,
    pub sine_weight: f64,
    pub c_n: f64,
    pub predicted: f64,
}

pub fn expansion_terms(spec: &TridiagSpec, n: usize, order: ExpansionOrder) -> Result<ExpansionTerms> {
    if !(1..=spec.l).contains(&n) {
        return Err(Error::ModeOutOfRange {
            direction: 1,
            mode: n,
            max: spec.l,
        });
    }
    let l = spec.l;
    let r = spec.r;
    let cos_term = mode_energy(l, n);
    let sine_weight = mode_weight(l, n);
    let c_n = c_coefficient(l, n);
    let mut predicted = r * r * cos_term;
    if order >= ExpansionOrder::R1 {
        predicted += 2.0 * r * sine_weight;
    }
    if order >= ExpansionOrder::Const {
        predicted += (spec.a + spec.b) * sine_weight - 4.0 * c_n;
    }
    if order >= ExpansionOrder::COverR {
        predicted -= 4.0 * c_n * (spec.a + spec.b) / r;
    }
    Ok(ExpansionTerms {
        n,
        cos_term,
        sine_weight,
        c_n,
        predicted,
    })
}

/// Partial sum of the expansion for mode `n` through `order`.
pub fn predicted_eigenvalue(spec: &TridiagSpec, n: usize, order: ExpansionOrder) -> Result<f64> {
    expansion_terms(spec, n, order).map(|t| t.predicted)
}

/// Predictions for every mode, ascending in value.
pub fn predicted_spectrum(spec: &TridiagSpec, order: ExpansionOrder) -> Result<Vec<f64>> {
    let mut v = (1..=spec.l)
        .map(|n| predicted_eigenvalue(spec, n, order))
        .collect::<Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite prediction"));
    Ok(v)
}

/// `max_n |exact - predicted(const)|`, pairing both spectra in sorted order.
pub fn max_residual(spec: &TridiagSpec) -> Result<f64> {
    let exact = exact_spectrum(spec)?;
    let predicted = predicted_spectrum(spec, ExpansionOrder::Const)?;
    Ok(exact
        .iter()
        .zip(&predicted)
        .map(|(e, p)| (e - p).abs())
        .fold(0.0, f64::max))
}

/// `(40(l+1)|a+b| + 16(l+1)³ + 1)/r`: the budget for the dropped `O(1/r)`
/// terms.
pub fn residual_budget(spec: &TridiagSpec) -> f64 {
    let lp = (spec.l + 1) as f64;
    (40.0 * lp * (spec.a + spec.b).abs() + 16.0 * lp.powi(3) + 1.0) / spec.r
}

/// Absolute floor under which residuals are treated as rounding.
pub const UNDERFLOW_FLOOR: f64 = 1e-13;

/// Rounding level of `max_residual`: eigenvalues of size `r²` carry an
/// error of a few ulps of `r²`.
pub fn rounding_floor(spec: &TridiagSpec) -> f64 {
    let size = spec.r * spec.r + spec.r + spec.a.abs() + spec.b.abs();
    UNDERFLOW_FLOOR.max(16.0 * (spec.l + 1) as f64 * f64::EPSILON * size)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ResidualFit {
    Slope(f64),
    ExactToPrecision,
}

/// Least-squares slope of `log residual` against `log r`.
pub fn residual_order(l: usize, a: f64, b: f64, rs: &[f64]) -> Result<ResidualFit> {
    if rs.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "need at least 4 values of r, got {}",
            rs.len()
        )));
    }
    let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rs.iter().copied().fold(0.0, f64::max);
    if hi < 8.0 * lo {
        return Err(Error::DegenerateInput(format!(
            "r values span a factor {:.3}, need at least 8",
            hi / lo
        )));
    }
    let mut usable = Vec::with_capacity(rs.len());
    for &r in rs {
        let spec = TridiagSpec::new(l, a, b, r)?;
        let res = max_residual(&spec)?;
        if res >= rounding_floor(&spec) {
            usable.push((r, res));
        }
    }
    if usable.len() < 2 {
        return Ok(ResidualFit::ExactToPrecision);
    }
    Ok(ResidualFit::Slope(log_log_slope(&usable)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
