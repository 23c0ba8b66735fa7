//! Cluster predictions for the Kronecker sum `A_r = Σ_i I ⊗ D_i ⊗ I`,
//! `D_i = D_r^{a_i, b_i}` with `a_i = ω_{-e_i}` and `b_i = ω_{e_i} + λ_i`.
//!
//! A mode tuple `n = (n_1, …, n_d)` predicts
//!
//! ```text
//! E_n = 2r² Σ cos θ_i + 4r Σ sin² θ_i/(l_i+1) + 2 Σ (a_i+b_i) sin² θ_i/(l_i+1) - 4 Σ C_{l_i,n_i}
//! ```
//!
//! with `θ_i = πn_i/(l_i+1)`. Pairs of tuples are separated at order `r²`
//! when their cosine sums differ and at order `r` when only the weighted
//! sine sums differ.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::cyclotomic::{cos_combination_is_zero, CosTerm};
use crate::error::{Error, Result};
use crate::tridiag::{self, c_coefficient, mode_energy, mode_weight, TridiagSpec};

/// Largest number of mode tuples enumerated.
pub const TUPLE_CAP: u128 = 10_000;

/// Largest number of tuple pairs reported by [`verify_gaps`].
pub const PAIR_CAP: u128 = 1_000_000;

/// Sums closer than this are re-checked in exact arithmetic.
const EXACT_WINDOW: f64 = 1e-9;

fn tuple_count(lengths: &[usize]) -> Result<u128> {
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(Error::InvalidGeometry(format!("invalid lengths {lengths:?}")));
    }
    let count: u128 = lengths.iter().map(|&l| l as u128).product();
    if count > TUPLE_CAP {
        return Err(Error::CombinatorialLimit { count, cap: TUPLE_CAP });
    }
    Ok(count)
}

/// All tuples `1 ≤ n_i ≤ l_i`, lexicographic with the last index fastest.
pub fn mode_tuples(lengths: &[usize]) -> Result<Vec<Vec<usize>>> {
    let count = tuple_count(lengths)?;
    Ok((0..count as usize)
        .map(|mut idx| {
            let mut t = vec![0; lengths.len()];
            for (i, &l) in lengths.iter().enumerate().rev() {
                t[i] = idx % l + 1;
                idx /= l;
            }
            t
        })
        .collect())
}

fn check_modes(lengths: &[usize], modes: &[usize]) -> Result<()> {
    if modes.len() != lengths.len() {
        return Err(Error::DegenerateInput(format!(
            "{} modes for {} directions",
            modes.len(),
            lengths.len()
        )));
    }
    for (i, (&n, &l)) in modes.iter().zip(lengths).enumerate() {
        if !(1..=l).contains(&n) {
            return Err(Error::ModeOutOfRange {
                direction: i + 1,
                mode: n,
                max: l,
            });
        }
    }
    Ok(())
}

/// Boundary couplings of the factor in each direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterInput {
    pub lengths: Vec<usize>,
    /// `(ω_{-e_i}, ω_{e_i})`.
    pub neighbors: Vec<(f64, f64)>,
    pub lambda: Vec<f64>,
    pub r: f64,
}

impl ClusterInput {
    pub fn new(lengths: &[usize], neighbors: &[(f64, f64)], lambda: &[f64], r: f64) -> Result<Self> {
        let d = lengths.len();
        if neighbors.len() != d {
            return Err(Error::DegenerateInput(format!("expected {d} neighbor pairs, got {}", neighbors.len())));
        }
        let lambda = if lambda.is_empty() { vec![0.0; d] } else { lambda.to_vec() };
        if lambda.len() != d {
            return Err(Error::DegenerateInput(format!("expected {d} boosts, got {}", lambda.len())));
        }
        tuple_count(lengths)?;
        Ok(ClusterInput {
            lengths: lengths.to_vec(),
            neighbors: neighbors.to_vec(),
            lambda,
            r,
        })
    }

    pub fn factor(&self, i: usize) -> Result<TridiagSpec> {
        let (minus, plus) = self.neighbors[i];
        TridiagSpec::new(self.lengths[i], minus, plus + self.lambda[i], self.r)
    }

    pub fn factors(&self) -> Result<Vec<TridiagSpec>> {
        (0..self.lengths.len()).map(|i| self.factor(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrediction {
    pub modes: Vec<usize>,
    pub r2_term: f64,
    pub r1_term: f64,
    pub potential_term: f64,
    /// `-4 Σ C_{l_i, n_i}`.
    pub curvature_term: f64,
    pub predicted: f64,
    pub matched_exact: Option<f64>,
}

pub fn predicted_cluster_energy(input: &ClusterInput, modes: &[usize]) -> Result<ClusterPrediction> {
    check_modes(&input.lengths, modes)?;
    let r = input.r;
    let mut p = ClusterPrediction {
        modes: modes.to_vec(),
        r2_term: 0.0,
        r1_term: 0.0,
        potential_term: 0.0,
        curvature_term: 0.0,
        predicted: 0.0,
        matched_exact: None,
    };
    for (i, &n) in modes.iter().enumerate() {
        let f = input.factor(i)?;
        let w = mode_weight(f.l, n);
        p.r2_term += r * r * mode_energy(f.l, n);
        p.r1_term += 2.0 * r * w;
        p.potential_term += (f.a + f.b) * w;
        p.curvature_term -= 4.0 * c_coefficient(f.l, n);
    }
    p.predicted = p.r2_term + p.r1_term + p.potential_term + p.curvature_term;
    Ok(p)
}

/// Predictions for every tuple, in tuple order.
pub fn predicted_clusters(input: &ClusterInput) -> Result<Vec<ClusterPrediction>> {
    mode_tuples(&input.lengths)?
        .iter()
        .map(|t| predicted_cluster_energy(input, t))
        .collect()
}

/// `Σ_i I ⊗ … ⊗ F_i ⊗ … ⊗ I` with the first factor most significant.
pub fn kronecker_sum(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let total: usize = dims.iter().product();
    let mut out = DMatrix::zeros(total, total);
    for (i, f) in factors.iter().enumerate() {
        let before: usize = dims[..i].iter().product();
        let after: usize = dims[i + 1..].iter().product();
        let left = DMatrix::<f64>::identity(before, before);
        let right = DMatrix::<f64>::identity(after, after);
        out += left.kronecker(f).kronecker(&right);
    }
    out
}

/// `A_r` assembled from its tridiagonal factors.
pub fn leading_operator(input: &ClusterInput) -> Result<DMatrix<f64>> {
    let factors = input
        .factors()?
        .iter()
        .map(TridiagSpec::matrix)
        .collect::<Vec<_>>();
    Ok(kronecker_sum(&factors))
}

/// Exact eigenvalues of `A_r` labelled by mode tuple: the `n`-th mode of a
/// factor is its `(l+1-n)`-th smallest eigenvalue.
pub fn labelled_spectrum(input: &ClusterInput) -> Result<Vec<(Vec<usize>, f64)>> {
    let spectra = input
        .factors()?
        .iter()
        .map(tridiag::exact_spectrum)
        .collect::<Result<Vec<_>>>()?;
    Ok(mode_tuples(&input.lengths)?
        .into_iter()
        .map(|t| {
            let e = t
                .iter()
                .zip(&spectra)
                .map(|(&n, s)| s[s.len() - n])
                .sum();
            (t, e)
        })
        .collect())
}

fn cos_sum(lengths: &[usize], modes: &[usize]) -> f64 {
    modes.iter().zip(lengths).map(|(&n, &l)| mode_energy(l, n) / 2.0).sum()
}

fn sine_sum(lengths: &[usize], modes: &[usize]) -> f64 {
    modes.iter().zip(lengths).map(|(&n, &l)| mode_weight(l, n) / 2.0).sum()
}

/// Exact `Σ cos(πn_i/p_i) = Σ cos(πm_i/p_i)`; float fallback when the
/// common field is too large.
fn cos_sums_equal(lengths: &[usize], n: &[usize], m: &[usize]) -> bool {
    let diff = cos_sum(lengths, n) - cos_sum(lengths, m);
    if diff.abs() > EXACT_WINDOW {
        return false;
    }
    let mut terms = Vec::new();
    let one = BigRational::from_integer(1.into());
    for ((&a, &b), &l) in n.iter().zip(m).zip(lengths) {
        if a != b {
            let p = (l + 1) as u64;
            terms.push(CosTerm { coefficient: one.clone(), n: a as u64, p });
            terms.push(CosTerm { coefficient: -one.clone(), n: b as u64, p });
        }
    }
    cos_combination_is_zero(&BigRational::zero(), &terms).unwrap_or(true)
}

/// Exact `Σ sin²(πn_i/p_i)/p_i = Σ sin²(πm_i/p_i)/p_i`, through
/// `sin²θ = (1 - cos 2θ)/2`.
fn sine_sums_equal(lengths: &[usize], n: &[usize], m: &[usize]) -> bool {
    let diff = sine_sum(lengths, n) - sine_sum(lengths, m);
    if diff.abs() > EXACT_WINDOW {
        return false;
    }
    let mut terms = Vec::new();
    for ((&a, &b), &l) in n.iter().zip(m).zip(lengths) {
        if a != b {
            let p = (l + 1) as u64;
            let w = BigRational::new(1.into(), (2 * p).into());
            terms.push(CosTerm { coefficient: -w.clone(), n: 2 * a as u64, p });
            terms.push(CosTerm { coefficient: w, n: 2 * b as u64, p });
        }
    }
    cos_combination_is_zero(&BigRational::zero(), &terms).unwrap_or(true)
}

/// Smallest nonzero difference of a tuple function, with near-ties decided
/// by `equal`.
fn min_nonzero_difference(
    tuples: &[Vec<usize>],
    value: impl Fn(&[usize]) -> f64,
    equal: impl Fn(&[usize], &[usize]) -> bool,
) -> Option<f64> {
    let mut keyed: Vec<(f64, &Vec<usize>)> = tuples.iter().map(|t| (value(t), t)).collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sum"));
    keyed
        .windows(2)
        .filter(|w| !equal(w[0].1, w[1].1))
        .map(|w| w[1].0 - w[0].0)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConstants {
    /// Smallest nonzero difference of `Σ cos(πn_i/(l_i+1))`.
    pub c_tilde: Option<f64>,
    /// Smallest nonzero difference of `Σ sin²(πn_i/(l_i+1))/(l_i+1)`.
    pub s_tilde: Option<f64>,
}

pub fn min_nonzero_gaps(lengths: &[usize]) -> Result<GapConstants> {
    let tuples = mode_tuples(lengths)?;
    Ok(GapConstants {
        c_tilde: min_nonzero_difference(&tuples, |t| cos_sum(lengths, t), |a, b| cos_sums_equal(lengths, a, b)),
        s_tilde: min_nonzero_difference(&tuples, |t| sine_sum(lengths, t), |a, b| sine_sums_equal(lengths, a, b)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    /// Cosine sums differ: gap of order `r²`.
    CosSeparated,
    /// Equal cosine sums, different weighted sine sums: gap of order `r`.
    SineSeparated,
    /// Both sums equal and `m_i ∈ {n_i, l_i+1-n_i}` for every `i`.
    SameCluster,
    /// Both sums equal by an arithmetic coincidence between tuples outside
    /// one cluster; split only by the potential and curvature terms.
    PotentialSeparated,
}

impl PairClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CosSeparated => "cos_separated",
            Self::SineSeparated => "sine_separated",
            Self::SameCluster => "same_cluster",
            Self::PotentialSeparated => "potential_separated",
        }
    }
}

/// `m_i ∈ {n_i, l_i+1-n_i}` for every direction.
pub fn in_same_cluster(lengths: &[usize], n: &[usize], m: &[usize]) -> bool {
    n.iter()
        .zip(m)
        .zip(lengths)
        .all(|((&a, &b), &l)| a == b || a + b == l + 1)
}

pub fn classify_pair(n: &[usize], m: &[usize], lengths: &[usize]) -> Result<PairClass> {
    check_modes(lengths, n)?;
    check_modes(lengths, m)?;
    Ok(if !cos_sums_equal(lengths, n, m) {
        PairClass::CosSeparated
    } else if !sine_sums_equal(lengths, n, m) {
        PairClass::SineSeparated
    } else if in_same_cluster(lengths, n, m) {
        PairClass::SameCluster
    } else {
        PairClass::PotentialSeparated
    })
}

/// Pair sorted exact eigenvalues with sorted predictions, then swap
/// adjacent assignments while that lowers the larger of the two errors.
///
/// `resolution` is the smallest prediction difference that matters: an
/// exact value closer to a prediction at least `resolution` away from its
/// own is reported as ambiguous.
pub fn match_spectrum(
    exact: &[f64],
    predictions: &[ClusterPrediction],
    resolution: f64,
) -> Result<Vec<ClusterPrediction>> {
    if exact.len() != predictions.len() {
        return Err(Error::DegenerateInput(format!(
            "{} exact eigenvalues for {} predictions",
            exact.len(),
            predictions.len()
        )));
    }
    let mut exact = exact.to_vec();
    exact.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalue"));
    let mut preds = predictions.to_vec();
    preds.sort_by(|a, b| {
        a.predicted
            .partial_cmp(&b.predicted)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.modes.cmp(&b.modes))
    });
    let mut assign: Vec<usize> = (0..exact.len()).collect();
    let mut changed = true;
    let mut passes = 0;
    while changed && passes < exact.len() + 1 {
        changed = false;
        passes += 1;
        for i in 0..assign.len().saturating_sub(1) {
            let (p, q) = (preds[i].predicted, preds[i + 1].predicted);
            let keep = (exact[assign[i]] - p).abs().max((exact[assign[i + 1]] - q).abs());
            let swap = (exact[assign[i + 1]] - p).abs().max((exact[assign[i]] - q).abs());
            if swap < keep {
                assign.swap(i, i + 1);
                changed = true;
            }
        }
    }
    let mut ambiguous = Vec::new();
    for (i, pred) in preds.iter().enumerate() {
        let e = exact[assign[i]];
        let own = (e - pred.predicted).abs();
        let rival = preds.iter().any(|q| {
            (q.predicted - pred.predicted).abs() >= resolution && (e - q.predicted).abs() <= own
        });
        if rival {
            ambiguous.push(i);
        }
    }
    if !ambiguous.is_empty() {
        return Err(Error::Matching { indices: ambiguous });
    }
    for (i, pred) in preds.iter_mut().enumerate() {
        pred.matched_exact = Some(exact[assign[i]]);
    }
    preds.sort_by(|a, b| a.modes.cmp(&b.modes));
    Ok(preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub pair: (Vec<usize>, Vec<usize>),
    pub class: PairClass,
    pub gap: f64,
    /// Lower bound asserted for this pair; `None` when only reported.
    pub required: Option<f64>,
    pub passed: Option<bool>,
}

/// The `r²` and `r` gap scales with the safety margin applied.
pub fn required_gaps(constants: &GapConstants, r: f64, margin: f64) -> (Option<f64>, Option<f64>) {
    (
        constants.c_tilde.map(|c| 2.0 * c * r * r * (1.0 - margin)),
        constants.s_tilde.map(|s| 4.0 * s * r * (1.0 - margin)),
    )
}

/// Match `exact` against the predictions of `input` and check every pair
/// of tuples against its class bound.
pub fn verify_gaps(exact: &[f64], input: &ClusterInput, margin: f64) -> Result<Vec<GapReport>> {
    let count = tuple_count(&input.lengths)?;
    let pairs = count * (count - 1) / 2;
    if pairs > PAIR_CAP {
        return Err(Error::CombinatorialLimit { count: pairs, cap: PAIR_CAP });
    }
    let constants = min_nonzero_gaps(&input.lengths)?;
    let (cos_req, sine_req) = required_gaps(&constants, input.r, margin);
    let resolution = [cos_req, sine_req]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    let matched = match_spectrum(exact, &predicted_clusters(input)?, resolution)?;
    let mut reports = Vec::with_capacity(pairs as usize);
    for (i, a) in matched.iter().enumerate() {
        for b in &matched[i + 1..] {
            let class = classify_pair(&a.modes, &b.modes, &input.lengths)?;
            let gap = (a.matched_exact.unwrap_or(f64::NAN) - b.matched_exact.unwrap_or(f64::NAN)).abs();
            let required = match class {
                PairClass::CosSeparated => cos_req,
                PairClass::SineSeparated => sine_req,
                PairClass::SameCluster | PairClass::PotentialSeparated => None,
            };
            reports.push(GapReport {
                pair: (a.modes.clone(), b.modes.clone()),
                class,
                gap,
                required,
                passed: required.map(|req| gap >= req),
            });
        }
    }
    Ok(reports)
}

/// Sizes of the groups of sorted `values` whose consecutive differences are
/// at most `tol · max(1, spectral diameter)`.
pub fn degeneracy_clusters(values: &[f64], tol: f64) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalue"));
    let Some((&lo, &hi)) = v.first().zip(v.last()) else {
        return Vec::new();
    };
    let tau = tol * (hi - lo).max(1.0);
    let mut sizes = vec![1];
    for w in v.windows(2) {
        if w[1] - w[0] <= tau {
            *sizes.last_mut().expect("nonempty") += 1;
        } else {
            sizes.push(1);
        }
    }
    sizes
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub lengths: Vec<usize>,
    /// Number of directions with `l_i > 1`.
    pub s: usize,
    pub simple: bool,
    pub bound: u64,
    pub reasons: Vec<String>,
}

/// Simplicity and multiplicity bound read off the box lengths.
pub fn admissibility(lengths: &[usize]) -> AdmissibilityReport {
    let q: Vec<usize> = lengths.iter().filter(|&&l| l > 1).map(|&l| l + 1).collect();
    let s = q.len();
    let mut reasons = Vec::new();
    let simple = match s {
        0 | 1 => {
            reasons.push(format!("{s} direction(s) with l_i > 1"));
            true
        }
        2 => {
            let g = q[0].gcd(&q[1]);
            reasons.push(format!("gcd({}, {}) = {g}", q[0], q[1]));
            g == 1
        }
        _ => {
            let mut ok = true;
            for (i, &a) in q.iter().enumerate() {
                for &b in &q[i + 1..] {
                    let g = a.gcd(&b);
                    if g != 1 {
                        reasons.push(format!("gcd({a}, {b}) = {g}"));
                        ok = false;
                    }
                }
                if a % 2 == 0 || a % 3 == 0 {
                    reasons.push(format!("{a} lies in 2N or 3N"));
                    ok = false;
                }
            }
            if ok {
                reasons.push("pairwise coprime, none in 2N or 3N".to_string());
            }
            ok
        }
    };
    let bound = if simple { 1 } else { (1u64 << s) - s as u64 };
    AdmissibilityReport {
        lengths: lengths.to_vec(),
        s,
        simple,
        bound,
        reasons,
    }
}
