//! Coefficient design that keeps every weighted selection sum
//! `F_π = Σ_i a_i x_{i,π(i)}` at least `1/δ` away from every other one.
//!
//! With `ε` below every point and every within-set gap, and
//! `0 < δ < min(1/2, 1/(1+ε))`, any `a_i ∈ ((1/2)(2/εδ)^i, (2/εδ)^i)` works.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of selection pairs compared by [`verify_separation`].
pub const PAIR_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationDesign {
    pub sets: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub delta: f64,
    /// Open intervals `(lo, hi)` for `a_1, …, a_d`.
    pub intervals: Vec<(f64, f64)>,
    /// Smallest gap between points of different sets; informational.
    pub cross_set_gap: Option<f64>,
}

impl SeparationDesign {
    pub fn new(sets: Vec<Vec<f64>>, delta_hint: Option<f64>) -> Result<Self> {
        let (epsilon, delta) = epsilon_delta(&sets, delta_hint)?;
        let intervals = design_intervals(epsilon, delta, sets.len())?;
        let cross_set_gap = cross_set_gap(&sets);
        Ok(SeparationDesign {
            sets,
            epsilon,
            delta,
            intervals,
            cross_set_gap,
        })
    }
}

/// `{sin²(πj/(l+1))/(l+1) : 1 ≤ j ≤ l}` for each length, with the mirror
/// duplicates `j ↔ l+1-j` dropped.
pub fn sine_system(lengths: &[usize]) -> Vec<Vec<f64>> {
    lengths
        .iter()
        .map(|&l| {
            let p = (l + 1) as f64;
            (1..=l.div_ceil(2))
                .map(|j| (PI * j as f64 / p).sin().powi(2) / p)
                .collect()
        })
        .collect()
}

/// `ε` = min over all points and all within-set gaps; `δ` = the hint when
/// admissible, else `0.9 · min(1/2, 1/(1+ε))`.
pub fn epsilon_delta(sets: &[Vec<f64>], delta_hint: Option<f64>) -> Result<(f64, f64)> {
    if sets.is_empty() || sets.iter().any(Vec::is_empty) {
        return Err(Error::DegenerateInput("every set needs at least one point".into()));
    }
    let mut epsilon = f64::INFINITY;
    for (i, set) in sets.iter().enumerate() {
        for &x in set {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::DegenerateInput(format!("point {x} of set {i} is outside (0, 1)")));
            }
            epsilon = epsilon.min(x);
        }
        let mut sorted = set.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite point"));
        for w in sorted.windows(2) {
            let gap = w[1] - w[0];
            if gap == 0.0 {
                return Err(Error::DegenerateInput(format!("set {i} repeats the point {}", w[0])));
            }
            epsilon = epsilon.min(gap);
        }
    }
    let sup = 0.5f64.min(1.0 / (1.0 + epsilon));
    let delta = match delta_hint {
        Some(h) if h > 0.0 && h < sup => h,
        _ => 0.9 * sup,
    };
    Ok((epsilon, delta))
}

fn cross_set_gap(sets: &[Vec<f64>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            for x in a {
                for y in b {
                    let g = (x - y).abs();
                    best = Some(best.map_or(g, |v| v.min(g)));
                }
            }
        }
    }
    best
}

/// `((1/2)(2/εδ)^i, (2/εδ)^i)` for `i = 1, …, d`.
pub fn design_intervals(epsilon: f64, delta: f64, d: usize) -> Result<Vec<(f64, f64)>> {
    let base = 2.0 / (epsilon * delta);
    (1..=d)
        .map(|i| {
            let hi = base.powi(i as i32);
            // beyond 2^53 the unit-scale separations are below the spacing of f64
            if !hi.is_finite() || hi > 2f64.powi(53) {
                return Err(Error::Magnitude { magnitude: hi });
            }
            Ok((0.5 * hi, hi))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    /// `None` when there is at most one selection.
    pub min_gap: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
    pub selections: u64,
}

/// Compare all pairs of selection sums by brute force.
pub fn verify_separation(sets: &[Vec<f64>], a: &[f64], delta: f64) -> Result<SeparationCheck> {
    if sets.len() != a.len() {
        return Err(Error::DegenerateInput(format!(
            "{} sets but {} coefficients",
            sets.len(),
            a.len()
        )));
    }
    let count: u128 = sets.iter().map(|s| s.len() as u128).product();
    let pairs = count * count.saturating_sub(1) / 2;
    if pairs > PAIR_CAP {
        return Err(Error::CombinatorialLimit { count: pairs, cap: PAIR_CAP });
    }
    let sums: Vec<f64> = (0..count as u64)
        .map(|mut idx| {
            let mut f = 0.0;
            for (set, coef) in sets.iter().zip(a).rev() {
                let n = set.len() as u64;
                f += coef * set[(idx % n) as usize];
                idx /= n;
            }
            f
        })
        .collect();
    let min_gap = (0..sums.len())
        .into_par_iter()
        .filter_map(|i| {
            sums[i + 1..]
                .iter()
                .map(|s| (s - sums[i]).abs())
                .reduce(f64::min)
        })
        .reduce_with(f64::min);
    let threshold = 1.0 / delta;
    Ok(SeparationCheck {
        min_gap,
        threshold,
        passed: min_gap.map_or(true, |g| g > threshold),
        selections: count as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_systems() {
        let s = sine_system(&[2, 4, 1]);
        assert_eq!(s[0].len(), 1);
        assert!((s[0][0] - 0.25).abs() < 1e-15);
        assert!((s[1][0] - 0.0690983).abs() < 1e-7);
        assert!((s[1][1] - 0.1809017).abs() < 1e-7);
        assert!((s[2][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn epsilon_and_delta() {
        let sets = vec![vec![0.3, 0.7], vec![0.4, 0.9]];
        let (eps, delta) = epsilon_delta(&sets, Some(0.4)).unwrap();
        assert!((eps - 0.3).abs() < 1e-15);
        assert_eq!(delta, 0.4);
        let (eps, _) = epsilon_delta(&[vec![0.5]], None).unwrap();
        assert_eq!(eps, 0.5);
        let (_, delta) = epsilon_delta(&sets, Some(0.6)).unwrap();
        assert!((delta - 0.45).abs() < 1e-15);
        assert!(epsilon_delta(&[vec![0.2, 0.2]], None).is_err());
    }

    #[test]
    fn intervals() {
        let iv = design_intervals(0.3, 0.4, 2).unwrap();
        assert!((iv[0].0 - 25.0 / 3.0).abs() < 1e-12 && (iv[0].1 - 50.0 / 3.0).abs() < 1e-12);
        assert!((iv[1].0 - 1250.0 / 9.0).abs() < 1e-9 && (iv[1].1 - 2500.0 / 9.0).abs() < 1e-9);
        assert_eq!(design_intervals(0.5, 0.5, 1).unwrap(), vec![(4.0, 8.0)]);
        assert!(matches!(design_intervals(1e-6, 1e-6, 5), Err(Error::Magnitude { .. })));
    }

    #[test]
    fn brute_force_examples() {
        let sets = vec![vec![0.3, 0.7], vec![0.4, 0.9]];
        let ok = verify_separation(&sets, &[12.0, 200.0], 0.4).unwrap();
        assert!(ok.passed);
        assert!((ok.min_gap.unwrap() - 4.8).abs() < 1e-12);
        let bad = verify_separation(&sets, &[1.0, 1.0], 0.4).unwrap();
        assert!(!bad.passed);
        assert!((bad.min_gap.unwrap() - 0.1).abs() < 1e-12);
        let single = verify_separation(&[vec![0.5]], &[3.0], 0.4).unwrap();
        assert!(single.passed && single.min_gap.is_none());
    }
}
