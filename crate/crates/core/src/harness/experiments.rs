use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DisorderSettings, ExperimentConfig, Geometry, Precision};
use crate::cluster::{
    admissibility, classify_pair, degeneracy_clusters, labelled_spectrum, match_spectrum,
    min_nonzero_gaps, mode_tuples, predicted_clusters, required_gaps, ClusterInput, PairClass,
};
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, BoxIndex, BoxPartition, DisorderSample, LatticeOperator};
use crate::linalg::{symmetric_eigenvalues, DoubleDouble};
use crate::resolvent::{precision_guard, rank_perturbed_block, schur_reduced_in, ResolventSolver};
use crate::tridiag::log_log_slope;

pub fn partition(geometry: &Geometry) -> Result<BoxPartition> {
    BoxPartition::new(geometry.d, &geometry.lengths, geometry.radius)
}

/// Sample number `index`, seeded with `base_seed + index`.
pub fn sample_disorder(partition: &BoxPartition, settings: &DisorderSettings, index: usize) -> DisorderSample {
    DisorderSample::uniform(
        partition,
        settings.lower,
        settings.upper,
        settings.base_seed.wrapping_add(index as u64),
    )
}

/// Ascending eigenvalues of `r² H_r`.
#[derive(Clone, Debug)]
pub struct ReducedSpectrum {
    pub values: Vec<f64>,
    pub extended: bool,
}

fn reduced_eigenvalues_in<T: crate::linalg::Real>(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
) -> Result<Vec<f64>> {
    let reduced = schur_reduced_in::<T>(partition, disorder, boosts, r)?;
    Ok(symmetric_eigenvalues(&reduced.scaled())?
        .into_iter()
        .map(|v| v.to_f64())
        .collect())
}

/// Spectrum of `r² H_r`, recomputed in double-double when `precision` asks
/// for it or when `quantity` of the `f64` result falls under the precision
/// guard.
pub fn reduced_spectrum(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
    precision: Precision,
    quantity: impl Fn(&[f64]) -> f64,
) -> Result<ReducedSpectrum> {
    if precision == Precision::Standard {
        let values = reduced_eigenvalues_in::<f64>(partition, disorder, boosts, r)?;
        match precision_guard(r, quantity(&values)) {
            None => return Ok(ReducedSpectrum { values, extended: false }),
            Some(w) => log::info!(
                "r = {r}: quantity {:e} under the f64 floor {:e}, switching to double-double",
                w.quantity,
                w.floor
            ),
        }
    }
    Ok(ReducedSpectrum {
        values: reduced_eigenvalues_in::<DoubleDouble>(partition, disorder, boosts, r)?,
        extended: true,
    })
}

/// Smallest gap between consecutive sorted values.
pub fn min_spacing(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite value"));
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityRow {
    pub seed: u64,
    pub r: f64,
    /// cluster size → number of clusters of that size
    pub histogram: BTreeMap<usize, usize>,
    pub max_multiplicity: usize,
    pub extended: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityProfile {
    pub lengths: Vec<usize>,
    pub bound: u64,
    pub simple: bool,
    pub rows: Vec<MultiplicityRow>,
    pub failures: Vec<String>,
}

/// Cluster the spectrum of `r² H_r` for every (seed, r) and check the
/// multiplicity bound.
pub fn multiplicity_scan(config: &ExperimentConfig) -> Result<MultiplicityProfile> {
    let geometry = config.geometry()?;
    if geometry.radius < 2 {
        return Err(config.error("geometry.radius", "multiplicity scans need radius at least 2"));
    }
    let settings = config.disorder()?;
    let rs = config.r_values()?;
    let boosts = config.lambda(&geometry.lengths)?;
    let tol = config.degeneracy_tolerance()?;
    let precision = config.precision()?;
    let part = partition(&geometry)?;
    let adm = admissibility(&geometry.lengths);
    let volume: usize = geometry.lengths.iter().product();
    let r_max = rs.iter().copied().fold(f64::MIN, f64::max);

    let cells: Vec<(usize, f64)> = (0..settings.seeds)
        .flat_map(|i| rs.iter().map(move |&r| (i, r)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(i, r)| {
            let disorder = sample_disorder(&part, &settings, i);
            let spectrum = reduced_spectrum(&part, &disorder, &boosts, r, precision, |v| {
                let lo = v.first().copied().unwrap_or(0.0);
                let hi = v.last().copied().unwrap_or(0.0);
                tol * (hi - lo).max(1.0)
            })?;
            let sizes = degeneracy_clusters(&spectrum.values, tol);
            let mut histogram = BTreeMap::new();
            for &s in &sizes {
                *histogram.entry(s).or_insert(0) += 1;
            }
            Ok(MultiplicityRow {
                seed: disorder.seed,
                r,
                max_multiplicity: sizes.iter().copied().max().unwrap_or(0),
                histogram,
                extended: spectrum.extended,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut failures = Vec::new();
    for row in &rows {
        let tuple = format!(
            "lengths={:?} radius={} seed={} r={} lambda={:?} tol={tol}",
            geometry.lengths, geometry.radius, row.seed, row.r, boosts
        );
        let total: usize = row.histogram.iter().map(|(s, c)| s * c).sum();
        if total != volume {
            failures.push(format!("{tuple}: histogram counts {total} eigenvalues, expected {volume}"));
        }
        if adm.s >= 2 && row.max_multiplicity as u64 > (1u64 << adm.s) - adm.s as u64 {
            failures.push(format!(
                "{tuple}: max multiplicity {} exceeds 2^s - s = {}",
                row.max_multiplicity,
                (1u64 << adm.s) - adm.s as u64
            ));
        }
        if adm.simple && row.r == r_max && row.max_multiplicity != 1 {
            failures.push(format!(
                "{tuple}: admissible lengths but max multiplicity {}",
                row.max_multiplicity
            ));
        }
    }
    Ok(MultiplicityProfile {
        lengths: geometry.lengths,
        bound: adm.bound,
        simple: adm.simple,
        rows,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstancyCell {
    pub z: f64,
    pub lambda: f64,
    /// `None` when `z` lies too close to the spectrum.
    pub max_multiplicity: Option<usize>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstancyReport {
    pub boosted_box: Vec<i64>,
    pub cells: Vec<ConstancyCell>,
    pub constant: bool,
    pub value: Option<usize>,
}

/// Largest eigenvalue multiplicity of a symmetric block; eigenvalues closer
/// than `tol · ‖block‖` count as equal.
pub fn block_multiplicity(block: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let sym = (block + block.transpose()) * 0.5;
    let values = symmetric_eigenvalues(&sym)?;
    let norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau = tol * norm;
    let mut best = 1;
    let mut run = 1;
    for w in values.windows(2) {
        if w[1] - w[0] <= tau {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    Ok(if values.is_empty() { 0 } else { best })
}

fn distance_to_spectrum(h: &LatticeOperator, part: &BoxPartition, n: &BoxIndex, lambda: f64, z: f64) -> Result<f64> {
    let mut m = h.matrix.clone();
    for k in part.box_site_indices(n)? {
        m[(k, k)] += lambda;
    }
    Ok(symmetric_eigenvalues(&m)?
        .into_iter()
        .map(|mu| (mu - z).abs())
        .fold(f64::INFINITY, f64::min))
}

/// Max multiplicity of `G^λ_00(z)` after adding `λ P_n`, over a `(z, λ)` grid.
pub fn constancy_scan(config: &ExperimentConfig, n: &BoxIndex) -> Result<ConstancyReport> {
    let geometry = config.geometry()?;
    let settings = config.disorder()?;
    let tol = config.constancy_tolerance()?;
    let zs: Vec<f64> = config.list_or("constancy.z", vec![30.0, 37.5, 45.0, 52.5, 60.0])?;
    let lambdas: Vec<f64> = config.list_or("constancy.lambda", vec![0.0, 1.0, 2.5])?;
    let part = partition(&geometry)?;
    if !part.contains_box(n) {
        return Err(config.error("constancy.box", format!("box {n} lies outside the volume")));
    }
    let disorder = sample_disorder(&part, &settings, 0);
    let h = build_hamiltonian(&part, &disorder, &[])?;
    let origin = BoxIndex::origin(geometry.d);

    let cells = zs
        .par_iter()
        .map(|&z| -> Result<Vec<ConstancyCell>> {
            let solver = match ResolventSolver::new(&h, &part, z) {
                Ok(s) => s,
                Err(Error::SpectralProximity { detail, .. }) => {
                    return Ok(lambdas
                        .iter()
                        .map(|&lambda| ConstancyCell { z, lambda, max_multiplicity: None, note: detail.clone() })
                        .collect())
                }
                Err(e) => return Err(e),
            };
            let blocks = (|| -> Result<_> {
                Ok((
                    solver.block(&origin, &origin)?.block,
                    solver.block(&origin, n)?.block,
                    solver.block(n, n)?.block,
                    solver.block(n, &origin)?.block,
                ))
            })();
            let (g00, g0n, gnn, gn0) = match blocks {
                Ok(b) => b,
                Err(Error::SpectralProximity { detail, .. }) => {
                    return Ok(lambdas
                        .iter()
                        .map(|&lambda| ConstancyCell { z, lambda, max_multiplicity: None, note: detail.clone() })
                        .collect())
                }
                Err(e) => return Err(e),
            };
            lambdas
                .iter()
                .map(|&lambda| {
                    let dist = distance_to_spectrum(&h, &part, n, lambda, z)?;
                    if dist < 1e-6 * z.abs().max(1.0) {
                        return Ok(ConstancyCell {
                            z,
                            lambda,
                            max_multiplicity: None,
                            note: format!("z within {dist:e} of the spectrum"),
                        });
                    }
                    let g = rank_perturbed_block(&g00, &g0n, &gnn, &gn0, lambda)?;
                    Ok(ConstancyCell {
                        z,
                        lambda,
                        max_multiplicity: Some(block_multiplicity(&g, tol)?),
                        note: String::new(),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();

    let mut values = cells.iter().filter_map(|c| c.max_multiplicity);
    let first = values.next();
    let constant = first.is_some() && values.all(|v| Some(v) == first);
    Ok(ConstancyReport {
        boosted_box: n.0.clone(),
        cells,
        constant,
        value: if constant { first } else { None },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank: usize,
    pub expected: usize,
    pub passed: bool,
    pub singular_values: Vec<f64>,
}

/// Graph diameter of the truncated volume.
pub fn lattice_diameter(part: &BoxPartition) -> usize {
    part.lengths()
        .iter()
        .map(|&l| (2 * part.radius() + 1) * l - 1)
        .sum()
}

/// Numerical rank of `[P_m H^0 P_n | P_m H^1 P_n | … | P_m H^K P_n]`, each
/// block scaled to unit Frobenius norm, against `rank P_m`.
pub fn cyclic_rank_check(
    h: &LatticeOperator,
    part: &BoxPartition,
    n: &BoxIndex,
    m: &BoxIndex,
    k: usize,
) -> Result<RankResult> {
    let cols = part.box_site_indices(n)?;
    let rows = part.box_site_indices(m)?;
    let dim = h.dim();
    let mut x = DMatrix::<f64>::zeros(dim, cols.len());
    for (c, &s) in cols.iter().enumerate() {
        x[(s, c)] = 1.0;
    }
    let mut stacked = DMatrix::<f64>::zeros(rows.len(), (k + 1) * cols.len());
    for step in 0..=k {
        if step > 0 {
            x = &h.matrix * &x;
            let norm = x.norm();
            if norm > 0.0 {
                x /= norm;
            }
        }
        let mut block = DMatrix::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], j)]);
        let norm = block.norm();
        if norm > 0.0 {
            block /= norm;
        }
        stacked
            .view_mut((0, step * cols.len()), (rows.len(), cols.len()))
            .copy_from(&block);
    }
    let mut singular_values: Vec<f64> = stacked.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular value"));
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > 1e-8 * largest).count();
    Ok(RankResult {
        rank,
        expected: rows.len(),
        passed: rank == rows.len(),
        singular_values,
    })
}

/// Which gaps a growth probe follows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSpec {
    /// One pair of mode tuples.
    Pair(Vec<usize>, Vec<usize>),
    /// The smallest gap over all pairs.
    MinOverAll,
    /// Per class: the smallest gap of separated classes, the largest of the
    /// others.
    ByClass,
}

impl PairSpec {
    /// `min`, `class`, or `n1,n2;m1,m2`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "min" => Some(Self::MinOverAll),
            "class" => Some(Self::ByClass),
            other => {
                let (a, b) = other.split_once(';')?;
                let parse = |t: &str| -> Option<Vec<usize>> {
                    t.split(',').map(|x| x.trim().parse().ok()).collect()
                };
                Some(Self::Pair(parse(a)?, parse(b)?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub seed: u64,
    pub r: f64,
    pub label: String,
    pub class: Option<PairClass>,
    pub gap: f64,
    pub floor: f64,
    pub extended: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub seed: u64,
    pub label: String,
    pub class: Option<PairClass>,
    /// `None` when fewer than two gaps sit above the precision floor.
    pub slope: Option<f64>,
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapGrowthReport {
    pub rows: Vec<GrowthRow>,
    pub fits: Vec<GrowthFit>,
    pub failures: Vec<String>,
}

fn slope_verdict(class: Option<PairClass>, slope: Option<f64>, min_over_all: bool) -> Option<bool> {
    if min_over_all {
        return Some(slope.is_some_and(|s| s >= 0.8));
    }
    match class? {
        PairClass::CosSeparated => Some(slope.is_some_and(|s| s >= 1.8)),
        PairClass::SineSeparated => Some(slope.is_some_and(|s| (0.8..=1.2).contains(&s))),
        // floor-limited gaps are bounded by definition
        PairClass::SameCluster => Some(slope.map_or(true, |s| s <= 0.1)),
        PairClass::PotentialSeparated => None,
    }
}

/// Follow gaps of `r² H_r` across the configured `r` values and fit their
/// growth exponents.
pub fn gap_growth_probe(config: &ExperimentConfig, spec: &PairSpec) -> Result<GapGrowthReport> {
    let geometry = config.geometry()?;
    let settings = config.disorder()?;
    let rs = config.r_values()?;
    let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rs.iter().copied().fold(0.0, f64::max);
    if rs.len() < 2 || hi < 8.0 * lo {
        return Err(config.error("run.r", "growth fits need r values spanning a factor of at least 8"));
    }
    let boosts = config.lambda(&geometry.lengths)?;
    let precision = config.precision()?;
    let margin = config.margin()?;
    let part = partition(&geometry)?;
    let lengths = geometry.lengths.clone();
    let tuples = mode_tuples(&lengths)?;
    if let PairSpec::Pair(a, b) = spec {
        classify_pair(a, b, &lengths)?;
    }
    let constants = min_nonzero_gaps(&lengths)?;

    let cells: Vec<(usize, f64)> = (0..settings.seeds)
        .flat_map(|i| rs.iter().map(move |&r| (i, r)))
        .collect();
    let per_cell = cells
        .par_iter()
        .map(|&(i, r)| -> Result<Vec<GrowthRow>> {
            let disorder = sample_disorder(&part, &settings, i);
            let input = ClusterInput::new(&lengths, &disorder.neighbor_values(geometry.d)?, &boosts, r)?;
            let predictions = predicted_clusters(&input)?;
            let (cos_req, sine_req) = required_gaps(&constants, r, margin);
            let resolution = [cos_req, sine_req].into_iter().flatten().fold(f64::INFINITY, f64::min);
            let measure = |values: &[f64]| -> Result<Vec<(String, Option<PairClass>, f64)>> {
                let matched = match_spectrum(values, &predictions, resolution)?;
                let energy: BTreeMap<&[usize], f64> = matched
                    .iter()
                    .map(|p| (p.modes.as_slice(), p.matched_exact.unwrap_or(f64::NAN)))
                    .collect();
                pair_gaps(spec, &tuples, &lengths, &energy)
            };
            let spectrum = reduced_spectrum(&part, &disorder, &boosts, r, precision, |v| {
                measure(v)
                    .map(|gaps| gaps.iter().map(|g| g.2).fold(f64::INFINITY, f64::min))
                    .unwrap_or(0.0)
            })?;
            let floor = r * r * if spectrum.extended { DoubleDouble::EPSILON } else { f64::EPSILON };
            Ok(measure(&spectrum.values)?
                .into_iter()
                .map(|(label, class, gap)| GrowthRow {
                    seed: disorder.seed,
                    r,
                    label,
                    class,
                    gap,
                    floor,
                    extended: spectrum.extended,
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<GrowthRow> = per_cell.into_iter().flatten().collect();

    let mut series: BTreeMap<(u64, String), (Option<PairClass>, Vec<(f64, f64)>)> = BTreeMap::new();
    for row in &rows {
        let entry = series
            .entry((row.seed, row.label.clone()))
            .or_insert((row.class, Vec::new()));
        if row.gap > row.floor {
            entry.1.push((row.r, row.gap));
        }
    }
    let min_over_all = matches!(spec, PairSpec::MinOverAll);
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for ((seed, label), (class, points)) in series {
        let slope = (points.len() >= 2).then(|| log_log_slope(&points));
        let passed = slope_verdict(class, slope, min_over_all);
        if passed == Some(false) {
            failures.push(format!(
                "lengths={lengths:?} radius={} seed={seed} r={rs:?} lambda={boosts:?} pair={label}: slope {slope:?} outside the {} range",
                geometry.radius,
                class.map_or("min-pair", |c| c.as_str())
            ));
        }
        fits.push(GrowthFit { seed, label, class, slope, passed });
    }
    Ok(GapGrowthReport { rows, fits, failures })
}

fn tuple_label(t: &[usize]) -> String {
    t.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

fn pair_gaps(
    spec: &PairSpec,
    tuples: &[Vec<usize>],
    lengths: &[usize],
    energy: &BTreeMap<&[usize], f64>,
) -> Result<Vec<(String, Option<PairClass>, f64)>> {
    match spec {
        PairSpec::Pair(a, b) => {
            let class = classify_pair(a, b, lengths)?;
            let gap = (energy[a.as_slice()] - energy[b.as_slice()]).abs();
            Ok(vec![(format!("{};{}", tuple_label(a), tuple_label(b)), Some(class), gap)])
        }
        PairSpec::MinOverAll => {
            let values: Vec<f64> = energy.values().copied().collect();
            Ok(vec![("min".to_string(), None, min_spacing(&values))])
        }
        PairSpec::ByClass => {
            let mut by_class: BTreeMap<PairClass, f64> = BTreeMap::new();
            for (i, a) in tuples.iter().enumerate() {
                for b in &tuples[i + 1..] {
                    let class = classify_pair(a, b, lengths)?;
                    let gap = (energy[a.as_slice()] - energy[b.as_slice()]).abs();
                    let slot = by_class.entry(class).or_insert(match class {
                        PairClass::CosSeparated | PairClass::SineSeparated => f64::INFINITY,
                        _ => 0.0,
                    });
                    *slot = match class {
                        PairClass::CosSeparated | PairClass::SineSeparated => slot.min(gap),
                        _ => slot.max(gap),
                    };
                }
            }
            Ok(by_class
                .into_iter()
                .map(|(c, g)| (c.as_str().to_string(), Some(c), g))
                .collect())
        }
    }
}

/// Labelled `A_r` spectrum for one disorder sample.
pub fn leading_spectrum(
    part: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
    r: f64,
) -> Result<Vec<f64>> {
    let input = ClusterInput::new(part.lengths(), &disorder.neighbor_values(part.d())?, boosts, r)?;
    Ok(labelled_spectrum(&input)?.into_iter().map(|x| x.1).collect())
}

/// Draw coefficients uniformly from the open design intervals.
pub fn draw_coefficients(intervals: &[(f64, f64)], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    intervals
        .iter()
        .map(|&(lo, hi)| {
            let mut x = Uniform::new(lo, hi).sample(&mut rng);
            while x <= lo {
                x = Uniform::new(lo, hi).sample(&mut rng);
            }
            x
        })
        .collect()
}
