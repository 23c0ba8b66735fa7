//! Finite-volume geometry of the block-constant Anderson model.
//!
//! The lattice `Z^d` is cut into boxes
//! `Λ(n) = {x : n_i l_i < x_i <= (n_i + 1) l_i}`; boxes with `|n_i| <= radius`
//! are materialized and every operator lives on their union with Dirichlet
//! truncation (hopping that leaves the volume is dropped). Sites are ordered
//! lexicographically, first coordinate most significant, so the restriction
//! to `Λ(0)` factorizes as a Kronecker product in the coordinate order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Site = Vec<i64>;

/// Integer label `n` of the box `Λ(n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoxIndex(pub Vec<i64>);

impl BoxIndex {
    pub fn origin(d: usize) -> Self {
        BoxIndex(vec![0; d])
    }

    /// `±e_direction`, with `direction` zero-based.
    pub fn unit(d: usize, direction: usize, positive: bool) -> Self {
        let mut n = vec![0; d];
        n[direction] = if positive { 1 } else { -1 };
        BoxIndex(n)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }
}

impl fmt::Display for BoxIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Caps protecting the dense representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeLimits {
    pub max_sites: usize,
    pub max_radius: usize,
}

impl Default for SizeLimits {
    fn default() -> Self {
        SizeLimits {
            max_sites: 4096,
            max_radius: 4,
        }
    }
}

/// Geometry container: box lengths, truncation radius and the site index.
#[derive(Clone, Debug)]
pub struct BoxPartition {
    lengths: Vec<usize>,
    radius: usize,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
}

impl BoxPartition {
    pub fn new(d: usize, lengths: &[usize], radius: usize) -> Result<Self> {
        Self::with_limits(d, lengths, radius, SizeLimits::default())
    }

    pub fn with_limits(
        d: usize,
        lengths: &[usize],
        radius: usize,
        limits: SizeLimits,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGeometry("dimension must be at least 1".into()));
        }
        if lengths.len() != d {
            return Err(Error::InvalidGeometry(format!(
                "expected {d} box lengths, got {}",
                lengths.len()
            )));
        }
        if let Some(i) = lengths.iter().position(|&l| l == 0) {
            return Err(Error::InvalidGeometry(format!(
                "box length {} is zero",
                i + 1
            )));
        }
        if radius > limits.max_radius {
            return Err(Error::RadiusLimit {
                radius,
                cap: limits.max_radius,
            });
        }
        let boxes_per_axis = 2 * radius as u128 + 1;
        let count = lengths
            .iter()
            .fold(1u128, |acc, &l| acc.saturating_mul(l as u128 * boxes_per_axis));
        if count > limits.max_sites as u128 {
            return Err(Error::SizeLimit {
                sites: count,
                cap: limits.max_sites,
            });
        }

        let ranges: Vec<(i64, i64)> = lengths
            .iter()
            .map(|&l| {
                let l = l as i64;
                let b = radius as i64;
                (-b * l + 1, (b + 1) * l)
            })
            .collect();
        let sites = lexicographic_grid(&ranges);
        let index = sites
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), k))
            .collect();
        Ok(BoxPartition {
            lengths: lengths.to_vec(),
            radius,
            sites,
            index,
        })
    }

    pub fn d(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// Number of sites in one box, `Π l_i`.
    pub fn box_volume(&self) -> usize {
        self.lengths.iter().product()
    }

    pub fn site_index(&self, site: &[i64]) -> Option<usize> {
        self.index.get(site).copied()
    }

    /// The box containing `site`.
    pub fn box_of(&self, site: &[i64]) -> BoxIndex {
        BoxIndex(
            site.iter()
                .zip(&self.lengths)
                .map(|(&x, &l)| (x - 1).div_euclid(l as i64))
                .collect(),
        )
    }

    pub fn contains_box(&self, n: &BoxIndex) -> bool {
        n.0.len() == self.d() && n.0.iter().all(|c| c.unsigned_abs() as usize <= self.radius)
    }

    /// All materialized boxes, lexicographic.
    pub fn boxes(&self) -> Vec<BoxIndex> {
        let b = self.radius as i64;
        lexicographic_grid(&vec![(-b, b); self.d()])
            .into_iter()
            .map(BoxIndex)
            .collect()
    }

    /// Sites of `Λ(n)`, lexicographic.
    pub fn box_sites(&self, n: &BoxIndex) -> Result<Vec<Site>> {
        if !self.contains_box(n) {
            return Err(Error::OutOfVolume { index: n.0.clone() });
        }
        let ranges: Vec<(i64, i64)> = n
            .0
            .iter()
            .zip(&self.lengths)
            .map(|(&c, &l)| {
                let l = l as i64;
                (c * l + 1, (c + 1) * l)
            })
            .collect();
        Ok(lexicographic_grid(&ranges))
    }

    /// Positions of the sites of `Λ(n)` in the global ordering (ascending).
    pub fn box_site_indices(&self, n: &BoxIndex) -> Result<Vec<usize>> {
        Ok(self
            .box_sites(n)?
            .iter()
            .map(|s| self.index[s])
            .collect())
    }

    /// Global positions of every site outside `Λ(0)`, ascending.
    pub fn complement_of_origin(&self) -> Vec<usize> {
        let origin = BoxIndex::origin(self.d());
        (0..self.site_count())
            .filter(|&k| self.box_of(&self.sites[k]) != origin)
            .collect()
    }
}

fn lexicographic_grid(ranges: &[(i64, i64)]) -> Vec<Site> {
    let mut out: Vec<Site> = vec![vec![]];
    for &(lo, hi) in ranges {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1).max(0) as usize);
        for prefix in &out {
            for x in lo..=hi {
                let mut s = prefix.clone();
                s.push(x);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

/// i.i.d. box potentials `ω_n`, uniform on `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSample {
    pub values: BTreeMap<BoxIndex, f64>,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

impl DisorderSample {
    /// Draw one value per materialized box in lexicographic box order from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn uniform(partition: &BoxPartition, lower: f64, upper: f64, seed: u64) -> Self {
        assert!(lower <= upper, "empty disorder interval");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(lower, upper);
        let values = partition
            .boxes()
            .into_iter()
            .map(|n| (n, dist.sample(&mut rng)))
            .collect();
        DisorderSample {
            values,
            lower,
            upper,
            seed,
        }
    }

    /// Same value on every box.
    pub fn constant(partition: &BoxPartition, value: f64) -> Self {
        DisorderSample {
            values: partition.boxes().into_iter().map(|n| (n, value)).collect(),
            lower: value,
            upper: value,
            seed: 0,
        }
    }

    pub fn get(&self, n: &BoxIndex) -> Option<f64> {
        self.values.get(n).copied()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `ω_{-e_i}` and `ω_{e_i}` for each direction.
    pub fn neighbor_values(&self, d: usize) -> Result<Vec<(f64, f64)>> {
        (0..d)
            .map(|i| {
                let minus = BoxIndex::unit(d, i, false);
                let plus = BoxIndex::unit(d, i, true);
                let a = self.get(&minus).ok_or(Error::IncompleteSample { missing: minus.0 })?;
                let b = self.get(&plus).ok_or(Error::IncompleteSample { missing: plus.0 })?;
                Ok((a, b))
            })
            .collect()
    }
}

/// A real symmetric matrix on the enumerated sites.
#[derive(Clone, Debug)]
pub struct LatticeOperator {
    pub sites: Vec<Site>,
    pub matrix: DMatrix<f64>,
}

impl LatticeOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Bitwise symmetry.
    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| self.matrix[(i, j)].to_bits() == self.matrix[(j, i)].to_bits()))
    }
}

/// Nearest-neighbour adjacency with integer entries.
pub fn laplacian_integer(partition: &BoxPartition) -> DMatrix<i64> {
    let n = partition.site_count();
    let mut m = DMatrix::<i64>::zeros(n, n);
    for (k, site) in partition.sites().iter().enumerate() {
        for axis in 0..partition.d() {
            let mut nb = site.clone();
            nb[axis] += 1;
            if let Some(j) = partition.site_index(&nb) {
                m[(k, j)] = 1;
                m[(j, k)] = 1;
            }
        }
    }
    m
}

/// Rows `rows`, columns `cols` of the adjacency, without the full matrix.
pub fn laplacian_block(partition: &BoxPartition, rows: &[usize], cols: &[usize]) -> DMatrix<i64> {
    let sites = partition.sites();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let dist: i64 = sites[rows[i]]
            .iter()
            .zip(&sites[cols[j]])
            .map(|(a, b)| (a - b).abs())
            .sum();
        i64::from(dist == 1)
    })
}

/// The discrete Laplacian `Δ` (adjacency form, no diagonal) with
/// Dirichlet truncation.
pub fn build_laplacian(partition: &BoxPartition) -> LatticeOperator {
    LatticeOperator {
        sites: partition.sites().to_vec(),
        matrix: laplacian_integer(partition).map(|v| v as f64),
    }
}

/// `H = Δ + Σ ω_n P_n + Σ λ_i P_{e_i}`. `boosts` is empty or holds one `λ_i`
/// per direction.
pub fn build_hamiltonian(
    partition: &BoxPartition,
    disorder: &DisorderSample,
    boosts: &[f64],
) -> Result<LatticeOperator> {
    let d = partition.d();
    if !boosts.is_empty() && boosts.len() != d {
        return Err(Error::InvalidGeometry(format!(
            "expected {d} boosts, got {}",
            boosts.len()
        )));
    }
    let mut op = build_laplacian(partition);
    for (k, site) in partition.sites().iter().enumerate() {
        let n = partition.box_of(site);
        let mut v = disorder
            .get(&n)
            .ok_or_else(|| Error::IncompleteSample { missing: n.0.clone() })?;
        if n.l1_norm() == 1 {
            if let Some(axis) = n.0.iter().position(|&c| c == 1) {
                if let Some(lambda) = boosts.get(axis) {
                    v += lambda;
                }
            }
        }
        op.matrix[(k, k)] = v;
    }
    Ok(op)
}

/// Diagonal 0/1 projection `P_n` on the full volume.
pub fn projection_integer(partition: &BoxPartition, n: &BoxIndex) -> Result<DMatrix<i64>> {
    let idx = partition.box_site_indices(n)?;
    let mut m = DMatrix::<i64>::zeros(partition.site_count(), partition.site_count());
    for k in idx {
        m[(k, k)] = 1;
    }
    Ok(m)
}

/// Rows `rows` and columns `cols` of `m`.
pub fn submatrix<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// The triple product `P_0 Δ P_{±e_i} Δ P_0` on `Λ(0)` together with the
/// indicator of the face it should project onto.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceProduct {
    pub product: DMatrix<i64>,
    pub indicator: DMatrix<i64>,
}

impl FaceProduct {
    pub fn matches(&self) -> bool {
        self.product == self.indicator
    }
}

/// Sites of `Λ(0)` on the face `x_i = l_i` (`positive`) or `x_i = 1`.
fn face_indicator(partition: &BoxPartition, direction: usize, positive: bool) -> DMatrix<i64> {
    let origin = partition.box_sites(&BoxIndex::origin(partition.d())).expect("origin box");
    let target = if positive {
        partition.lengths()[direction] as i64
    } else {
        1
    };
    DMatrix::from_fn(origin.len(), origin.len(), |i, j| {
        i64::from(i == j && origin[i][direction] == target)
    })
}

pub fn face_product(
    partition: &BoxPartition,
    direction: usize,
    positive: bool,
) -> Result<FaceProduct> {
    let d = partition.d();
    if direction >= d {
        return Err(Error::InvalidGeometry(format!(
            "direction {} out of range for d = {d}",
            direction + 1
        )));
    }
    let neighbor = BoxIndex::unit(d, direction, positive);
    let neighbor_idx = partition.box_site_indices(&neighbor)?;
    let origin_idx = partition.box_site_indices(&BoxIndex::origin(d))?;
    let down = laplacian_block(partition, &neighbor_idx, &origin_idx);
    let up = down.transpose();
    Ok(FaceProduct {
        product: up * down,
        indicator: face_indicator(partition, direction, positive),
    })
}

/// `P_0 Δ (I - P_0) Δ P_0` on `Λ(0)`.
pub fn off_box_coupling(partition: &BoxPartition) -> DMatrix<i64> {
    let origin_idx = partition
        .box_site_indices(&BoxIndex::origin(partition.d()))
        .expect("origin box");
    let rest = partition.complement_of_origin();
    let b = laplacian_block(partition, &rest, &origin_idx);
    b.transpose() * b
}

/// `Σ_n P_n` over the materialized boxes; equals the identity.
pub fn projection_sum(partition: &BoxPartition) -> DMatrix<i64> {
    let n = partition.site_count();
    let mut acc = DMatrix::<i64>::zeros(n, n);
    for b in partition.boxes() {
        for k in partition.box_site_indices(&b).expect("materialized box") {
            acc[(k, k)] += 1;
        }
    }
    acc
}
