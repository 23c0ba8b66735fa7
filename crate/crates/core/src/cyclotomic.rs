//! Exact arithmetic in `ℚ(ζ_m)` and exact zero tests for sums of cosines of
//! rational multiples of `π`.
//!
//! An element is a rational polynomial in `ζ = e^{2πi/m}` reduced modulo the
//! cyclotomic polynomial `Φ_m`. `cos(πn/p)` with `p | P` lives in
//! `ℚ(ζ_{2P})` as `(ζ^k + ζ^{-k})/2`, `k = nP/p`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulus.
pub const MODULUS_CAP: u64 = 10_000;

/// Largest tuple count scanned by [`scan_cos_sums`].
pub const TUPLE_CAP: u128 = 100_000;

/// Euler's totient by trial division.
pub fn euler_phi(m: u64) -> u64 {
    let mut n = m;
    let mut result = m;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

fn check_modulus(m: u64) -> Result<()> {
    if m == 0 || m > MODULUS_CAP {
        return Err(Error::ModulusRange { m, cap: MODULUS_CAP });
    }
    Ok(())
}

fn divisors(m: u64) -> Vec<u64> {
    (1..=m).filter(|d| m % d == 0).collect()
}

/// `Φ_m` as ascending integer coefficients, computed by removing `Φ_d` for
/// every proper divisor `d` from `x^m - 1`. The quotient is taken in the
/// grouped form `Π_{d|m} (x^d - 1)^{μ(m/d)}`, which divides by binomials
/// only.
pub fn cyclotomic_polynomial(m: u64) -> Result<Vec<BigInt>> {
    check_modulus(m)?;
    Ok(compute_cyclotomic(m))
}

fn mobius(n: u64) -> i8 {
    let mut n = n;
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

fn compute_cyclotomic(m: u64) -> Vec<BigInt> {
    let mut num = vec![BigInt::one()];
    let mut den = Vec::new();
    for d in divisors(m) {
        match mobius(m / d) {
            1 => num = times_binomial(&num, d as usize),
            -1 => den.push(d as usize),
            _ => {}
        }
    }
    for d in den {
        num = over_binomial(&num, d);
    }
    num
}

/// `p · (x^d - 1)`.
fn times_binomial(p: &[BigInt], d: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); p.len() + d];
    for (k, c) in p.iter().enumerate() {
        out[k + d] += c;
        out[k] -= c;
    }
    out
}

/// `p / (x^d - 1)`, exact.
fn over_binomial(p: &[BigInt], d: usize) -> Vec<BigInt> {
    let n = p.len() - 1;
    let mut rem = p.to_vec();
    let mut q = vec![BigInt::zero(); n + 1 - d];
    for k in (d..=n).rev() {
        let c = rem[k].clone();
        q[k - d] = c.clone();
        rem[k - d] += &c;
        rem[k] = BigInt::zero();
    }
    debug_assert!(rem.iter().all(Zero::is_zero), "inexact binomial division");
    q
}

/// `ℚ(ζ_m)` with the reduced powers `ζ^k`, `0 ≤ k < m`, precomputed.
#[derive(Debug)]
pub struct CyclotomicField {
    modulus: u64,
    degree: usize,
    poly: Vec<BigInt>,
    powers: Vec<Vec<BigInt>>,
}

impl CyclotomicField {
    fn build(m: u64) -> Self {
        let poly = compute_cyclotomic(m);
        let degree = poly.len() - 1;
        let mut powers = Vec::with_capacity(m as usize);
        let mut current = vec![BigInt::zero(); degree];
        if degree > 0 {
            current[0] = BigInt::one();
        }
        for _ in 0..m {
            powers.push(current.clone());
            // multiply by x, then eliminate x^degree using the monic Φ_m
            let top = current.pop().unwrap_or_default();
            current.insert(0, BigInt::zero());
            if !top.is_zero() {
                for (c, p) in current.iter_mut().zip(&poly) {
                    *c -= &top * p;
                }
            }
        }
        CyclotomicField {
            modulus: m,
            degree,
            poly,
            powers,
        }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `Φ_m`, ascending coefficients.
    pub fn polynomial(&self) -> &[BigInt] {
        &self.poly
    }

    fn power(&self, k: u64) -> &[BigInt] {
        &self.powers[(k % self.modulus) as usize]
    }
}

type FieldCache = Mutex<HashMap<u64, Arc<CyclotomicField>>>;

fn cache() -> &'static FieldCache {
    static CACHE: OnceLock<FieldCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The shared field `ℚ(ζ_m)`.
pub fn field(m: u64) -> Result<Arc<CyclotomicField>> {
    check_modulus(m)?;
    if let Some(f) = cache().lock().expect("field cache poisoned").get(&m) {
        return Ok(Arc::clone(f));
    }
    let built = Arc::new(CyclotomicField::build(m));
    let mut guard = cache().lock().expect("field cache poisoned");
    Ok(Arc::clone(guard.entry(m).or_insert(built)))
}

#[derive(Clone)]
pub struct CyclotomicElement {
    field: Arc<CyclotomicField>,
    coeffs: Vec<BigRational>,
}

impl fmt::Debug for CyclotomicElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CyclotomicElement")
            .field("modulus", &self.field.modulus)
            .field("coeffs", &self.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for CyclotomicElement {
    fn eq(&self, other: &Self) -> bool {
        self.field.modulus == other.field.modulus && self.coeffs == other.coeffs
    }
}

impl CyclotomicElement {
    pub fn zero(field: &Arc<CyclotomicField>) -> Self {
        CyclotomicElement {
            field: Arc::clone(field),
            coeffs: vec![BigRational::zero(); field.degree],
        }
    }

    pub fn from_rational(field: &Arc<CyclotomicField>, q: BigRational) -> Self {
        let mut e = Self::zero(field);
        if field.degree > 0 {
            e.coeffs[0] = q;
        }
        e
    }

    /// `ζ^k`.
    pub fn root_power(field: &Arc<CyclotomicField>, k: u64) -> Self {
        CyclotomicElement {
            field: Arc::clone(field),
            coeffs: field
                .power(k)
                .iter()
                .map(|c| BigRational::from_integer(c.clone()))
                .collect(),
        }
    }

    pub fn modulus(&self) -> u64 {
        self.field.modulus
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        CyclotomicElement {
            field: Arc::clone(&self.field),
            coeffs: self.coeffs.iter().map(|c| c * q).collect(),
        }
    }

    /// The rational value when the element lies in `ℚ`.
    pub fn as_rational(&self) -> Option<BigRational> {
        self.coeffs[1..]
            .iter()
            .all(Zero::is_zero)
            .then(|| self.coeffs.first().cloned().unwrap_or_else(BigRational::zero))
    }

    /// Value at `ζ = e^{2πi/m}` as `(re, im)`.
    pub fn evaluate(&self) -> (f64, f64) {
        let m = self.field.modulus as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let c = c.to_f64().unwrap_or(f64::NAN);
            let t = 2.0 * std::f64::consts::PI * k as f64 / m;
            re += c * t.cos();
            im += c * t.sin();
        }
        (re, im)
    }

    fn same_field(&self, other: &Self) {
        assert_eq!(
            self.field.modulus, other.field.modulus,
            "elements of different cyclotomic fields"
        );
    }
}

impl Add for &CyclotomicElement {
    type Output = CyclotomicElement;
    fn add(self, rhs: Self) -> CyclotomicElement {
        self.same_field(rhs);
        CyclotomicElement {
            field: Arc::clone(&self.field),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CyclotomicElement {
    type Output = CyclotomicElement;
    fn sub(self, rhs: Self) -> CyclotomicElement {
        self.same_field(rhs);
        CyclotomicElement {
            field: Arc::clone(&self.field),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CyclotomicElement {
    type Output = CyclotomicElement;
    fn neg(self) -> CyclotomicElement {
        CyclotomicElement {
            field: Arc::clone(&self.field),
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &CyclotomicElement {
    type Output = CyclotomicElement;
    fn mul(self, rhs: Self) -> CyclotomicElement {
        self.same_field(rhs);
        let f = &self.field;
        let mut out = vec![BigRational::zero(); f.degree];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                let ab = a * b;
                for (o, p) in out.iter_mut().zip(f.power((i + j) as u64)) {
                    if !p.is_zero() {
                        *o += &ab * BigRational::from_integer(p.clone());
                    }
                }
            }
        }
        CyclotomicElement {
            field: Arc::clone(f),
            coeffs: out,
        }
    }
}

/// `cos(πn/p)` in `ℚ(ζ_{2P})`. `n` is taken modulo `2p`.
pub fn cos_as_element(n: u64, p: u64, big_p: u64) -> Result<CyclotomicElement> {
    if p == 0 || big_p % p != 0 {
        return Err(Error::Embedding { p, big_p });
    }
    let f = field(2 * big_p)?;
    Ok(cos_in_field(&f, n, p))
}

fn cos_in_field(f: &Arc<CyclotomicField>, n: u64, p: u64) -> CyclotomicElement {
    let m = f.modulus;
    let k = (n % (2 * p)) * (m / (2 * p));
    let coeffs = f
        .power(k)
        .iter()
        .zip(f.power(m - k))
        .map(|(a, b)| BigRational::new(a + b, BigInt::from(2)))
        .collect();
    CyclotomicElement {
        field: Arc::clone(f),
        coeffs,
    }
}

/// Exact test of `Σ cos(π n_i / p_i) = 0`, in `ℚ(ζ_{2P})`, `P = Π p_i`.
pub fn cos_sum_is_zero(ps: &[u64], ns: &[u64]) -> Result<bool> {
    if ps.len() != ns.len() {
        return Err(Error::DegenerateInput(format!(
            "{} moduli but {} numerators",
            ps.len(),
            ns.len()
        )));
    }
    let big_p = ps.iter().try_fold(1u64, |acc, &p| acc.checked_mul(p));
    let m = big_p.and_then(|p| p.checked_mul(2)).unwrap_or(u64::MAX);
    check_modulus(m)?;
    let f = field(m)?;
    let mut sum = CyclotomicElement::zero(&f);
    for (&p, &n) in ps.iter().zip(ns) {
        sum = &sum + &cos_in_field(&f, n, p);
    }
    Ok(sum.is_zero())
}

/// One term `q · cos(π n / p)` of a [`cos_combination_is_zero`] query.
#[derive(Clone, Debug)]
pub struct CosTerm {
    pub coefficient: BigRational,
    pub n: u64,
    pub p: u64,
}

/// Exact test of `constant + Σ q_j cos(π n_j / p_j) = 0` in `ℚ(ζ_{2L})`,
/// `L = lcm(p_j)`.
pub fn cos_combination_is_zero(constant: &BigRational, terms: &[CosTerm]) -> Result<bool> {
    let lcm = terms.iter().fold(1u64, |acc, t| acc.lcm(&t.p));
    let m = lcm.checked_mul(2).unwrap_or(u64::MAX);
    check_modulus(m)?;
    let f = field(m)?;
    let mut sum = CyclotomicElement::from_rational(&f, constant.clone());
    for t in terms {
        if t.coefficient.is_zero() {
            continue;
        }
        sum = &sum + &cos_in_field(&f, t.n, t.p).scale(&t.coefficient);
    }
    Ok(sum.is_zero())
}

/// Outcome of an exhaustive scan over `1 ≤ n_i < p_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosSumScan {
    pub ps: Vec<u64>,
    pub admissible: bool,
    pub reasons: Vec<String>,
    pub tuples: u64,
    pub zeros: u64,
    /// Vanishing tuples in lexicographic order.
    pub witnesses: Vec<Vec<u64>>,
}

/// Reasons `ps` falls outside "pairwise coprime, each in ℕ∖(2ℕ∪3ℕ∪{1})".
pub fn admissibility_reasons(ps: &[u64]) -> Vec<String> {
    let mut reasons = Vec::new();
    for &p in ps {
        if p == 1 {
            reasons.push("1 is excluded".to_string());
        } else if p % 2 == 0 {
            reasons.push(format!("{p} is even"));
        } else if p % 3 == 0 {
            reasons.push(format!("{p} is a multiple of 3"));
        }
    }
    for (i, &p) in ps.iter().enumerate() {
        for &q in &ps[i + 1..] {
            let g = p.gcd(&q);
            if g != 1 {
                reasons.push(format!("gcd({p}, {q}) = {g}"));
            }
        }
    }
    reasons
}

/// Scan every tuple `(n_1, …, n_d)`, `1 ≤ n_i < p_i`, for a vanishing sum.
pub fn scan_cos_sums(ps: &[u64]) -> Result<CosSumScan> {
    if ps.is_empty() || ps.iter().any(|&p| p == 0) {
        return Err(Error::DegenerateInput("moduli must be positive".into()));
    }
    let count: u128 = ps.iter().map(|&p| (p - 1) as u128).product();
    if count > TUPLE_CAP {
        return Err(Error::CombinatorialLimit { count, cap: TUPLE_CAP });
    }
    let big_p = ps.iter().try_fold(1u64, |acc, &p| acc.checked_mul(p));
    let m = big_p.and_then(|p| p.checked_mul(2)).unwrap_or(u64::MAX);
    check_modulus(m)?;
    let f = field(m)?;
    let terms: Vec<Vec<CyclotomicElement>> = ps
        .iter()
        .map(|&p| (1..p).map(|n| cos_in_field(&f, n, p)).collect())
        .collect();
    let reasons = admissibility_reasons(ps);

    let witnesses: Vec<Vec<u64>> = (0..count as u64)
        .into_par_iter()
        .filter_map(|idx| {
            let tuple = unrank(idx, ps);
            let mut sum = CyclotomicElement::zero(&f);
            for (i, &n) in tuple.iter().enumerate() {
                sum = &sum + &terms[i][(n - 1) as usize];
            }
            sum.is_zero().then_some(tuple)
        })
        .collect();

    Ok(CosSumScan {
        ps: ps.to_vec(),
        admissible: reasons.is_empty(),
        reasons,
        tuples: count as u64,
        zeros: witnesses.len() as u64,
        witnesses,
    })
}

/// Lexicographic tuple number `idx` with `1 ≤ n_i < p_i`, last index fastest.
fn unrank(mut idx: u64, ps: &[u64]) -> Vec<u64> {
    let mut out = vec![0; ps.len()];
    for (i, &p) in ps.iter().enumerate().rev() {
        out[i] = idx % (p - 1) + 1;
        idx /= p - 1;
    }
    out
}

/// Largest absolute coefficient of `Φ_m`, for diagnostics.
pub fn height(poly: &[BigInt]) -> BigInt {
    poly.iter().map(|c| c.abs()).max().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_cyclotomic_polynomials() {
        assert_eq!(cyclotomic_polynomial(1).unwrap(), ints(&[-1, 1]));
        assert_eq!(cyclotomic_polynomial(2).unwrap(), ints(&[1, 1]));
        assert_eq!(cyclotomic_polynomial(6).unwrap(), ints(&[1, -1, 1]));
        assert_eq!(cyclotomic_polynomial(12).unwrap(), ints(&[1, 0, -1, 0, 1]));
        assert!(cyclotomic_polynomial(0).is_err());
        assert!(cyclotomic_polynomial(10_001).is_err());
    }

    #[test]
    fn phi_105_has_a_coefficient_minus_two() {
        let p = cyclotomic_polynomial(105).unwrap();
        assert_eq!(p.len() as u64 - 1, euler_phi(105));
        assert_eq!(height(&p), BigInt::from(2));
        assert_eq!(p[7], BigInt::from(-2));
    }

    #[test]
    fn totient() {
        assert_eq!(euler_phi(1), 1);
        assert_eq!(euler_phi(770), 240);
        assert_eq!(euler_phi(1540), 480);
    }

    #[test]
    fn cos_embeddings() {
        assert!(cos_as_element(1, 2, 2).unwrap().is_zero());
        let half = cos_as_element(1, 3, 3).unwrap();
        assert_eq!(half.as_rational(), Some(BigRational::new(1.into(), 2.into())));
        let c = cos_as_element(1, 5, 5).unwrap();
        let four = BigRational::from_integer(4.into());
        let two = BigRational::from_integer(2.into());
        let one = CyclotomicElement::from_rational(&field(10).unwrap(), BigRational::one());
        let poly = &(&(&c * &c).scale(&four) - &c.scale(&two)) - &one;
        assert!(poly.is_zero());
        assert!(matches!(cos_as_element(1, 4, 6), Err(Error::Embedding { .. })));
    }

    #[test]
    fn control_sums() {
        assert!(cos_sum_is_zero(&[2], &[1]).unwrap());
        assert!(cos_sum_is_zero(&[3, 3], &[1, 2]).unwrap());
        assert!(!cos_sum_is_zero(&[5, 7], &[1, 1]).unwrap());
        assert!(matches!(
            cos_sum_is_zero(&[101, 103], &[1, 1]),
            Err(Error::ModulusRange { .. })
        ));
    }

    #[test]
    fn scan_five_seven() {
        let r = scan_cos_sums(&[5, 7]).unwrap();
        assert!(r.admissible);
        assert_eq!((r.tuples, r.zeros), (24, 0));
        let r = scan_cos_sums(&[3, 5]).unwrap();
        assert!(!r.admissible);
        assert_eq!(r.tuples, 8);
    }

    #[test]
    fn combination_matches_sine_identity() {
        // sin²(π/3)/3 - sin²(2π/3)/3 = 0, written through cos(2πn/3)
        let sixth = BigRational::new(1.into(), 6.into());
        let terms = [
            CosTerm { coefficient: -sixth.clone(), n: 2, p: 3 },
            CosTerm { coefficient: sixth, n: 4, p: 3 },
        ];
        assert!(cos_combination_is_zero(&BigRational::zero(), &terms).unwrap());
    }
}
