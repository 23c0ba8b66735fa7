//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! geometry.d = 2
//! geometry.lengths = 2,4
//! geometry.radius = 2
//! disorder.lower = -1
//! disorder.upper = 1
//! disorder.seeds = 100
//! disorder.base_seed = 42
//! run.r = 100,200,400,800,1600
//! run.lambda = from_lem4:0.4
//! tol.degeneracy = 1e-6
//! precision = standard
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::BoxIndex;
use crate::separation::{design_intervals, epsilon_delta, sine_system};

const KNOWN_KEYS: &[&str] = &[
    "geometry.d",
    "geometry.lengths",
    "geometry.radius",
    "disorder.lower",
    "disorder.upper",
    "disorder.seeds",
    "disorder.base_seed",
    "run.r",
    "run.lambda",
    "tol.degeneracy",
    "tol.margin",
    "tol.constancy",
    "tol.solver",
    "precision",
    "output.dir",
    "expansion.l",
    "expansion.a",
    "expansion.b",
    "cluster.operator",
    "separation.sets",
    "separation.delta",
    "separation.a",
    "separation.trials",
    "cossum.p",
    "constancy.z",
    "constancy.lambda",
    "constancy.box",
    "rankcheck.n",
    "rankcheck.m",
    "rankcheck.k",
    "gapgrowth.pair",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Standard,
    Extended,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSpec {
    Explicit(Vec<f64>),
    /// Midpoints of the separating intervals built from the sine system of
    /// the box lengths with `δ` as a hint.
    FromDesign { delta: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub d: usize,
    pub lengths: Vec<usize>,
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisorderSettings {
    pub lower: f64,
    pub upper: f64,
    pub seeds: usize,
    pub base_seed: u64,
}

#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    value: String,
}

/// A parsed configuration. Required sections are checked when an experiment
/// asks for them, so each error names the missing field.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, Entry>,
    hash: String,
}

fn parse_list<T: FromStr>(key: &str, e: &Entry) -> Result<Vec<T>>
where
    T::Err: Display,
{
    e.value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|err| Error::config(Some(e.line), key, format!("cannot parse `{s}`: {err}")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::config(Some(line), content, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::config(Some(line), "", "empty key"));
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(Some(line), key, "unknown key"));
            }
            if value.is_empty() {
                return Err(Error::config(Some(line), key, "empty value"));
            }
            let entry = Entry {
                line,
                value: value.to_string(),
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::config(
                    Some(line),
                    key,
                    format!("duplicate key, first set at line {}", prev.line),
                ));
            }
        }
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        let config = ExperimentConfig { entries, hash };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(None, "--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the configuration text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn validate(&self) -> Result<()> {
        if self.has("geometry.d") || self.has("geometry.lengths") || self.has("geometry.radius") {
            self.geometry()?;
        }
        if self.has("disorder.lower") || self.has("disorder.upper") {
            self.disorder()?;
        }
        self.precision()?;
        self.r_values()?;
        self.degeneracy_tolerance()?;
        self.constancy_tolerance()?;
        self.margin()?;
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn entry(&self, key: &str) -> Result<&Entry> {
        self.entries
            .get(key)
            .ok_or_else(|| Error::config(None, key, "missing required field"))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let e = self.entry(key)?;
        e.value
            .parse::<T>()
            .map_err(|err| Error::config(Some(e.line), key, format!("cannot parse `{}`: {err}", e.value)))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        if self.has(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        parse_list(key, self.entry(key)?)
    }

    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        if self.has(key) {
            self.list(key)
        } else {
            Ok(default)
        }
    }

    /// Semicolon-separated groups of comma-separated values.
    pub fn groups<T: FromStr>(&self, key: &str) -> Result<Vec<Vec<T>>>
    where
        T::Err: Display,
    {
        let e = self.entry(key)?;
        e.value
            .split(';')
            .map(|g| {
                parse_list(
                    key,
                    &Entry {
                        line: e.line,
                        value: g.to_string(),
                    },
                )
            })
            .collect()
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.line(key), key, message)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let lengths: Vec<usize> = self.list("geometry.lengths")?;
        let d = self.get_or("geometry.d", lengths.len())?;
        if d != lengths.len() {
            return Err(self.error(
                "geometry.d",
                format!("d = {d} but {} lengths given", lengths.len()),
            ));
        }
        if d == 0 || lengths.contains(&0) {
            return Err(self.error("geometry.lengths", "lengths must be positive"));
        }
        let radius = self.get_or("geometry.radius", 2)?;
        Ok(Geometry { d, lengths, radius })
    }

    pub fn disorder(&self) -> Result<DisorderSettings> {
        let lower: f64 = self.get_or("disorder.lower", -1.0)?;
        let upper: f64 = self.get_or("disorder.upper", 1.0)?;
        if !(lower <= upper) {
            return Err(self.error("disorder.upper", format!("upper {upper} below lower {lower}")));
        }
        let seeds = self.get_or("disorder.seeds", 1)?;
        if seeds == 0 {
            return Err(self.error("disorder.seeds", "need at least one seed"));
        }
        Ok(DisorderSettings {
            lower,
            upper,
            seeds,
            base_seed: self.get_or("disorder.base_seed", 0)?,
        })
    }

    pub fn r_values(&self) -> Result<Vec<f64>> {
        let rs: Vec<f64> = self.list_or("run.r", vec![300.0])?;
        if rs.is_empty() || rs.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(self.error("run.r", "r values must be positive and finite"));
        }
        Ok(rs)
    }

    pub fn lambda_spec(&self) -> Result<LambdaSpec> {
        if !self.has("run.lambda") {
            return Ok(LambdaSpec::Explicit(Vec::new()));
        }
        let e = self.entry("run.lambda")?;
        if let Some(rest) = e.value.strip_prefix("from_lem4:") {
            let delta = rest
                .trim()
                .parse::<f64>()
                .map_err(|err| self.error("run.lambda", format!("bad delta `{rest}`: {err}")))?;
            return Ok(LambdaSpec::FromDesign { delta });
        }
        Ok(LambdaSpec::Explicit(self.list("run.lambda")?))
    }

    /// One boost per direction, or empty for none.
    pub fn lambda(&self, lengths: &[usize]) -> Result<Vec<f64>> {
        match self.lambda_spec()? {
            LambdaSpec::Explicit(v) => {
                if !v.is_empty() && v.len() != lengths.len() {
                    return Err(self.error(
                        "run.lambda",
                        format!("expected {} values, got {}", lengths.len(), v.len()),
                    ));
                }
                Ok(v)
            }
            LambdaSpec::FromDesign { delta } => {
                let sets = sine_system(lengths);
                let (eps, delta) = epsilon_delta(&sets, Some(delta))?;
                Ok(design_intervals(eps, delta, lengths.len())?
                    .into_iter()
                    .map(|(lo, hi)| 0.5 * (lo + hi))
                    .collect())
            }
        }
    }

    pub fn degeneracy_tolerance(&self) -> Result<f64> {
        let tol: f64 = self.get_or("tol.degeneracy", 1e-6)?;
        if !(tol > 0.0) {
            return Err(self.error("tol.degeneracy", "must be positive"));
        }
        Ok(tol)
    }

    /// Relative tolerance for resolvent-block multiplicities.
    pub fn constancy_tolerance(&self) -> Result<f64> {
        let tol: f64 = self.get_or("tol.constancy", 1e-10)?;
        if !(tol > 0.0) {
            return Err(self.error("tol.constancy", "must be positive"));
        }
        Ok(tol)
    }

    pub fn margin(&self) -> Result<f64> {
        let m: f64 = self.get_or("tol.margin", 0.25)?;
        if !(0.0..1.0).contains(&m) {
            return Err(self.error("tol.margin", "must lie in [0, 1)"));
        }
        Ok(m)
    }

    pub fn precision(&self) -> Result<Precision> {
        match self.get_or::<String>("precision", "standard".into())?.as_str() {
            "standard" => Ok(Precision::Standard),
            "extended" => Ok(Precision::Extended),
            other => Err(self.error("precision", format!("expected standard or extended, got `{other}`"))),
        }
    }

    pub fn box_index(&self, key: &str, d: usize) -> Result<BoxIndex> {
        let v: Vec<i64> = self.list(key)?;
        if v.len() != d {
            return Err(self.error(key, format!("expected {d} coordinates, got {}", v.len())));
        }
        Ok(BoxIndex(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
geometry.d = 2
geometry.lengths = 2, 4
geometry.radius = 2
disorder.lower = -1
disorder.upper = 1
disorder.seeds = 3
disorder.base_seed = 42
run.r = 100,200
run.lambda = 2.0,3.0
tol.degeneracy = 1e-6
precision = standard
";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let g = c.geometry().unwrap();
        assert_eq!(g.lengths, vec![2, 4]);
        assert_eq!(c.r_values().unwrap(), vec![100.0, 200.0]);
        assert_eq!(c.lambda(&g.lengths).unwrap(), vec![2.0, 3.0]);
        assert_eq!(c.disorder().unwrap().base_seed, 42);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn reports_line_and_field() {
        let err = ExperimentConfig::parse("geometry.d = 2\ngeometry.lengths = 2,x\n").unwrap_err();
        match err {
            Error::Config { line, field, .. } => {
                assert_eq!(line, Some(2));
                assert_eq!(field, "geometry.lengths");
            }
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::parse("geometry.d = 2\n").unwrap_err();
        assert!(err.to_string().contains("geometry.lengths"));
        assert!(ExperimentConfig::parse("bogus.key = 1").is_err());
        assert!(ExperimentConfig::parse("run.r").is_err());
        assert!(ExperimentConfig::parse("run.r = 1\nrun.r = 2").is_err());
    }

    #[test]
    fn lambda_from_design() {
        let c = ExperimentConfig::parse("run.lambda = from_lem4:0.4").unwrap();
        // sets {1/4}, {1/4}: ε = 1/4, δ = 0.4, 2/(εδ) = 20
        assert_eq!(c.lambda(&[2, 2]).unwrap(), vec![15.0, 300.0]);
    }
}
