use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser};

use super::config::ExperimentConfig;
use super::experiments::{
    constancy_scan, cyclic_rank_check, draw_coefficients, gap_growth_probe, lattice_diameter,
    leading_spectrum, multiplicity_scan, partition, reduced_spectrum, sample_disorder, PairSpec,
};
use super::report::{fmt_f64, Report};
use crate::cluster::{verify_gaps, ClusterInput};
use crate::cyclotomic::scan_cos_sums;
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, face_product, off_box_coupling, projection_sum, BoxIndex};
use crate::separation::{sine_system, verify_separation, SeparationDesign};
use crate::tridiag::{
    exact_spectrum, predicted_eigenvalue, residual_budget, residual_order, ExpansionOrder, ResidualFit,
    TridiagSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Partition,
    Expansion,
    Cluster,
    Separation,
    Cossum,
    Multiplicity,
    Constancy,
    Rankcheck,
    Gapgrowth,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Partition => "partition",
            Self::Expansion => "expansion",
            Self::Cluster => "cluster",
            Self::Separation => "separation",
            Self::Cossum => "cossum",
            Self::Multiplicity => "multiplicity",
            Self::Constancy => "constancy",
            Self::Rankcheck => "rankcheck",
            Self::Gapgrowth => "gapgrowth",
        }
    }

    /// Run the experiment and assemble its report without writing it.
    pub fn report(&self, config: &ExperimentConfig) -> Result<Report> {
        match self {
            Self::Partition => partition_report(config),
            Self::Expansion => expansion_report(config),
            Self::Cluster => cluster_report(config),
            Self::Separation => separation_report(config),
            Self::Cossum => cossum_report(config, None),
            Self::Multiplicity => multiplicity_report(config),
            Self::Constancy => constancy_report(config),
            Self::Rankcheck => rankcheck_report(config),
            Self::Gapgrowth => gapgrowth_report(config),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "banderson", version, about = "Finite-volume experiments for block Anderson Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Site enumeration and exact structural identities.
    Partition(Common),
    /// Tridiagonal eigenvalue expansion against exact spectra.
    Expansion(Common),
    /// Cluster gap verification.
    Cluster(Common),
    /// Separating coefficient design, checked by brute force.
    Separation(Common),
    /// Exact cosine-sum scan.
    Cossum(CossumArgs),
    /// Eigenvalue multiplicity scan of the reduced operator.
    Multiplicity(Common),
    /// Multiplicity of the origin resolvent block over a (z, λ) grid.
    Constancy(Common),
    /// Krylov block rank check.
    Rankcheck(Common),
    /// Growth exponents of cluster gaps.
    Gapgrowth(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CossumArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. }
            | Error::InvalidGeometry(_)
            | Error::SizeLimit { .. }
            | Error::RadiusLimit { .. }
            | Error::InvalidOrder(_)
            | Error::DegenerateInput(_)
            | Error::ModulusRange { .. }
            | Error::CombinatorialLimit { .. }
            | Error::Magnitude { .. }
            | Error::Embedding { .. }
            | Error::OutOfVolume { .. }
    )
}

/// Parse arguments, run one subcommand, write its reports. Returns 0 when
/// every assertion passes, 1 on an assertion or numerical failure, 2 on a
/// configuration error.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(report) => {
            for f in &report.verdict.failures {
                eprintln!("FAIL {f}");
            }
            if report.verdict.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_input_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

fn execute(command: Command) -> Result<Report> {
    let (sub, common) = match command {
        Command::Cossum(args) => {
            let config = match &args.config {
                Some(p) => ExperimentConfig::from_file(p)?,
                None => ExperimentConfig::parse("")?,
            };
            let report = cossum_report(&config, args.p.as_deref())?;
            report.write(&out_dir(&config, args.out)?)?;
            return Ok(report);
        }
        Command::Partition(c) => (Subcommand::Partition, c),
        Command::Expansion(c) => (Subcommand::Expansion, c),
        Command::Cluster(c) => (Subcommand::Cluster, c),
        Command::Separation(c) => (Subcommand::Separation, c),
        Command::Multiplicity(c) => (Subcommand::Multiplicity, c),
        Command::Constancy(c) => (Subcommand::Constancy, c),
        Command::Rankcheck(c) => (Subcommand::Rankcheck, c),
        Command::Gapgrowth(c) => (Subcommand::Gapgrowth, c),
    };
    let config = ExperimentConfig::from_file(&common.config)?;
    let report = sub.report(&config)?;
    report.write(&out_dir(&config, common.out)?)?;
    Ok(report)
}

fn out_dir(config: &ExperimentConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p),
        None => Ok(PathBuf::from(config.get_or::<String>("output.dir", "results".into())?)),
    }
}

fn partition_report(config: &ExperimentConfig) -> Result<Report> {
    let geometry = config.geometry()?;
    let part = partition(&geometry)?;
    let d = geometry.d;
    let mut header: Vec<String> = vec!["site".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("n{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut report = Report::new("partition", config.hash(), &header_refs);
    for (k, site) in part.sites().iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(site.iter().map(|x| x.to_string()));
        row.extend(part.box_of(site).0.iter().map(|x| x.to_string()));
        report.row(row);
    }
    let n = part.site_count();
    if projection_sum(&part) != nalgebra::DMatrix::<i64>::identity(n, n) {
        report.fail(format!("lengths={:?} radius={}: projections do not sum to the identity", geometry.lengths, geometry.radius));
    }
    let mut faces = nalgebra::DMatrix::<i64>::zeros(part.box_volume(), part.box_volume());
    for i in 0..d {
        for positive in [false, true] {
            let f = face_product(&part, i, positive)?;
            if !f.matches() {
                report.fail(format!(
                    "lengths={:?} radius={} direction={} positive={positive}: face product differs from the face projection",
                    geometry.lengths, geometry.radius, i + 1
                ));
            }
            faces += f.product;
        }
    }
    if off_box_coupling(&part) != faces {
        report.fail(format!("lengths={:?} radius={}: off-box coupling differs from the sum over unit boxes", geometry.lengths, geometry.radius));
    }
    report.detail("sites", n);
    report.detail("boxes", part.boxes().len());
    Ok(report)
}

fn expansion_report(config: &ExperimentConfig) -> Result<Report> {
    let ls: Vec<usize> = config.list_or("expansion.l", (2..=8).collect())?;
    let a_values: Vec<f64> = config.list_or("expansion.a", vec![-1.0, 0.0, 0.5, 1.0])?;
    let b_values: Vec<f64> = config.list_or("expansion.b", vec![-1.0, 0.0, 0.5, 1.0])?;
    let rs = config.r_values()?;
    if ls.contains(&0) {
        return Err(config.error("expansion.l", "lengths must be positive"));
    }
    let mut report = Report::new(
        "expansion",
        config.hash(),
        &["l", "a", "b", "r", "n", "exact", "predicted", "residual"],
    );
    let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rs.iter().copied().fold(0.0, f64::max);
    let fit_possible = rs.len() >= 4 && hi >= 8.0 * lo;
    let mut fits = Vec::new();
    for &l in &ls {
        for &a in &a_values {
            for &b in &b_values {
                for &r in &rs {
                    let spec = TridiagSpec::new(l, a, b, r)?;
                    let exact = exact_spectrum(&spec)?;
                    let budget = residual_budget(&spec);
                    for n in 1..=l {
                        let predicted = predicted_eigenvalue(&spec, n, ExpansionOrder::Const)?;
                        let e = exact[l - n];
                        let residual = (e - predicted).abs();
                        report.row(vec![
                            l.to_string(),
                            fmt_f64(a),
                            fmt_f64(b),
                            fmt_f64(r),
                            n.to_string(),
                            fmt_f64(e),
                            fmt_f64(predicted),
                            fmt_f64(residual),
                        ]);
                        if spec.in_expansion_regime() && residual > budget {
                            report.fail(format!(
                                "l={l} a={a} b={b} r={r} n={n}: residual {residual:e} above budget {budget:e}"
                            ));
                        }
                    }
                }
                if fit_possible {
                    let fit = residual_order(l, a, b, &rs)?;
                    if let ResidualFit::Slope(s) = fit {
                        if s > -0.7 {
                            report.fail(format!("l={l} a={a} b={b} r={rs:?}: residual slope {s} above -0.7"));
                        }
                    }
                    fits.push(serde_json::json!({ "l": l, "a": a, "b": b, "fit": fit }));
                }
            }
        }
    }
    report.detail("fits", fits);
    Ok(report)
}

fn cluster_report(config: &ExperimentConfig) -> Result<Report> {
    let geometry = config.geometry()?;
    let settings = config.disorder()?;
    let rs = config.r_values()?;
    let boosts = config.lambda(&geometry.lengths)?;
    let margin = config.margin()?;
    let precision = config.precision()?;
    let operator: String = config.get_or("cluster.operator", "reduced".into())?;
    if operator != "reduced" && operator != "leading" {
        return Err(config.error("cluster.operator", "expected reduced or leading"));
    }
    let part = partition(&geometry)?;
    let mut report = Report::new(
        "cluster",
        config.hash(),
        &["seed", "r", "n", "m", "class", "gap", "required", "passed"],
    );
    let label = |t: &[usize]| t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    for i in 0..settings.seeds {
        let disorder = sample_disorder(&part, &settings, i);
        for &r in &rs {
            let exact = if operator == "leading" {
                leading_spectrum(&part, &disorder, &boosts, r)?
            } else {
                reduced_spectrum(&part, &disorder, &boosts, r, precision, |_| f64::INFINITY)?.values
            };
            let input = ClusterInput::new(&geometry.lengths, &disorder.neighbor_values(geometry.d)?, &boosts, r)?;
            let tuple = format!(
                "lengths={:?} radius={} seed={} r={r} lambda={boosts:?} margin={margin} operator={operator}",
                geometry.lengths, geometry.radius, disorder.seed
            );
            let gaps = match verify_gaps(&exact, &input, margin) {
                Ok(g) => g,
                Err(Error::Matching { indices }) => {
                    report.fail(format!("{tuple}: ambiguous matching at sorted indices {indices:?}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            for g in gaps {
                if g.passed == Some(false) {
                    report.fail(format!(
                        "{tuple} pair={:?}/{:?} class={}: gap {:e} below {:e}",
                        g.pair.0,
                        g.pair.1,
                        g.class.as_str(),
                        g.gap,
                        g.required.unwrap_or(f64::NAN)
                    ));
                }
                report.row(vec![
                    disorder.seed.to_string(),
                    fmt_f64(r),
                    label(&g.pair.0),
                    label(&g.pair.1),
                    g.class.as_str().to_string(),
                    fmt_f64(g.gap),
                    g.required.map(fmt_f64).unwrap_or_default(),
                    g.passed.map(|p| p.to_string()).unwrap_or_default(),
                ]);
            }
        }
    }
    Ok(report)
}

fn separation_report(config: &ExperimentConfig) -> Result<Report> {
    let sets: Vec<Vec<f64>> = if config.has("separation.sets") {
        config.groups("separation.sets")?
    } else {
        sine_system(&config.geometry()?.lengths)
    };
    let hint: Option<f64> = if config.has("separation.delta") {
        Some(config.get("separation.delta")?)
    } else {
        None
    };
    let design = SeparationDesign::new(sets, hint)?;
    let mut report = Report::new(
        "separation",
        config.hash(),
        &["trial", "coefficients", "min_gap", "threshold", "passed"],
    );
    let trials: Vec<(String, Vec<f64>)> = if config.has("separation.a") {
        vec![("given".to_string(), config.list("separation.a")?)]
    } else {
        let settings = config.disorder()?;
        let count: usize = config.get_or("separation.trials", settings.seeds)?;
        (0..count)
            .map(|t| {
                let seed = settings.base_seed.wrapping_add(t as u64);
                (seed.to_string(), draw_coefficients(&design.intervals, seed))
            })
            .collect()
    };
    for (trial, a) in trials {
        let check = verify_separation(&design.sets, &a, design.delta)?;
        if !check.passed {
            report.fail(format!(
                "sets={:?} a={a:?} delta={}: min gap {:?} not above {}",
                design.sets, design.delta, check.min_gap, check.threshold
            ));
        }
        report.row(vec![
            trial,
            a.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" "),
            check.min_gap.map(fmt_f64).unwrap_or_default(),
            fmt_f64(check.threshold),
            check.passed.to_string(),
        ]);
    }
    report.detail("epsilon", design.epsilon);
    report.detail("delta", design.delta);
    report.detail("intervals", &design.intervals);
    report.detail("cross_set_gap", design.cross_set_gap);
    Ok(report)
}

fn cossum_report(config: &ExperimentConfig, ps: Option<&[u64]>) -> Result<Report> {
    let ps: Vec<u64> = match ps {
        Some(p) => p.to_vec(),
        None => config.list("cossum.p")?,
    };
    let scan = scan_cos_sums(&ps)?;
    let mut report = Report::new("cossum", &config_hash_or(config, &ps), &["witness"]);
    for w in &scan.witnesses {
        report.row(vec![w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")]);
    }
    if scan.admissible && scan.zeros > 0 {
        report.fail(format!("ps={ps:?}: {} vanishing sums, first {:?}", scan.zeros, scan.witnesses[0]));
    }
    report.detail("ps", &scan.ps);
    report.detail("admissible", scan.admissible);
    report.detail("reasons", &scan.reasons);
    report.detail("tuples", scan.tuples);
    report.detail("zeros", scan.zeros);
    Ok(report)
}

/// Hash of the config text, or of the moduli when run without a file.
fn config_hash_or(config: &ExperimentConfig, ps: &[u64]) -> String {
    use sha2::{Digest, Sha256};
    if config.has("cossum.p") {
        return config.hash().to_string();
    }
    let text = ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
    hex::encode(Sha256::digest(format!("cossum.p = {text}").as_bytes()))
}

fn multiplicity_report(config: &ExperimentConfig) -> Result<Report> {
    let profile = multiplicity_scan(config)?;
    let mut report = Report::new(
        "multiplicity",
        config.hash(),
        &["seed", "r", "max_multiplicity", "histogram", "extended"],
    );
    for row in &profile.rows {
        let hist = row
            .histogram
            .iter()
            .map(|(s, c)| format!("{s}:{c}"))
            .collect::<Vec<_>>()
            .join(" ");
        report.row(vec![
            row.seed.to_string(),
            fmt_f64(row.r),
            row.max_multiplicity.to_string(),
            hist,
            row.extended.to_string(),
        ]);
    }
    for f in &profile.failures {
        report.fail(f.clone());
    }
    report.detail("bound", profile.bound);
    report.detail("simple", profile.simple);
    report.detail(
        "max_multiplicity",
        profile.rows.iter().map(|r| r.max_multiplicity).max(),
    );
    Ok(report)
}

fn constancy_report(config: &ExperimentConfig) -> Result<Report> {
    let geometry = config.geometry()?;
    let n = if config.has("constancy.box") {
        config.box_index("constancy.box", geometry.d)?
    } else {
        BoxIndex::unit(geometry.d, 0, true)
    };
    let scan = constancy_scan(config, &n)?;
    let mut report = Report::new(
        "constancy",
        config.hash(),
        &["z", "lambda", "max_multiplicity", "note"],
    );
    for c in &scan.cells {
        report.row(vec![
            fmt_f64(c.z),
            fmt_f64(c.lambda),
            c.max_multiplicity.map(|m| m.to_string()).unwrap_or_default(),
            c.note.clone(),
        ]);
    }
    if !scan.constant {
        let values: Vec<String> = scan
            .cells
            .iter()
            .map(|c| format!("(z={}, lambda={}) -> {:?}", c.z, c.lambda, c.max_multiplicity))
            .collect();
        report.fail(format!(
            "lengths={:?} radius={} seed index 0 box={}: multiplicity not constant: {}",
            geometry.lengths,
            geometry.radius,
            n,
            values.join(", ")
        ));
    }
    report.detail("box", &scan.boosted_box);
    report.detail("value", scan.value);
    Ok(report)
}

fn rankcheck_report(config: &ExperimentConfig) -> Result<Report> {
    let geometry = config.geometry()?;
    let settings = config.disorder()?;
    let part = partition(&geometry)?;
    let d = geometry.d;
    let n = if config.has("rankcheck.n") {
        config.box_index("rankcheck.n", d)?
    } else {
        BoxIndex::origin(d)
    };
    let m = if config.has("rankcheck.m") {
        config.box_index("rankcheck.m", d)?
    } else {
        BoxIndex(vec![1; d])
    };
    for b in [&n, &m] {
        if !part.contains_box(b) {
            return Err(Error::OutOfVolume { index: b.0.clone() });
        }
    }
    let k: usize = config.get_or("rankcheck.k", lattice_diameter(&part))?;
    let mut report = Report::new(
        "rankcheck",
        config.hash(),
        &["seed", "rank", "expected", "smallest_kept", "passed"],
    );
    use rayon::prelude::*;
    let results = (0..settings.seeds)
        .into_par_iter()
        .map(|i| {
            let disorder = sample_disorder(&part, &settings, i);
            let h = build_hamiltonian(&part, &disorder, &[])?;
            Ok((disorder.seed, cyclic_rank_check(&h, &part, &n, &m, k)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for (seed, res) in results {
        if !res.passed {
            report.fail(format!(
                "lengths={:?} radius={} seed={seed} n={n} m={m} K={k}: rank {} of {}",
                geometry.lengths, geometry.radius, res.rank, res.expected
            ));
        }
        let kept = res.singular_values.get(res.rank.saturating_sub(1)).copied().unwrap_or(0.0);
        report.row(vec![
            seed.to_string(),
            res.rank.to_string(),
            res.expected.to_string(),
            fmt_f64(kept),
            res.passed.to_string(),
        ]);
    }
    report.detail("k", k);
    Ok(report)
}

fn gapgrowth_report(config: &ExperimentConfig) -> Result<Report> {
    let raw: String = config.get_or("gapgrowth.pair", "class".into())?;
    let spec = PairSpec::parse(&raw)
        .ok_or_else(|| config.error("gapgrowth.pair", "expected `min`, `class` or `n1,n2;m1,m2`"))?;
    let probe = gap_growth_probe(config, &spec)?;
    let mut report = Report::new(
        "gapgrowth",
        config.hash(),
        &["seed", "r", "pair", "class", "gap", "floor", "extended"],
    );
    for row in &probe.rows {
        report.row(vec![
            row.seed.to_string(),
            fmt_f64(row.r),
            row.label.clone(),
            row.class.map(|c| c.as_str().to_string()).unwrap_or_default(),
            fmt_f64(row.gap),
            fmt_f64(row.floor),
            row.extended.to_string(),
        ]);
    }
    for f in &probe.failures {
        report.fail(f.clone());
    }
    report.detail("fits", &probe.fits);
    Ok(report)
}
