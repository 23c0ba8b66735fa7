//! Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
//! budget. Runs as a plain binary so the lines always reach the output.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use block_anderson::cluster::{
    leading_operator, min_nonzero_gaps, ClusterInput, PairClass,
};
use block_anderson::cyclotomic::{cos_sum_is_zero, scan_cos_sums};
use block_anderson::harness::experiments::{cyclic_rank_check, draw_coefficients};
use block_anderson::harness::{
    constancy_scan, gap_growth_probe, multiplicity_scan, sample_disorder, ExperimentConfig,
    PairSpec, Subcommand,
};
use block_anderson::lattice::{
    build_hamiltonian, face_product, off_box_coupling, projection_sum, BoxIndex, BoxPartition,
    DisorderSample,
};
use block_anderson::linalg::{max_abs_diff, symmetric_norm};
use block_anderson::resolvent::{neumann_truncation, schur_reduced};
use block_anderson::separation::{verify_separation, SeparationDesign};
use block_anderson::tridiag::{
    c_coefficient, exact_spectrum, log_log_slope, predicted_eigenvalue, ExpansionOrder, TridiagSpec,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
}

fn exact_small_cases() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst1 = 0.0f64;
    for _ in 0..100 {
        let a = rng.gen_range(-5.0..5.0);
        let b = rng.gen_range(-5.0..5.0);
        let r = rng.gen_range(1.0..1e4);
        let spec = TridiagSpec::new(1, a, b, r).map_err(err)?;
        let truth = a + b + 2.0 * r;
        for order in [ExpansionOrder::Const, ExpansionOrder::COverR] {
            let p = predicted_eigenvalue(&spec, 1, order).map_err(err)?;
            worst1 = worst1.max(rel(p, truth));
        }
        worst1 = worst1.max(rel(exact_spectrum(&spec).map_err(err)?[0], truth));
    }
    check(worst1 <= 1e-12, format!("l=1 worst relative error {worst1:e}"))?;

    let mut worst2 = 0.0f64;
    for _ in 0..100 {
        let r = rng.gen_range(1.0..1e4);
        let spec = TridiagSpec::new(2, 0.0, 0.0, r).map_err(err)?;
        let exact = exact_spectrum(&spec).map_err(err)?;
        // mode 1 is the top eigenvalue r² + r, mode 2 the bottom -r² + r
        let truth = [r * r + r, -r * r + r];
        for n in 1..=2 {
            let p = predicted_eigenvalue(&spec, n, ExpansionOrder::Const).map_err(err)?;
            worst2 = worst2.max(rel(p, truth[n - 1]));
            worst2 = worst2.max(rel(exact[2 - n], truth[n - 1]));
        }
    }
    check(worst2 <= 1e-9, format!("l=2 worst relative error {worst2:e}"))?;
    Ok(format!("l=1 worst {worst1:.1e}, l=2 worst {worst2:.1e}"))
}

fn expansion_residual() -> Outcome {
    let config = ExperimentConfig::parse(
        "expansion.l = 2,3,4,5,6,7,8\n\
         expansion.a = -1,0,0.5,1\n\
         expansion.b = -1,0,0.5,1\n\
         run.r = 50,100,200,400,800,1600,3200\n",
    )
    .map_err(err)?;
    let report = Subcommand::Expansion.report(&config).map_err(err)?;
    let cells = report.rows.len();
    check(cells == (2..=8).sum::<usize>() * 16 * 7, format!("unexpected row count {cells}"))?;
    check(report.verdict.pass, report.verdict.failures.join("; "))?;
    Ok(format!("{cells} eigenvalue rows within budget, all slopes <= -0.7"))
}

fn c_bound() -> Outcome {
    let mut worst = 0.0f64;
    for l in 1..=12 {
        for n in 1..=l {
            let c = c_coefficient(l, n).abs();
            let bound = 10.0 * (l + 1) as f64;
            check(c < bound, format!("|C_{{{l},{n}}}| = {c} not below {bound}"))?;
            worst = worst.max(c / bound);
        }
    }
    Ok(format!("max |C|/(10(l+1)) = {worst:.3}"))
}

fn structural_identities() -> Outcome {
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    for a in 1..=5 {
        shapes.push(vec![a]);
        for b in 1..=5 {
            shapes.push(vec![a, b]);
            for c in 1..=5 {
                shapes.push(vec![a, b, c]);
            }
        }
    }
    for lengths in &shapes {
        let d = lengths.len();
        let part = BoxPartition::new(d, lengths, 1).map_err(err)?;
        let n = part.site_count();
        check(
            projection_sum(&part) == DMatrix::<i64>::identity(n, n),
            format!("lengths={lengths:?}: projections do not sum to I"),
        )?;
        let v = part.box_volume();
        let mut faces = DMatrix::<i64>::zeros(v, v);
        for i in 0..d {
            for positive in [false, true] {
                let f = face_product(&part, i, positive).map_err(err)?;
                check(
                    f.matches(),
                    format!("lengths={lengths:?} direction={i} positive={positive}: face product"),
                )?;
                faces += f.product;
            }
        }
        check(
            off_box_coupling(&part) == faces,
            format!("lengths={lengths:?}: off-box coupling"),
        )?;
    }
    Ok(format!("{} box shapes, integer equality", shapes.len()))
}

fn kronecker_neumann() -> Outcome {
    let part = BoxPartition::new(2, &[2, 3], 2).map_err(err)?;
    let disorder = DisorderSample::uniform(&part, -1.0, 1.0, 7);
    let neighbors = disorder.neighbor_values(2).map_err(err)?;
    let mut points = Vec::new();
    let mut worst = 0.0f64;
    for r in [100.0, 200.0, 400.0, 800.0, 1600.0] {
        let terms = neumann_truncation(&part, &disorder, &[], r).map_err(err)?;
        let input = ClusterInput::new(&[2, 3], &neighbors, &[], r).map_err(err)?;
        let kron = leading_operator(&input).map_err(err)?;
        let scale = terms.leading.amax();
        worst = worst.max(max_abs_diff(&kron, &terms.leading) / scale);
        let reduced = schur_reduced(&part, &disorder, &[], r).map_err(err)?.scaled();
        let remainder = reduced - &terms.leading - &terms.third_order;
        points.push((r, symmetric_norm(&remainder).map_err(err)?));
    }
    check(worst <= 1e-12, format!("assemblies differ by {worst:e} relative"))?;
    let slope = log_log_slope(&points);
    check(slope <= -0.8, format!("remainder slope {slope:.3} above -0.8 ({points:?})"))?;
    Ok(format!("assembly gap {worst:.1e}, remainder slope {slope:.3}"))
}

fn separation_design() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0u64;
    for trial in 0..1000u64 {
        let d = rng.gen_range(1..=4);
        let sets: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                let n = rng.gen_range(1..=4);
                let mut picks: Vec<u32> = Vec::new();
                while picks.len() < n {
                    let k = rng.gen_range(1..50);
                    if !picks.contains(&k) {
                        picks.push(k);
                    }
                }
                picks.into_iter().map(|k| k as f64 / 50.0).collect()
            })
            .collect();
        let design = SeparationDesign::new(sets.clone(), None).map_err(err)?;
        let a = draw_coefficients(&design.intervals, trial);
        let c = verify_separation(&design.sets, &a, design.delta).map_err(err)?;
        check(
            c.passed,
            format!("sets={sets:?} a={a:?}: min gap {:?} not above {}", c.min_gap, c.threshold),
        )?;
        compared += c.selections * c.selections.saturating_sub(1) / 2;
    }
    Ok(format!("1000 systems, {compared} pairs, zero violations"))
}

fn cyclotomic_scan() -> Outcome {
    let mut tuples = 0;
    for ps in [vec![5, 7], vec![5, 11], vec![7, 11], vec![5, 7, 11]] {
        let report = scan_cos_sums(&ps).map_err(err)?;
        check(report.admissible, format!("{ps:?} reported inadmissible"))?;
        check(
            report.zeros == 0,
            format!("{ps:?}: {} vanishing sums, e.g. {:?}", report.zeros, report.witnesses.first()),
        )?;
        let expected: u64 = ps.iter().map(|p| p - 1).product();
        check(report.tuples == expected, format!("{ps:?}: scanned {} of {expected}", report.tuples))?;
        tuples += report.tuples;
    }
    check(cos_sum_is_zero(&[2], &[1]).map_err(err)?, "cos(pi/2) not exactly zero")?;
    check(
        cos_sum_is_zero(&[3, 3], &[1, 2]).map_err(err)?,
        "cos(pi/3) + cos(2pi/3) not exactly zero",
    )?;
    Ok(format!("{tuples} tuples, no zeros; both controls vanish"))
}

fn cluster_gaps() -> Outcome {
    let c = min_nonzero_gaps(&[2, 4]).map_err(err)?;
    let oracle = (5f64.sqrt() - 2.0) / 2.0;
    let c_tilde = c.c_tilde.ok_or("no cos gap constant")?;
    check(rel(c_tilde, oracle) < 1e-12, format!("c~ = {c_tilde}, expected {oracle}"))?;
    let mut summary = Vec::new();
    for operator in ["reduced", "leading"] {
        let config = ExperimentConfig::parse(&format!(
            "geometry.lengths = 2,4\ngeometry.radius = 2\ndisorder.seeds = 1\n\
             disorder.base_seed = 11\nrun.lambda = 2,3\nrun.r = 500\ntol.margin = 0.25\n\
             cluster.operator = {operator}\n"
        ))
        .map_err(err)?;
        let report = Subcommand::Cluster.report(&config).map_err(err)?;
        check(report.verdict.pass, format!("{operator}: {}", report.verdict.failures.join("; ")))?;
        let required = 2.0 * oracle * 500.0 * 500.0 * 0.75;
        let mut ratio = f64::INFINITY;
        let mut cos_pairs = 0;
        for row in &report.rows {
            if row[4] == PairClass::CosSeparated.as_str() {
                let gap: f64 = row[5].parse().map_err(err)?;
                check(gap >= required, format!("{operator}: gap {gap} below {required}"))?;
                ratio = ratio.min(gap / required);
                cos_pairs += 1;
            }
        }
        check(cos_pairs > 0, format!("{operator}: no cos-separated pairs"))?;
        summary.push(format!("{operator}: {cos_pairs} cos pairs, min ratio {ratio:.2}"));
    }
    Ok(summary.join(", "))
}

fn coprime_contrast() -> Outcome {
    let base = "geometry.radius = 2\ndisorder.seeds = 3\nrun.r = 100,200,400,800,1600\n";
    let c22 = ExperimentConfig::parse(&format!("geometry.lengths = 2,2\n{base}")).map_err(err)?;
    let g22 = gap_growth_probe(&c22, &PairSpec::ByClass).map_err(err)?;
    let mut worst_same = f64::NEG_INFINITY;
    let mut same = 0;
    for fit in g22.fits.iter().filter(|f| f.class == Some(PairClass::SameCluster)) {
        same += 1;
        if let Some(s) = fit.slope {
            check(s <= 0.1, format!("l=(2,2) seed {} same_cluster slope {s:.3}", fit.seed))?;
            worst_same = worst_same.max(s);
        }
    }
    check(same > 0, "no same_cluster fits for l=(2,2)")?;

    let c24 = ExperimentConfig::parse(&format!("geometry.lengths = 2,4\n{base}")).map_err(err)?;
    let g24 = gap_growth_probe(&c24, &PairSpec::MinOverAll).map_err(err)?;
    let mut worst_min = f64::INFINITY;
    for fit in &g24.fits {
        let s = fit.slope.ok_or_else(|| format!("l=(2,4) seed {}: no usable fit", fit.seed))?;
        check(s >= 0.8, format!("l=(2,4) seed {} min-pair slope {s:.3}", fit.seed))?;
        worst_min = worst_min.min(s);
    }
    check(!g24.fits.is_empty(), "no min-pair fits for l=(2,4)")?;
    Ok(format!("same_cluster max slope {worst_same:.3}, min-pair min slope {worst_min:.3}"))
}

fn multiplicity_bound() -> Outcome {
    let mut out = Vec::new();
    for (lengths, seeds, bound) in [("2,2", 100, 2), ("2,4", 100, 1), ("2,2,2", 25, 5)] {
        let config = ExperimentConfig::parse(&format!(
            "geometry.lengths = {lengths}\ngeometry.radius = 2\ndisorder.seeds = {seeds}\nrun.r = 300\n"
        ))
        .map_err(err)?;
        let profile = multiplicity_scan(&config).map_err(err)?;
        check(profile.failures.is_empty(), profile.failures.join("; "))?;
        check(profile.rows.len() == seeds, format!("({lengths}): {} rows", profile.rows.len()))?;
        let max = profile.rows.iter().map(|r| r.max_multiplicity).max().unwrap_or(0);
        check(max <= bound, format!("({lengths}): max cluster size {max} above {bound}"))?;
        out.push(format!("({lengths}) max {max} <= {bound}"));
    }
    Ok(out.join(", "))
}

fn constancy() -> Outcome {
    let config = ExperimentConfig::parse(
        "geometry.lengths = 2,2\ngeometry.radius = 2\ndisorder.seeds = 1\n\
         constancy.z = 30,37.5,45,52.5,60\nconstancy.lambda = 0,1,2.5\n",
    )
    .map_err(err)?;
    let report = constancy_scan(&config, &BoxIndex(vec![1, 0])).map_err(err)?;
    check(report.cells.len() == 15, format!("{} grid cells", report.cells.len()))?;
    let skipped = report.cells.iter().filter(|c| c.max_multiplicity.is_none()).count();
    check(skipped == 0, format!("{skipped} cells too close to the spectrum"))?;
    let grid: Vec<usize> = report.cells.iter().filter_map(|c| c.max_multiplicity).collect();
    check(report.constant, format!("multiplicities vary over the grid: {grid:?}"))?;
    Ok(format!("constant multiplicity {:?} over 15 cells", report.value))
}

fn cyclic_rank() -> Outcome {
    let config = ExperimentConfig::parse("geometry.lengths = 2,2\ngeometry.radius = 2\ndisorder.seeds = 50\n")
        .map_err(err)?;
    let geometry = config.geometry().map_err(err)?;
    let settings = config.disorder().map_err(err)?;
    let part = BoxPartition::new(2, &geometry.lengths, geometry.radius).map_err(err)?;
    let mut smallest = f64::INFINITY;
    for i in 0..settings.seeds {
        let disorder = sample_disorder(&part, &settings, i);
        let h = build_hamiltonian(&part, &disorder, &[]).map_err(err)?;
        let res = cyclic_rank_check(&h, &part, &BoxIndex::origin(2), &BoxIndex(vec![1, 1]), 10).map_err(err)?;
        check(res.passed, format!("seed {}: rank {} of {}", disorder.seed, res.rank, res.expected))?;
        let sv = &res.singular_values;
        smallest = smallest.min(sv[res.expected - 1] / sv[0]);
    }
    Ok(format!("50 seeds full rank, smallest relative singular value {smallest:.1e}"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "exact small cases", budget: Duration::from_secs(1), run: exact_small_cases },
        Criterion { id: 2, name: "expansion residual", budget: Duration::from_secs(30), run: expansion_residual },
        Criterion { id: 3, name: "C-coefficient bound", budget: Duration::from_secs(1), run: c_bound },
        Criterion { id: 4, name: "structural identities", budget: Duration::from_secs(5), run: structural_identities },
        Criterion { id: 5, name: "Kronecker/Neumann consistency", budget: Duration::from_secs(60), run: kronecker_neumann },
        Criterion { id: 6, name: "separation", budget: Duration::from_secs(30), run: separation_design },
        Criterion { id: 7, name: "cyclotomic non-vanishing", budget: Duration::from_secs(120), run: cyclotomic_scan },
        Criterion { id: 8, name: "cluster gaps", budget: Duration::from_secs(10), run: cluster_gaps },
        Criterion { id: 9, name: "coprime contrast", budget: Duration::from_secs(60), run: coprime_contrast },
        Criterion { id: 10, name: "multiplicity bound", budget: Duration::from_secs(300), run: multiplicity_bound },
        Criterion { id: 11, name: "constancy", budget: Duration::from_secs(30), run: constancy },
        Criterion { id: 12, name: "cyclic rank", budget: Duration::from_secs(60), run: cyclic_rank },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over runtime budget {:?}", c.budget)),
            Err(e) => (false, e),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.2}s / {}s]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
