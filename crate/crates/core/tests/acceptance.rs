//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs without the libtest harness so the lines
//! always reach the output.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stratdisc_core::discrepancy::{l2_sq_quadrature, l2_sq_warnock};
use stratdisc_core::expectation::{
    expected_l2_sq, in_improvement_region, in_region, pair_family_expected_l2_sq, pair_gap,
    region_boundary, total_gain,
};
use stratdisc_core::experiments::{mc_expected_with_workers, run_table, McEstimate};
use stratdisc_core::partitions::{
    admissible_positions, jittered, modified_pair, pair_rectangle, variant, PairSplit,
};
use stratdisc_core::{DomainBox, PointSet, VariantName};

// Pinned tolerances.
const IDENTITY_TOL: f64 = 1e-12;
const LAW_TOL: f64 = 1e-10;
const TELESCOPE_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-10;
const ANCHOR_TOL: f64 = 1e-14;
const FAMILY_TOL: f64 = 1e-14;
const TABLE_TOL: f64 = 0.01;
const MC_SIGMAS: f64 = 4.0;
/// Looser check of the Monte-Carlo jittered mean against the reference.
const MC_REFERENCE_TOL: f64 = 0.02;

const MC_REPS: usize = 10_000;
const MC_SEED: u64 = 1;

type Check = fn() -> Outcome;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn engine(p: &stratdisc_core::Partition) -> f64 {
    expected_l2_sq(p).expect("engine accepts builder output").value
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let squares = engine(&pair_rectangle(2, 1.0, PairSplit::Squares).unwrap());
    let triangles = engine(&pair_rectangle(2, 1.0, PairSplit::Triangles).unwrap());
    let elapsed = start.elapsed();
    let ok = (squares - 1.0 / 18.0).abs() < IDENTITY_TOL
        && (triangles - 1.0 / 20.0).abs() < IDENTITY_TOL
        && (8.0 * squares - 4.0 / 9.0).abs() < IDENTITY_TOL
        && (8.0 * triangles - 36.0 / 90.0).abs() < IDENTITY_TOL
        && elapsed < Duration::from_secs(1);
    outcome(
        ok,
        format!("squares {squares:.15} (1/18), triangles {triangles:.15} (1/20), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0f64;
    let mut parts = Vec::new();
    for d in 2..=4 {
        let gap = pair_gap(d).unwrap();
        let expected = 3f64.powi(-(d as i32)) / 20.0;
        worst = worst.max((gap - expected).abs());
        parts.push(format!("d={d}: {gap:.6e}"));
    }
    outcome(worst < IDENTITY_TOL, format!("{}; max error {worst:.1e}", parts.join(", ")))
}

/// Independent statement of the improvement law with literal constants.
fn law(m: usize, i: usize, j: usize) -> f64 {
    let mf = m as f64;
    let (z1, z2) = (i as f64 / mf, j as f64 / mf);
    (2.0 / 45.0) * mf.powi(-6) + (1.0 / 15.0) * z1 * mf.powi(-5) - (1.0 / 5.0) * z2 * mf.powi(-5)
}

fn engine_delta(m: usize, i: usize, j: usize) -> f64 {
    let base = engine(&jittered(m, 2).unwrap());
    let modified = engine(&modified_pair(m, 2, &[stratdisc_core::PairPosition::new(i, j)]).unwrap());
    base - modified
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0f64;
    let mut count = 0;
    for m in [3, 4, 5, 10] {
        let base = engine(&jittered(m, 2).unwrap());
        for z in admissible_positions(m) {
            let modified = engine(&modified_pair(m, 2, &[z]).unwrap());
            worst = worst.max((base - modified - law(m, z.i, z.j)).abs());
            count += 1;
        }
    }
    // Constants recovered from engine differences alone, at m = 3.
    let m6 = 3f64.powi(6);
    let c0 = engine_delta(3, 0, 0) * m6;
    let c1 = (engine_delta(3, 1, 0) - engine_delta(3, 0, 0)) * m6;
    let c2 = (engine_delta(3, 0, 0) - engine_delta(3, 0, 1)) * m6;
    let recovered = (c0 - 2.0 / 45.0).abs() < 1e-9 && (c1 - 1.0 / 15.0).abs() < 1e-9 && (c2 - 0.2).abs() < 1e-9;
    let elapsed = start.elapsed();
    outcome(
        worst < LAW_TOL && recovered && elapsed < Duration::from_secs(30),
        format!(
            "{count} positions, max error {worst:.1e}; recovered c0={c0:.12} c1={c1:.12} c2={c2:.12}; {elapsed:.2?}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for m in 3..=20 {
        let base = engine(&jittered(m, 2).unwrap());
        for z in admissible_positions(m) {
            let delta = base - engine(&modified_pair(m, 2, &[z]).unwrap());
            let (z1, z2) = (z.i as f64 / m as f64, z.j as f64 / m as f64);
            let predicted = in_improvement_region(m, z);
            if predicted != (delta > 0.0) || predicted != in_region(m, z1, z2) {
                mismatches.push(format!("m={m} ({},{})", z.i, z.j));
            }
            checked += 1;
        }
    }
    // At m = 10 the boundary is z2 = 1/45 + z1/3.
    let boundary_ok = (0..=20).all(|k| {
        let z1 = k as f64 / 20.0;
        (region_boundary(10, z1) - (1.0 / 45.0 + z1 / 3.0)).abs() < 1e-15
    });
    outcome(
        mismatches.is_empty() && boundary_ok,
        format!(
            "{checked} grid positions, {} mismatches{}; m=10 boundary {}",
            mismatches.len(),
            mismatches.first().map_or(String::new(), |s| format!(" (first {s})")),
            if boundary_ok { "z2 < 1/45 + z1/3" } else { "WRONG" }
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let t1 = run_table(1, 0, 0, 1).unwrap();
    let t2 = run_table(2, 0, 0, 1).unwrap();
    let listed = [
        (&t1, 7, VariantName::Jittered, 0.000476834),
        (&t1, 10, VariantName::Jittered, 0.00016377),
        (&t1, 14, VariantName::Jittered, 0.0000599499),
        (&t2, 10, VariantName::TopRow, 0.000162172),
        (&t2, 10, VariantName::All, 0.00016101),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (table, m, name, reference) in listed {
        let cell = table.cell(m, name).unwrap();
        let rel = (cell.analytic - reference) / reference;
        ok &= rel.abs() < TABLE_TOL;
        parts.push(format!("N={} {name} {:+.2}%", m * m, 100.0 * rel));
    }
    let worst = t1
        .cells
        .iter()
        .chain(&t2.cells)
        .map(|c| c.rel_dev.abs())
        .fold(0.0, f64::max);
    ok &= worst < TABLE_TOL;
    let value = |name| t2.cell(10, name).unwrap().analytic;
    let ordered = value(VariantName::All) < value(VariantName::TopRow)
        && value(VariantName::TopRow) < value(VariantName::P01)
        && value(VariantName::P01) < value(VariantName::Jittered);
    let elapsed = start.elapsed();
    outcome(
        ok && ordered && elapsed < Duration::from_secs(60),
        format!(
            "{}; all cells within {:.2}%; all < toprow < p01 < jittered {}; {elapsed:.2?}",
            parts.join(", "),
            100.0 * worst,
            if ordered { "holds" } else { "FAILS" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst = 0f64;
    for m in [4, 6, 10] {
        let direct = engine(&jittered(m, 2).unwrap()) - engine(&variant(m, VariantName::All).unwrap());
        worst = worst.max((direct - total_gain(m).unwrap().total).abs());
    }
    let mut bound_failures = Vec::new();
    for m in 2..=500 {
        let report = total_gain(m).unwrap();
        let mf = m as f64;
        if report.total > mf.powi(-3) / 9.0 || report.total * mf.powi(3) < report.lower_bound * mf.powi(3) {
            bound_failures.push(m);
        }
    }
    let at_500 = total_gain(500).unwrap();
    outcome(
        worst < TELESCOPE_TOL && bound_failures.is_empty(),
        format!(
            "telescoping max error {worst:.1e}; bounds violated for {} of m=2..500; m=500: g·m³ = {:.4e} in [{:.4e}, {:.4e}]",
            bound_failures.len(),
            at_500.total * 500f64.powi(3),
            at_500.lower_bound * 500f64.powi(3),
            1.0 / 9.0
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f64;
    let instances = 150;
    for k in 0..instances {
        let d = 1 + k % 3;
        let n = rng.gen_range(1..=50);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| match rng.gen_range(0..10) {
                        // exercise ties and the cube boundary
                        0 => 0.0,
                        1 => 1.0,
                        2 => 0.5,
                        _ => rng.gen::<f64>(),
                    })
                    .collect()
            })
            .collect();
        let points = PointSet::from_points(rows).unwrap();
        let w = l2_sq_warnock(&points).unwrap();
        let q = l2_sq_quadrature(&points, &DomainBox::unit(d)).unwrap();
        worst = worst.max((w - q).abs());
    }
    let set = |rows: &[f64]| PointSet::from_points(rows.iter().map(|&x| vec![x]).collect()).unwrap();
    let anchors = [(set(&[0.5]), 1.0 / 12.0), (set(&[0.0]), 1.0 / 3.0), (set(&[0.25, 0.75]), 1.0 / 48.0)];
    let anchor_err = anchors
        .iter()
        .map(|(p, v)| (l2_sq_warnock(p).unwrap() - v).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < ORACLE_TOL && anchor_err < ANCHOR_TOL,
        format!("{instances} random instances, max |warnock − quadrature| {worst:.1e}; anchors max error {anchor_err:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in VariantName::ALL {
        let partition = variant(10, name).unwrap();
        let analytic = engine(&partition);
        let runs: Vec<McEstimate> = [1, 4, 8, 4]
            .iter()
            .map(|&w| mc_expected_with_workers(&partition, MC_REPS, MC_SEED, w).unwrap())
            .collect();
        let identical = runs.iter().all(|r| {
            r.mean.to_bits() == runs[0].mean.to_bits() && r.stderr.to_bits() == runs[0].stderr.to_bits()
        });
        let z = runs[0].z_score(analytic);
        ok &= identical && z.abs() < MC_SIGMAS;
        parts.push(format!("{name} z={z:+.2}{}", if identical { "" } else { " (NOT reproducible)" }));
        if name == VariantName::Jittered {
            let rel = (runs[0].mean - 0.00016366) / 0.00016366;
            ok &= rel.abs() < MC_REFERENCE_TOL;
            parts.push(format!("jittered vs reference {:+.2}%", 100.0 * rel));
        }
    }
    outcome(ok, format!("R={MC_REPS}, seed {MC_SEED}, workers 1/4/8: {}", parts.join(", ")))
}

fn criterion_9() -> Outcome {
    let mut checked = 0;
    let mut worst_ratio = 0f64;
    let mut failures = Vec::new();
    for (d, ms) in [(1usize, 3usize..=60), (2, 2..=30), (3, 2..=10), (4, 2..=5), (5, 2..=3)] {
        for m in ms {
            let n = m.pow(d as u32);
            let iid = (0.5f64.powi(d as i32) - 3f64.powi(-(d as i32))) / n as f64;
            let value = engine(&jittered(m, d).unwrap());
            worst_ratio = worst_ratio.max(value / iid);
            if value >= iid {
                failures.push(format!("m={m} d={d}"));
            }
            checked += 1;
        }
    }
    outcome(
        failures.is_empty(),
        format!("{checked} (m,d) pairs with N > 2, largest jittered/iid ratio {worst_ratio:.4}"),
    )
}

fn criterion_10() -> Outcome {
    let f = |a: f64| pair_family_expected_l2_sq(a).unwrap();
    let anchors = (f(0.5) - 1.0 / 24.0).abs().max((f(1.0) - 1.0 / 12.0).abs()).max((f(0.75) - 7.0 / 96.0).abs());
    let samples: Vec<f64> = (0..50).map(|k| f(0.5 + 0.5 * k as f64 / 49.0)).collect();
    let monotone = samples.windows(2).all(|w| w[0] < w[1]);
    outcome(
        anchors < FAMILY_TOL && monotone,
        format!(
            "anchors 1/24, 1/12, 7/96 max error {anchors:.1e}; strictly increasing at 50 points: {monotone}"
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("rectangle anchors 1/18 and 1/20", criterion_1),
        ("pair gap 3^-d/20 for d=2,3,4", criterion_2),
        ("improvement law for m in {3,4,5,10}", criterion_3),
        ("improvement region matches delta sign, m=3..20", criterion_4),
        ("reference table values within 1%", criterion_5),
        ("telescoping total gain and bounds", criterion_6),
        ("Warnock agrees with quadrature oracle", criterion_7),
        ("Monte-Carlo consistency and reproducibility", criterion_8),
        ("jittered beats iid", criterion_9),
        ("pair family values and monotonicity", criterion_10),
    ];
    let mut failed = 0;
    for (k, (title, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        if !result.ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2}: {title}: {} [{:.2?}]",
            if result.ok { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
