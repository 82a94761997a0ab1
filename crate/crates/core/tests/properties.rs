use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use stratdisc_core::discrepancy::{l2_sq_quadrature, l2_sq_warnock};
use stratdisc_core::expectation::{
    corner_gain, delta_pair, expected_l2_sq, iid_expected_l2_sq, jittered_closed_form,
    pair_family_expected_l2_sq,
};
use stratdisc_core::experiments::mc_expected;
use stratdisc_core::partitions::{every_second_column, jittered, modified_pair, variant};
use stratdisc_core::sampling::{iid_replication, sample_stratum, stratified_sample, substream};
use stratdisc_core::{
    BoxStratum, DomainBox, Orientation, PairPosition, PointSet, Stratum, TrianglePrism, VariantName,
};

fn arb_stratum() -> impl Strategy<Value = Stratum> {
    let boxes = (prop::collection::vec(-1.0..1.0f64, 3), prop::collection::vec(0.05..2.0f64, 3))
        .prop_map(|(lo, sides)| Stratum::Box(BoxStratum::new(lo, sides).unwrap()));
    let prisms = (prop::collection::vec(-1.0..1.0f64, 3), 0.05..2.0f64, any::<bool>()).prop_map(
        |(anchor, b, upper)| {
            let orientation = if upper { Orientation::Upper } else { Orientation::Lower };
            Stratum::Prism(TrianglePrism::new(anchor, b, orientation).unwrap())
        },
    );
    prop_oneof![boxes, prisms]
}

fn arb_points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..=1.0f64, dim), 1..=max_n)
}

fn arb_variant() -> impl Strategy<Value = VariantName> {
    prop::sample::select(VariantName::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn corner_volume_is_monotone_and_q_is_a_probability(
        stratum in arb_stratum(),
        x in prop::collection::vec(-1.5..3.5f64, 3),
        step in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let y: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
        let vx = stratum.corner_volume(&x);
        let vy = stratum.corner_volume(&y);
        prop_assert!(vx <= vy + 1e-14 * stratum.volume());
        prop_assert!(vx >= 0.0 && vy <= stratum.volume() * (1.0 + 1e-14));
        let q = stratum.q(&x);
        prop_assert!((0.0..=1.0).contains(&q));
    }

    #[test]
    fn warnock_is_permutation_invariant_and_nonnegative(
        rows in arb_points(30, 2),
        seed in any::<u64>(),
    ) {
        let value = l2_sq_warnock(&PointSet::from_points(rows.clone()).unwrap()).unwrap();
        prop_assert!(value >= 0.0);
        let mut shuffled = rows;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in (1..shuffled.len()).rev() {
            shuffled.swap(k, rng.gen_range(0..=k));
        }
        let again = l2_sq_warnock(&PointSet::from_points(shuffled).unwrap()).unwrap();
        prop_assert!((value - again).abs() <= 1e-14 * value.max(1e-300) + 1e-17);
    }

    #[test]
    fn normalized_discrepancy_is_affine_invariant(
        rows in arb_points(12, 2),
        lower in prop::collection::vec(-3.0..3.0f64, 2),
        sides in prop::collection::vec(0.1..5.0f64, 2),
    ) {
        let upper: Vec<f64> = lower.iter().zip(&sides).map(|(l, s)| l + s).collect();
        let domain = DomainBox::new(lower, upper).unwrap();
        let mapped: Vec<Vec<f64>> = rows.iter().map(|r| domain.from_unit(r)).collect();
        let unit = l2_sq_quadrature(&PointSet::from_points(rows.clone()).unwrap(), &DomainBox::unit(2)).unwrap();
        let scaled = l2_sq_quadrature(&PointSet::from_points(mapped).unwrap(), &domain).unwrap();
        let warnock = l2_sq_warnock(&PointSet::from_points(rows).unwrap()).unwrap();
        prop_assert!((unit - scaled).abs() < 1e-12, "{unit} vs {scaled}");
        prop_assert!((unit - warnock).abs() < 1e-12);
    }

    #[test]
    fn stratum_probabilities_sum_to_the_corner_fraction(
        name in arb_variant(),
        m in 2usize..12,
        x in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let partition = variant(m, name).unwrap();
        let total: f64 = (0..partition.len()).map(|i| partition.q(i, &x)).sum();
        let expected = partition.len() as f64 * x[0] * x[1];
        prop_assert!((total - expected).abs() < 1e-11, "{total} vs {expected}");
    }

    #[test]
    fn jittered_engine_matches_closed_form(m in 1usize..12, d in 1usize..4) {
        let engine = expected_l2_sq(&jittered(m, d).unwrap()).unwrap().value;
        let closed = jittered_closed_form(m, d);
        prop_assert!((engine - closed).abs() <= 1e-12 * closed);
    }

    #[test]
    fn pair_family_is_increasing(a in 0.5..1.0f64, t in 0.0..1.0f64) {
        let b = a + (1.0 - a) * t;
        prop_assume!(b > a + 1e-9);
        prop_assert!(pair_family_expected_l2_sq(a).unwrap() < pair_family_expected_l2_sq(b).unwrap());
    }

    #[test]
    fn random_pair_sets_tile_the_square(
        m in 2usize..9,
        picks in prop::collection::vec((0usize..8, 0usize..9), 0..6),
    ) {
        // Keep the admissible, non-overlapping picks.
        let mut taken = vec![false; m * m];
        let mut positions = Vec::new();
        for (i, j) in picks {
            let z = PairPosition::new(i, j);
            if !z.is_admissible(m) {
                continue;
            }
            let (col, row) = z.cells(m);
            if taken[col * m + row] || taken[(col + 1) * m + row] {
                continue;
            }
            taken[col * m + row] = true;
            taken[(col + 1) * m + row] = true;
            positions.push(z);
        }
        let modified = modified_pair(m, 2, &positions).unwrap();
        prop_assert!(modified.validate(4_000, 17).is_valid());

        // Away from the modified rectangles the strata are the jittered ones.
        let base = jittered(m, 2).unwrap();
        for (k, (a, b)) in base.strata().iter().zip(modified.strata()).enumerate() {
            let claimed = taken[(k / m) * m + k % m];
            prop_assert_eq!(claimed, a != b, "stratum {}", k);
        }

        // Each disjoint pair contributes its own gain.
        let direct = expected_l2_sq(&base).unwrap().value - expected_l2_sq(&modified).unwrap().value;
        let summed: f64 = positions.iter().map(|&z| delta_pair(m, z).unwrap()).sum();
        prop_assert!((direct - summed).abs() < 1e-13);
    }
}

#[test]
fn named_variants_validate() {
    for m in 2..=10 {
        for name in VariantName::ALL {
            let report = variant(m, name).unwrap().validate(5_000, m as u64);
            assert!(report.is_valid(), "m={m} {name}: {report}");
        }
    }
    for (m, d) in [(2, 3), (3, 3), (2, 4)] {
        let p = modified_pair(m, d, &[PairPosition::CORNER]).unwrap();
        assert!(p.validate(5_000, 3).is_valid());
    }
}

#[test]
fn all_variant_sites_are_the_improving_sites() {
    for m in 2..=30 {
        let mut expected: Vec<PairPosition> = every_second_column(m)
            .into_iter()
            .flat_map(|i| (0..m).map(move |j| PairPosition::new(i, j)))
            .filter(|&z| delta_pair(m, z).unwrap() > 0.0)
            .collect();
        let mut got = VariantName::All.positions(m);
        expected.sort_by_key(|z| (z.i, z.j));
        got.sort_by_key(|z| (z.i, z.j));
        assert_eq!(got, expected, "m={m}");
    }
}

#[test]
fn corner_pair_gain_in_two_and_three_dimensions() {
    for d in [2, 3] {
        for m in [2, 3] {
            let base = expected_l2_sq(&jittered(m, d).unwrap()).unwrap().value;
            let modified = expected_l2_sq(&modified_pair(m, d, &[PairPosition::CORNER]).unwrap())
                .unwrap()
                .value;
            let expected = 0.4 * 3f64.powi(-(d as i32)) * (m as f64).powi(-3 * d as i32);
            assert!(((base - modified) - expected).abs() < 1e-15, "m={m} d={d}");
            assert!((corner_gain(m, d) - expected).abs() < 1e-18);
        }
    }
}

/// Cell probabilities of the lower triangle `u + 2v ≤ 2` in `[0,2]×[0,1]`
/// from a fine midpoint grid.
fn triangle_cell_areas(cells: usize, fine: usize) -> Vec<f64> {
    let mut counts = vec![0u64; cells * cells];
    let mut inside = 0u64;
    for a in 0..2 * fine {
        let u = (a as f64 + 0.5) / fine as f64;
        for b in 0..fine {
            let v = (b as f64 + 0.5) / fine as f64;
            if u + 2.0 * v <= 2.0 {
                let cu = ((u / 2.0) * cells as f64) as usize;
                let cv = (v * cells as f64) as usize;
                counts[cu * cells + cv] += 1;
                inside += 1;
            }
        }
    }
    counts.iter().map(|&c| c as f64 / inside as f64).collect()
}

#[test]
fn triangle_sampling_is_uniform() {
    let cells = 4;
    let draws = 100_000;
    let areas = triangle_cell_areas(cells, 2_000);
    let critical = |df: usize| ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - 1e-3);

    for orientation in [Orientation::Lower, Orientation::Upper] {
        let prism = Stratum::Prism(TrianglePrism::new(vec![0.0, 0.0, 0.0], 1.0, orientation).unwrap());
        let mut rng = substream(2024, 0, 0, 3);
        let mut counts = vec![0u64; cells * cells];
        let mut third = [0u64; 4];
        for _ in 0..draws {
            let p = sample_stratum(&prism, &mut rng);
            // The upper triangle is the lower one rotated by half a turn.
            let (u, v) = match orientation {
                Orientation::Lower => (p[0], p[1]),
                Orientation::Upper => (2.0 - p[0], 1.0 - p[1]),
            };
            let cu = ((u / 2.0 * cells as f64) as usize).min(cells - 1);
            let cv = ((v * cells as f64) as usize).min(cells - 1);
            counts[cu * cells + cv] += 1;
            third[((p[2] * 4.0) as usize).min(3)] += 1;
        }
        let mut statistic = 0.0;
        let mut used = 0;
        for (count, area) in counts.iter().zip(&areas) {
            if *area == 0.0 {
                assert_eq!(*count, 0, "{orientation:?}: draw outside the triangle");
                continue;
            }
            let expected = area * draws as f64;
            statistic += (*count as f64 - expected).powi(2) / expected;
            used += 1;
        }
        assert!(statistic < critical(used - 1), "{orientation:?}: chi² {statistic}");

        let expected = draws as f64 / 4.0;
        let statistic: f64 = third.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(statistic < critical(3), "{orientation:?} third axis: chi² {statistic}");
    }
}

#[test]
fn corner_counts_follow_the_poisson_binomial_mean() {
    let partition = variant(6, VariantName::All).unwrap();
    let x = [0.37, 0.81];
    let q: Vec<f64> = (0..partition.len()).map(|i| partition.q(i, &x)).collect();
    let mean: f64 = q.iter().sum();
    let variance: f64 = q.iter().map(|p| p * (1.0 - p)).sum();
    let reps = 4_000;
    let mut total = 0usize;
    for r in 0..reps {
        let sample = stratdisc_core::sampling::stratified_sample(&partition, 1_000 + r).unwrap();
        total += sample.points().filter(|p| p[0] <= x[0] && p[1] <= x[1]).count();
    }
    let observed = total as f64 / reps as f64;
    let stderr = (variance / reps as f64).sqrt();
    assert!((observed - mean).abs() < 4.0 * stderr, "{observed} vs {mean} ± {stderr}");
}

#[test]
fn pair_family_matches_numerical_integration() {
    // ¼ Σ ∫ F(1 − F) over the two distribution functions, midpoint rule.
    let oracle = |a: f64| {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let x = (k as f64 + 0.5) * h;
            let f1 = (x / a).min(1.0);
            let f2 = 2.0 * x - f1;
            total += f1 * (1.0 - f1) + f2 * (1.0 - f2);
        }
        0.25 * total * h
    };
    for k in 0..=10 {
        let a = 0.5 + 0.05 * k as f64;
        let value = pair_family_expected_l2_sq(a).unwrap();
        assert!((value - oracle(a)).abs() < 1e-9, "a={a}");
    }
    assert!(pair_family_expected_l2_sq(0.4).is_err());
}

#[test]
fn iid_closed_form() {
    assert!((iid_expected_l2_sq(2, 1).unwrap() - 1.0 / 12.0).abs() < 1e-16);
    let (n, d, reps) = (10, 2, 20_000u64);
    let values: Vec<f64> = (0..reps)
        .map(|r| l2_sq_warnock(&iid_replication(n, d, 5, r).unwrap()).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / reps as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let expected = iid_expected_l2_sq(n, d).unwrap();
    assert!((mean - expected).abs() < 4.0 * (var / reps as f64).sqrt(), "{mean} vs {expected}");
}

#[test]
fn mc_estimate_is_deterministic_with_positive_stderr() {
    let partition = variant(5, VariantName::P01).unwrap();
    let a = mc_expected(&partition, 500, 9).unwrap();
    let b = mc_expected(&partition, 500, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.stderr > 0.0);
    assert_ne!(a, mc_expected(&partition, 500, 10).unwrap());
    // Sample seeds feed through unchanged.
    assert_eq!(stratified_sample(&partition, 9).unwrap().seed(), 9);
}
