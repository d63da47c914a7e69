use proptest::prelude::*;

use rmtlab_core::fredholm::fredholm_value;
use rmtlab_core::ou::{mc_joint_probability, ou_step_entry, path_rng, VarianceClass};
use rmtlab_core::quadrature::{
    joint_probability_quadrature, log_probability_fixed, QuadratureSpec, TauParams,
};
use rmtlab_core::tau::generalized_tau1;
use rmtlab_core::{build_locus, Endpoint, IntervalUnion, TimeGrid, WindowFamily};

fn grid_from(incs: &[f64]) -> TimeGrid {
    TimeGrid::from_increments(incs).unwrap()
}

/// A sorted list of 1..=3 disjoint intervals, possibly with infinite ends.
fn union_strategy() -> impl Strategy<Value = IntervalUnion> {
    (
        prop::collection::btree_set(-40i32..40, 2..=6),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(set, lo_inf, hi_inf)| {
            let mut pts: Vec<f64> = set.into_iter().map(|k| k as f64 / 4.0).collect();
            if pts.len() % 2 == 1 {
                pts.pop();
            }
            let mut e: Vec<Endpoint> = pts.into_iter().map(Endpoint::Finite).collect();
            if lo_inf {
                e[0] = Endpoint::NegInf;
            }
            if hi_inf {
                let k = e.len() - 1;
                e[k] = Endpoint::PosInf;
            }
            IntervalUnion::new(e).unwrap()
        })
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_is_an_involution(u in union_strategy()) {
        let back = u.complement().complement();
        prop_assert_eq!(back.endpoints(), u.endpoints());
        prop_assert_eq!(back.is_closed(), u.is_closed());
    }

    #[test]
    fn complement_partitions_the_line(u in union_strategy(), x in -12.0f64..12.0) {
        // Boundary points belong to exactly one side as well.
        prop_assert!(u.contains(x) != u.complement().contains(x));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn locus_satisfies_its_defining_formulas(incs in prop::collection::vec(0.05f64..3.0, 1..=8)) {
        let grid = grid_from(&incs);
        let l = build_locus(&grid).unwrap();
        let m = incs.len();
        // t2_0 = -1/(1-c_1^2), t2_m = -1/(1-c_m^2),
        // t2_l = -1/(1-c_l^2) - c_{l+1}^2/(1-c_{l+1}^2), c11_k = 2 c_k/(1-c_k^2).
        let c: Vec<f64> = grid.increments().iter().map(|d| (-d).exp()).collect();
        let w = |k: usize| 1.0 / (1.0 - c[k] * c[k]);
        for k in 0..=m {
            let expect = if k == 0 {
                -w(0)
            } else if k == m {
                -w(m - 1)
            } else {
                -(w(k - 1) + c[k] * c[k] * w(k))
            };
            prop_assert!(ulps(l.t2[k], expect) <= 4, "t2[{}] {} vs {}", k, l.t2[k], expect);
        }
        for k in 0..m {
            let expect = 2.0 * c[k] * w(k);
            prop_assert!(ulps(l.c11[k], expect) <= 4, "c11[{}] {} vs {}", k, l.c11[k], expect);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mc_is_monotone_under_common_random_numbers(
        n in 1usize..=2,
        t in 0.2f64..2.0,
        u in -1.0f64..1.0,
        grow in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let grid = TimeGrid::new(vec![0.0, t]).unwrap();
        let small = WindowFamily::half_lines(&[u, u]);
        let large = WindowFamily::half_lines(&[u + grow, u]);
        let a = mc_joint_probability(n, &grid, &small, 400, seed).unwrap();
        let b = mc_joint_probability(n, &grid, &large, 400, seed).unwrap();
        prop_assert!(b.value >= a.value);
    }

    #[test]
    fn mc_is_deterministic(seed in any::<u64>()) {
        let grid = TimeGrid::new(vec![0.0, 0.5]).unwrap();
        let w = WindowFamily::half_lines(&[0.0, 0.2]);
        let a = mc_joint_probability(2, &grid, &w, 200, seed).unwrap();
        let b = mc_joint_probability(2, &grid, &w, 200, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn quadrature_is_a_probability_and_monotone(
        incs in prop::collection::vec(0.2f64..2.0, 1..=2),
        us in prop::collection::vec(-1.5f64..1.5, 3),
        grow in 0.05f64..1.0,
    ) {
        let grid = grid_from(&incs);
        let k = incs.len() + 1;
        let spec = QuadratureSpec::default();
        let small = WindowFamily::half_lines(&us[..k]);
        let mut bigger = us[..k].to_vec();
        bigger[0] += grow;
        let large = WindowFamily::half_lines(&bigger);
        let a = joint_probability_quadrature(1, &grid, &small, &spec).unwrap().estimate;
        let b = joint_probability_quadrature(1, &grid, &large, &spec).unwrap().estimate;
        prop_assert!((0.0..=1.0).contains(&a.value));
        prop_assert!(b.value >= a.value - 1e-12);
    }

    #[test]
    fn quadrature_is_time_reversible(
        incs in prop::collection::vec(0.2f64..2.0, 1..=2),
        us in prop::collection::vec(-1.5f64..1.5, 3),
    ) {
        let grid = grid_from(&incs);
        let k = incs.len() + 1;
        let w = WindowFamily::new(
            us[..k].iter().enumerate().map(|(l, u)| {
                if l % 2 == 0 { IntervalUnion::half_line(*u) } else { IntervalUnion::interval(*u - 1.0, *u + 0.5).unwrap() }
            }).collect(),
            &grid,
        ).unwrap();
        let spec = QuadratureSpec::default();
        let a = joint_probability_quadrature(1, &grid, &w, &spec).unwrap().estimate.value;
        let b = joint_probability_quadrature(1, &grid.reversed(), &w.reversed(), &spec).unwrap().estimate.value;
        prop_assert!((a - b).abs() <= 1e-11, "{} vs {}", a, b);
    }

    #[test]
    fn doubling_stays_within_the_error_estimate(
        t in 0.2f64..2.0,
        u in -1.5f64..1.5,
        v in -1.5f64..1.5,
        n in 1usize..=2,
    ) {
        let grid = TimeGrid::new(vec![0.0, t]).unwrap();
        let w = WindowFamily::half_lines(&[u, v]);
        let spec = QuadratureSpec::default();
        let r = joint_probability_quadrature(n, &grid, &w, &spec).unwrap();
        let again = log_probability_fixed(n, &grid, &w, &spec, 2 * r.panels).unwrap().exp();
        prop_assert!((again - r.estimate.value).abs() <= r.estimate.stderr.max(4.0 * f64::EPSILON));
    }

    #[test]
    fn tau_is_log_convex_in_the_first_linear_parameter(
        t in 0.2f64..2.0,
        s in -0.5f64..0.5,
        a in -2.0f64..0.0,
        b in 0.2f64..2.0,
    ) {
        let grid = TimeGrid::new(vec![0.0, t]).unwrap();
        let base = TauParams::locus(&grid).unwrap();
        let w = vec![IntervalUnion::interval(a, b).unwrap(), IntervalUnion::half_line(b)];
        let spec = QuadratureSpec { panels: 8, ..QuadratureSpec::default() };
        let h = 0.05;
        let f = |d: f64| {
            let mut p = base.clone();
            p.t1[0] = s + d;
            generalized_tau1(&p, &w, &spec).unwrap().ln()
        };
        prop_assert!(f(h) - 2.0 * f(0.0) + f(-h) >= -1e-10);
    }

    #[test]
    fn fredholm_is_a_probability_and_monotone(
        t in 0.3f64..2.0,
        u in -2.0f64..1.5,
        v in -2.0f64..1.5,
        grow in 0.05f64..1.0,
    ) {
        let times = [0.0, t];
        let small = [IntervalUnion::half_line(u), IntervalUnion::half_line(v)];
        let large = [IntervalUnion::half_line(u + grow), IntervalUnion::half_line(v)];
        let a = fredholm_value(&times, &small, 40, 12.0).unwrap();
        let b = fredholm_value(&times, &large, 40, 12.0).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b >= a - 1e-13);
    }
}

#[test]
fn fredholm_node_doubling_is_spectral() {
    let w = [
        IntervalUnion::half_line(-1.0),
        IntervalUnion::half_line(0.5),
    ];
    let times = [0.0, 1.0];
    let v: Vec<f64> = [6usize, 12, 24, 48]
        .iter()
        .map(|&n| fredholm_value(&times, &w, n, 12.0).unwrap())
        .collect();
    let d1 = (v[1] - v[0]).abs();
    let d2 = (v[2] - v[1]).abs();
    let d3 = (v[3] - v[2]).abs();
    assert!(d2 <= d1 / 10.0, "{v:?}");
    assert!(d3 <= d2 / 10.0 || d3 < 1e-14, "{v:?}");
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn ou_semigroup_in_distribution() {
    let n = 100_000;
    let (s1, s2, x0) = (0.3, 0.7, 1.2);
    let mut rng = path_rng(11, 0);
    let two: Vec<f64> = (0..n)
        .map(|_| {
            let y = ou_step_entry(x0, s1, VarianceClass::Diag, &mut rng).unwrap();
            ou_step_entry(y, s2, VarianceClass::Diag, &mut rng).unwrap()
        })
        .collect();
    let mut rng = path_rng(12, 0);
    let one: Vec<f64> = (0..n)
        .map(|_| ou_step_entry(x0, s1 + s2, VarianceClass::Diag, &mut rng).unwrap())
        .collect();
    // Critical value at alpha = 1e-3: sqrt(-ln(alpha/2)/2) * sqrt(2/n).
    let crit = (-(0.0005f64).ln() / 2.0).sqrt() * (2.0 / n as f64).sqrt();
    let d = ks(two, one);
    assert!(d < crit, "KS {d} >= {crit}");
}
