use proptest::prelude::*;
use stcf::geometry2d::{objective_2d, TruncatedFunction2d};
use stcf::oracle::subset_oracle_2d;
use stcf::quadform::{Quadratic, TruncatedQuadratic};
use stcf::solver2d::minimize_sum_2d;

/// Ellipse with semi-axes (a, b), angle θ, centre (u, v) and vertex value z < 0,
/// truncated at 0.
fn ellipse_term(theta: f64, a: f64, b: f64, u: f64, v: f64, z: f64) -> TruncatedFunction2d {
    let (s, c) = theta.sin_cos();
    let (k1, k2) = (2.0 * z.abs() / (a * a), 2.0 * z.abs() / (b * b));
    let a11 = k1 * c * c + k2 * s * s;
    let a12 = (k1 - k2) * c * s;
    let a22 = k1 * s * s + k2 * c * c;
    let b1 = -(a11 * u + a12 * v);
    let b2 = -(a12 * u + a22 * v);
    let cst = 0.5 * (a11 * u * u + 2.0 * a12 * u * v + a22 * v * v) + z;
    TruncatedQuadratic::new(Quadratic::bivariate(a11, a12, a22, [b1, b2], cst), 0.0).unwrap().into()
}

fn instance(max_n: usize) -> impl Strategy<Value = Vec<TruncatedFunction2d>> {
    (1.0f64..10.0).prop_flat_map(move |cc| {
        prop::collection::vec(
            (0.0..std::f64::consts::PI, 0.01f64..0.5, 0.01f64..0.5, 0.0f64..1.0, 0.0f64..1.0, -10.0f64..-1.0),
            1..=max_n,
        )
        .prop_map(move |ps| ps.into_iter().map(|(t, a, b, u, v, z)| ellipse_term(t, a / cc, b, u, v, z)).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_subset_oracle(fs in instance(10)) {
        let s = minimize_sum_2d(&fs).unwrap();
        let o = subset_oracle_2d(&fs).unwrap();
        prop_assert!((s.value - o.value).abs() <= 1e-7, "solver {} oracle {}", s.value, o.value);
        let at = objective_2d(&fs, [s.x[0], s.x[1]]);
        prop_assert!((at - s.value).abs() <= 1e-7, "witness {} value {}", at, s.value);
    }
}

fn regression_instance() -> impl Strategy<Value = Vec<TruncatedFunction2d>> {
    prop::collection::vec((-3.0f64..3.0, -10.0f64..10.0), 1..=10).prop_flat_map(|pts| {
        (Just(pts), 0.5f64..10.0).prop_map(|(pts, lambda)| {
            pts.into_iter()
                .map(|(x, y)| TruncatedQuadratic::new(Quadratic::squared_residual(&[1.0, x], y), lambda).unwrap().into())
                .collect()
        })
    })
}

fn crowded_instance() -> impl Strategy<Value = Vec<TruncatedFunction2d>> {
    prop::collection::vec(
        (0.0..std::f64::consts::PI, 0.05f64..0.5, 0.05f64..0.5, 0.0f64..0.3, 0.0f64..0.3, -10.0f64..-1.0),
        8..=12,
    )
    .prop_map(|ps| ps.into_iter().map(|(t, a, b, u, v, z)| ellipse_term(t, a, b, u, v, z)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn strips_match_subset_oracle(fs in regression_instance()) {
        let s = minimize_sum_2d(&fs).unwrap();
        let o = subset_oracle_2d(&fs).unwrap();
        prop_assert!((s.value - o.value).abs() <= 1e-7 * (1.0 + o.value.abs()), "solver {} oracle {}", s.value, o.value);
        let at = objective_2d(&fs, [s.x[0], s.x[1]]);
        prop_assert!((at - s.value).abs() <= 1e-7 * (1.0 + s.value.abs()));
    }

    #[test]
    fn crowded_match_subset_oracle(fs in crowded_instance()) {
        let s = minimize_sum_2d(&fs).unwrap();
        let o = subset_oracle_2d(&fs).unwrap();
        prop_assert!((s.value - o.value).abs() <= 1e-7, "solver {} oracle {}", s.value, o.value);
    }

    #[test]
    fn every_sampled_cell_is_enumerated(fs in instance(6)) {
        use stcf::geometry2d::contains;
        use stcf::solver2d::enumerate_candidate_sets;
        let sets = enumerate_candidate_sets(&fs).unwrap();
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let p = [-0.6 + 2.2 * i as f64 / n as f64, -0.6 + 2.2 * j as f64 / n as f64];
                let cell: Vec<usize> = (0..fs.len()).filter(|&k| contains(&fs[k], p)).collect();
                prop_assert!(sets.binary_search(&cell).is_ok(), "cell {:?} at {:?} missing from {:?}", cell, p, sets);
            }
        }
    }

    #[test]
    fn permutation_does_not_change_value(fs in instance(8)) {
        let mut rev = fs.clone();
        rev.reverse();
        let a = minimize_sum_2d(&fs).unwrap().value;
        let b = minimize_sum_2d(&rev).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9);
    }
}

fn best_of_five(fs: &[TruncatedFunction2d]) -> f64 {
    (0..5)
        .map(|_| {
            let t = std::time::Instant::now();
            minimize_sum_2d(fs).unwrap();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn doubling_n_stays_near_quadratic() {
    let mut rng = stcf::bench::Rng::new(42);
    let big: Vec<TruncatedFunction2d> =
        stcf::bench::gen_quadratics_2d(100, 5.0, &mut rng).unwrap().into_iter().map(Into::into).collect();
    let small = &big[..50];
    let ratio = best_of_five(&big) / best_of_five(small);
    assert!(ratio <= 4.8, "runtime ratio {ratio}");
}
