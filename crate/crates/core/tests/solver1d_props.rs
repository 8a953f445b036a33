use proptest::prelude::*;
use stcf::bench::{gen_quadratics_1d, Rng};
use stcf::oracle::subset_oracle;
use stcf::quadform::{Quadratic, TruncatedQuadratic};
use stcf::solver1d::{minimize_sum_1d, objective_1d, TruncatedFunction1d};

fn as_1d(tqs: &[TruncatedQuadratic]) -> Vec<TruncatedFunction1d> {
    tqs.iter().map(|t| TruncatedFunction1d::try_from(t).unwrap()).collect()
}

#[test]
fn generator_instances_match_subset_oracle() {
    for k in 0..500u64 {
        let mut rng = Rng::stream(101, k);
        let n = 1 + rng.below(12) as usize;
        let c = [1.0, 5.0, 10.0][k as usize % 3];
        let tqs = gen_quadratics_1d(n, c, &mut rng).unwrap();
        let fs = as_1d(&tqs);
        let sol = minimize_sum_1d(&fs).unwrap();
        let oracle = subset_oracle(&tqs).unwrap();
        assert!((sol.value - oracle.value).abs() <= 1e-8, "instance {k}: {} vs {}", sol.value, oracle.value);
        assert!((objective_1d(&fs, sol.x[0]) - sol.value).abs() <= 1e-8, "instance {k}: witness");
    }
}

fn arb_term() -> impl Strategy<Value = TruncatedQuadratic> {
    (0.05..20.0f64, -10.0..10.0f64, -5.0..5.0f64, -3.0..8.0f64)
        .prop_map(|(a, m, c, l)| TruncatedQuadratic::new(Quadratic::univariate(a, -a * m, 0.5 * a * m * m + c), l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_instances_match_oracle(tqs in prop::collection::vec(arb_term(), 1..=12)) {
        let fs = as_1d(&tqs);
        let sol = minimize_sum_1d(&fs).unwrap();
        let oracle = subset_oracle(&tqs).unwrap();
        prop_assert!((sol.value - oracle.value).abs() <= 1e-8 * (1.0 + oracle.value.abs()));
        prop_assert!((objective_1d(&fs, sol.x[0]) - sol.value).abs() <= 1e-8 * (1.0 + sol.value.abs()));
    }

    #[test]
    fn no_subset_beats_the_solver(tqs in prop::collection::vec(arb_term(), 1..=10), mask in any::<u16>()) {
        let sol = minimize_sum_1d(&as_1d(&tqs)).unwrap();
        let mut q = Quadratic::zero(1);
        let mut levels = 0.0;
        for (k, t) in tqs.iter().enumerate() {
            levels += t.lambda;
            if mask >> k & 1 == 1 {
                q.add_assign(&t.q.offset(-t.lambda)).unwrap();
            }
        }
        if let Some(v) = q.minimize().value() {
            prop_assert!(v + levels >= sol.value - 1e-8 * (1.0 + sol.value.abs()));
        }
    }
}
