use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use stcf::apps::{
    detect_outliers, place_shape_with, restore_signal, Family, Neighborhood, RegressionProblem, RestorationProblem,
    ShapeKind, ShapeSpec,
};
use stcf::baselines::imo_restore;
use stcf::bench::{gen_signal, Rng};

/// Joint minimum over (β, γ) by enumerating which γ_i are nonzero; a free
/// γ_i absorbs its residual exactly.
fn gaussian_brute_force(rp: &RegressionProblem) -> f64 {
    let n = rp.n();
    let p = rp.p();
    (0u32..1 << n)
        .map(|mask| {
            let rest: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 0).collect();
            let penalty = rp.lambda * (n - rest.len()) as f64;
            if rest.is_empty() {
                return penalty;
            }
            if rest.len() <= p {
                // an exact fit exists when the rows are independent; fall through otherwise
                let x = DMatrix::from_fn(rest.len(), p, |r, c| rp.x[rest[r]][c]);
                if x.rank(1e-10) == rest.len() {
                    return penalty;
                }
            }
            let x = DMatrix::from_fn(rest.len(), p, |r, c| rp.x[rest[r]][c]);
            let y = DVector::from_iterator(rest.len(), rest.iter().map(|&i| rp.y[i]));
            let beta = x.clone().svd(true, true).solve(&y, 1e-12).unwrap();
            penalty + (&y - &x * beta).norm_squared()
        })
        .fold(f64::INFINITY, f64::min)
}

fn arb_gaussian() -> impl Strategy<Value = RegressionProblem> {
    prop::collection::vec((-3.0..3.0f64, -1.0..1.0f64, any::<bool>(), 2.0..8.0f64), 3..=9).prop_map(|rows| {
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y = rows.iter().map(|r| 1.0 + 2.0 * r.0 + r.1 + if r.2 { r.3 } else { 0.0 }).collect();
        RegressionProblem::simple(&xs, y, 2.25, Family::Gaussian).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(80))]

    #[test]
    fn gaussian_reduction_matches_joint_minimum(rp in arb_gaussian()) {
        prop_assume!(rp.x.iter().any(|r| (r[1] - rp.x[0][1]).abs() > 1e-3));
        let fit = detect_outliers(&rp).unwrap();
        let brute = gaussian_brute_force(&rp);
        prop_assert!((fit.objective - brute).abs() <= 1e-7 * (1.0 + brute.abs()), "{} vs {}", fit.objective, brute);
    }

    #[test]
    fn mirroring_symmetric_shapes_changes_nothing(
        pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..14),
        which in 0usize..3,
    ) {
        let kind = [ShapeKind::Circle { radius: 0.2 }, ShapeKind::Square { side: 0.3 }, ShapeKind::RegularHexagon { circumradius: 0.2 }][which];
        let spec = ShapeSpec { kind, points: pts.iter().map(|&(x, y)| ([x, y], 1.0)).collect() };
        let a = place_shape_with(&spec, true).unwrap();
        let b = place_shape_with(&spec, false).unwrap();
        prop_assert_eq!(a.covered_weight, b.covered_weight);
    }
}

/// Σ_{i∉S} (e^{x_iβ} − x_iβ y_i) minimized by bisection on the derivative.
fn poisson_rest_min(rp: &RegressionProblem, rest: &[usize]) -> f64 {
    let f = |b: f64| rest.iter().map(|&i| { let e = rp.x[i][0] * b; e.exp() - e * rp.y[i] }).sum::<f64>();
    let g = |b: f64| rest.iter().map(|&i| rp.x[i][0] * ((rp.x[i][0] * b).exp() - rp.y[i])).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 { hi = mid } else { lo = mid }
    }
    f(0.5 * (lo + hi))
}

#[test]
fn poisson_reduction_matches_joint_minimum() {
    for k in 0..60u64 {
        let mut rng = Rng::stream(505, k);
        let n = 2 + rng.below(7) as usize;
        let xs: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.5, 2.0)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| {
                let mean = (0.8 * x).exp() * if rng.uniform() < 0.25 { 6.0 } else { 1.0 };
                (mean + rng.normal() * mean.sqrt()).round().max(1.0)
            })
            .collect();
        let rp = RegressionProblem::new(xs.iter().map(|&v| vec![v]).collect(), y, 2.0, Family::Poisson).unwrap();
        let fit = detect_outliers(&rp).unwrap();
        let brute = (0u32..1 << n)
            .map(|mask| {
                let rest: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 0).collect();
                let flagged: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| rp.lambda + rp.y[i] - rp.y[i] * rp.y[i].ln()).sum();
                flagged + if rest.is_empty() { 0.0 } else { poisson_rest_min(&rp, &rest) }
            })
            .fold(f64::INFINITY, f64::min);
        assert!((fit.objective - brute).abs() <= 1e-6 * (1.0 + brute.abs()), "instance {k}: {} vs {brute}", fit.objective);
    }
}

#[test]
fn restoration_rarely_loses_to_imo() {
    let mut worse = 0;
    for r in 0..30u64 {
        let (_, noisy) = gen_signal(&mut Rng::stream(606, r));
        let rp = RestorationProblem { observations: noisy.clone(), w: 4.0, lambda: 9.0, neighborhood: Neighborhood::Chain };
        let ours = rp.objective(&restore_signal(&rp).unwrap().x);
        let imo = rp.objective(&imo_restore(&noisy, Neighborhood::Chain, 4.0, 9.0, 1e-10, 10_000).unwrap().x);
        if ours > imo + 1e-9 {
            worse += 1;
        }
    }
    assert!(worse * 5 <= 30, "restoration above IMO in {worse} of 30 replicates");
}
