use statrs::distribution::{ContinuousCDF, Exp, Normal, Uniform};
use stcf::bench::{run_experiment, EllipseParams, Experiment, Rng};

const DRAWS: usize = 10_000;

/// Kolmogorov–Smirnov statistic against a reference CDF.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value at α = 0.01.
fn critical() -> f64 {
    1.628 / (DRAWS as f64).sqrt()
}

fn draws(seed: u64, f: impl Fn(&mut Rng) -> f64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..DRAWS).map(|_| f(&mut rng)).collect()
}

#[test]
fn normal_draws() {
    let d = Normal::new(0.0, 1.0).unwrap();
    assert!(ks_statistic(draws(1, |r| r.normal()), |x| d.cdf(x)) < critical());
}

#[test]
fn exponential_draws() {
    let d = Exp::new(0.1).unwrap();
    assert!(ks_statistic(draws(2, |r| r.exponential(0.1)), |x| d.cdf(x)) < critical());
}

#[test]
fn generator_marginals() {
    let checks: [(&str, Box<dyn Fn(&EllipseParams) -> f64>, Uniform); 5] = [
        ("theta", Box::new(|p| p.theta), Uniform::new(0.0, std::f64::consts::PI).unwrap()),
        ("a", Box::new(|p| p.a * 5.0), Uniform::new(0.01, 0.5).unwrap()),
        ("b", Box::new(|p| p.b), Uniform::new(0.01, 0.5).unwrap()),
        ("u", Box::new(|p| p.u), Uniform::new(0.0, 1.0).unwrap()),
        ("z", Box::new(|p| p.z), Uniform::new(-10.0, -1.0).unwrap()),
    ];
    let mut rng = Rng::new(3);
    let samples: Vec<EllipseParams> = (0..DRAWS).map(|_| EllipseParams::sample(5.0, &mut rng)).collect();
    for (name, get, d) in checks {
        let xs = samples.iter().map(|p| get(p)).collect();
        let ks = ks_statistic(xs, |x| d.cdf(x));
        assert!(ks < critical(), "{name}: D = {ks}");
    }
}

#[test]
fn reports_are_bitwise_reproducible() {
    for name in Experiment::NAMES {
        let exp = match name {
            "outliers" => Experiment::Outliers { n: 30, outlier_frac: 0.3, leverage: 0.0, lambda: 6.25 },
            "quadratics2d" => Experiment::Quadratics2d { n: 10, complexity: 5.0 },
            other => Experiment::named(other).unwrap(),
        };
        let a = run_experiment(&exp, 4, 77).unwrap().to_csv();
        let b = run_experiment(&exp, 4, 77).unwrap().to_csv();
        assert_eq!(a, b, "{name}");
        assert_ne!(a, run_experiment(&exp, 4, 78).unwrap().to_csv(), "{name}");
    }
}

#[test]
fn signal_noise_level() {
    let mut total = 0.0;
    for r in 0..100 {
        let (t, y) = stcf::bench::gen_signal(&mut Rng::stream(5, r));
        assert_eq!(y.len(), 100);
        total += t.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / 100.0;
    }
    let mean_abs = total / 100.0;
    assert!((mean_abs - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02, "{mean_abs}");
}
