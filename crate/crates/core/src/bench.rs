//! Seeded generators, scoring metrics and the simulation drivers.
//!
//! Every replicate draws from its own stream, `Rng::stream(seed, r)`, so
//! results do not depend on scheduling. Reports reduce per-replicate values
//! in replicate order.

use std::f64::consts::PI;
use std::time::Instant;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;

use crate::apps::{
    detect_outliers, place_shape, restore_signal, Family, Neighborhood, RegressionProblem, RestorationProblem,
    ShapeKind, ShapeSpec,
};
use crate::baselines::{dc_minimize, imo_restore, theta_ipod};
use crate::error::{Error, Result};
use crate::geometry2d::{Point, TruncatedFunction2d};
use crate::quadform::{truncated_sum, Quadratic, TruncatedQuadratic};
use crate::solver2d::minimize_sum_2d;

/// Tolerance of the success rule: a method succeeds when its value is no
/// greater than the best value by more than this.
pub const SUCCESS_TOL: f64 = 1e-5;

/// SplitMix64 (Steele, Lea and Flood): state advanced by `0x9E3779B97F4A7C15`,
/// output mixed by `(z ^ z>>30)·0xBF58476D1CE4E5B9`, `(z ^ z>>27)·0x94D049BB133111EB`,
/// `z ^ z>>31`.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: SplitMix64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: SplitMix64::seed_from_u64(seed) }
    }

    /// Independent stream `k` derived from `seed`.
    pub fn stream(seed: u64, k: u64) -> Self {
        let mut m = SplitMix64::seed_from_u64(seed ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03));
        Rng::new(m.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Exponential with the given rate, `−ln(1 − u)/rate`.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.uniform()).ln() / rate
    }

    /// Standard normal by Box–Muller, `√(−2 ln(1 − u₁)) cos(2π u₂)`; one
    /// variate per pair of uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Sampled geometry of one 2-D test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseParams {
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl EllipseParams {
    pub fn sample(complexity: f64, rng: &mut Rng) -> Self {
        let theta = rng.uniform_in(0.0, PI);
        let a = rng.uniform_in(0.01, 0.5) / complexity;
        let b = rng.uniform_in(0.01, 0.5);
        let u = rng.uniform();
        let v = rng.uniform();
        let z = rng.uniform_in(-10.0, -1.0);
        EllipseParams { theta, a, b, u, v, z }
    }

    /// Vertex `(u, v)` with value `z`; zero level set is the ellipse with
    /// semi-axis `a` along angle `θ` and `b` across it.
    pub fn quadratic(&self) -> Quadratic {
        let (s, c) = self.theta.sin_cos();
        let k1 = 2.0 * self.z.abs() / (self.a * self.a);
        let k2 = 2.0 * self.z.abs() / (self.b * self.b);
        let h11 = k1 * c * c + k2 * s * s;
        let h12 = (k1 - k2) * c * s;
        let h22 = k1 * s * s + k2 * c * c;
        let (u, v) = (self.u, self.v);
        let b = [-(h11 * u + h12 * v), -(h12 * u + h22 * v)];
        let c0 = 0.5 * (h11 * u * u + 2.0 * h12 * u * v + h22 * v * v) + self.z;
        Quadratic::bivariate(h11, h12, h22, b, c0)
    }
}

fn check_complexity(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("complexity", "must be positive"))
    }
}

/// `n` random truncated quadratics on the plane, all truncated at 0.
pub fn gen_quadratics_2d(n: usize, complexity: f64, rng: &mut Rng) -> Result<Vec<TruncatedQuadratic>> {
    check_complexity(complexity)?;
    (0..n).map(|_| TruncatedQuadratic::new(EllipseParams::sample(complexity, rng).quadratic(), 0.0)).collect()
}

/// One-dimensional analogue: vertex `u ~ U(0,1)`, value `z ~ U(−10,−1)` and
/// zero crossings at `u ± a` with `a ~ U(0.01, 0.5)/C`.
pub fn gen_quadratics_1d(n: usize, complexity: f64, rng: &mut Rng) -> Result<Vec<TruncatedQuadratic>> {
    check_complexity(complexity)?;
    (0..n)
        .map(|_| {
            let a = rng.uniform_in(0.01, 0.5) / complexity;
            let u = rng.uniform();
            let z = rng.uniform_in(-10.0, -1.0);
            let k = 2.0 * z.abs() / (a * a);
            TruncatedQuadratic::new(Quadratic::univariate(k, -k * u, 0.5 * k * u * u + z), 0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierData {
    pub problem: RegressionProblem,
    /// `true` for the planted outliers.
    pub truth: Vec<bool>,
}

/// Simple regression with `β = (1, 2)`, `ε ~ N(0, 1)` and the first
/// `round(n·frac)` observations shifted by `γ ~ Exp(0.1) + 3`. With
/// `leverage > 0` those observations take `x ~ U(L, L+1)`, otherwise all
/// `x ~ U(−15, 15)`.
pub fn gen_outlier_data(n: usize, outlier_frac: f64, leverage: f64, lambda: f64, rng: &mut Rng) -> Result<OutlierData> {
    if !(0.0..1.0).contains(&outlier_frac) {
        return Err(Error::invalid("outlier_frac", "must lie in [0, 1)"));
    }
    let k = (n as f64 * outlier_frac).round() as usize;
    let mut xs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let outlier = i < k;
        let x = if outlier && leverage > 0.0 { rng.uniform_in(leverage, leverage + 1.0) } else { rng.uniform_in(-15.0, 15.0) };
        let gamma = if outlier { rng.exponential(0.1) + 3.0 } else { 0.0 };
        xs.push(x);
        y.push(1.0 + 2.0 * x + gamma + rng.normal());
    }
    let problem = RegressionProblem::simple(&xs, y, lambda, Family::Gaussian)?;
    Ok(OutlierData { problem, truth: (0..n).map(|i| i < k).collect() })
}

pub const SIGNAL_LEN: usize = 100;

/// Piecewise template on 100 points, five pieces of 20: zero, a ramp up to
/// 5, the constant 5, two sine periods of amplitude 2.25 about 5, and a
/// quadratic decay to 0.
pub fn signal_truth() -> Vec<f64> {
    (0..SIGNAL_LEN)
        .map(|i| {
            let t = (i % 20) as f64;
            match i / 20 {
                0 => 0.0,
                1 => 5.0 * (t + 1.0) / 20.0,
                2 => 5.0,
                3 => 5.0 + 2.25 * (2.0 * PI * t / 10.0).sin(),
                _ => 5.0 * ((19.0 - t) / 20.0).powi(2),
            }
        })
        .collect()
}

/// `(truth, truth + N(0, 1))`.
pub fn gen_signal(rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let truth = signal_truth();
    let noisy = truth.iter().map(|t| t + rng.normal()).collect();
    (truth, noisy)
}

/// Step image, 0.25 on the left half and 0.75 on the right, plus a 0.5
/// square in the centre of the left half; noise `N(0, noise_sd²)`.
pub fn gen_step_image(width: usize, height: usize, noise_sd: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let truth: Vec<f64> = (0..width * height)
        .map(|k| {
            let (r, c) = (k / width, k % width);
            if c >= width / 2 {
                0.75
            } else if (height / 4..3 * height / 4).contains(&r) && (width / 8..3 * width / 8).contains(&c) {
                0.5
            } else {
                0.25
            }
        })
        .collect();
    let noisy = truth.iter().map(|t| t + noise_sd * rng.normal()).collect();
    (truth, noisy)
}

/// Uniform points in the unit square, weight 1.
pub fn gen_points(n: usize, rng: &mut Rng) -> Vec<(Point, f64)> {
    (0..n).map(|_| ([rng.uniform(), rng.uniform()], 1.0)).collect()
}

/// Fraction of true outliers left unflagged; `None` without outliers.
pub fn masking(flags: &[bool], truth: &[bool]) -> Option<f64> {
    let total = truth.iter().filter(|&&t| t).count();
    (total > 0).then(|| flags.iter().zip(truth).filter(|&(&f, &t)| t && !f).count() as f64 / total as f64)
}

/// Fraction of normal observations flagged; `None` when all are outliers.
pub fn swamping(flags: &[bool], truth: &[bool]) -> Option<f64> {
    let total = truth.iter().filter(|&&t| !t).count();
    (total > 0).then(|| flags.iter().zip(truth).filter(|&(&f, &t)| !t && f).count() as f64 / total as f64)
}

/// Per method, the fraction of replicates where it came within
/// [`SUCCESS_TOL`] of the best method. `values[r][m]` is method `m` on
/// replicate `r`.
pub fn success_rates(values: &[Vec<f64>]) -> Vec<f64> {
    let m = values.first().map_or(0, |r| r.len());
    let mut wins = vec![0usize; m];
    for row in values {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (w, &v) in wins.iter_mut().zip(row) {
            if v <= best + SUCCESS_TOL {
                *w += 1;
            }
        }
    }
    wins.into_iter().map(|w| w as f64 / values.len().max(1) as f64).collect()
}

pub fn relative_loss(value: f64, best: f64) -> f64 {
    (value - best).abs() / best.abs()
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    (s / truth.len() as f64).sqrt()
}

/// Numbers in reports and CLI output.
pub fn format_number(v: f64) -> String {
    format!("{v:.12}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Outliers { n: usize, outlier_frac: f64, leverage: f64, lambda: f64 },
    Quadratics2d { n: usize, complexity: f64 },
    Placement { n_points: usize, shapes: Vec<ShapeKind> },
    Signal { w: f64, lambda: f64 },
}

impl Experiment {
    pub const NAMES: [&'static str; 4] = ["outliers", "quadratics2d", "placement", "signal"];

    /// Default settings for each named experiment.
    pub fn named(name: &str) -> Result<Self> {
        Ok(match name {
            "outliers" => Experiment::Outliers { n: 100, outlier_frac: 0.6, leverage: 0.0, lambda: 6.25 },
            "quadratics2d" => Experiment::Quadratics2d { n: 50, complexity: 10.0 },
            "placement" => Experiment::Placement {
                n_points: 30,
                shapes: vec![
                    ShapeKind::Circle { radius: 0.2 },
                    ShapeKind::Square { side: 0.3 },
                    ShapeKind::RegularHexagon { circumradius: 0.2 },
                ],
            },
            "signal" => Experiment::Signal { w: 4.0, lambda: 9.0 },
            other => {
                return Err(Error::invalid("name", format!("unknown experiment `{other}`; expected one of {:?}", Self::NAMES)))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Outliers { .. } => "outliers",
            Experiment::Quadratics2d { .. } => "quadratics2d",
            Experiment::Placement { .. } => "placement",
            Experiment::Signal { .. } => "signal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over `√replicates`.
    pub stderr: f64,
    /// Replicates contributing to this row.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub replicates: usize,
    pub seed: u64,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn row(&self, method: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,metric,mean,stderr,replicates,seed\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                r.metric,
                format_number(r.mean),
                format_number(r.stderr),
                r.replicates,
                self.seed
            ));
        }
        s
    }
}

/// One replicate's measurements: `(method, metric, value)`, `None` when the
/// metric does not apply.
type Measurements = Vec<(String, &'static str, Option<f64>)>;

const ITER_TOL: f64 = 1e-8;
const ITER_MAX: usize = 10_000;

pub fn run_experiment(exp: &Experiment, replicates: usize, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let per: Vec<Measurements> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| replicate(exp, &mut Rng::stream(seed, r)))
        .collect::<Result<_>>()?;
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut keys: Vec<(String, &'static str)> = Vec::new();
    for m in &per {
        for (method, metric, _) in m {
            if !keys.iter().any(|(a, b)| a == method && b == metric) {
                keys.push((method.clone(), metric));
            }
        }
    }
    for (method, metric) in keys {
        let vals: Vec<f64> = per
            .iter()
            .filter_map(|m| m.iter().find(|(a, b, _)| *a == method && *b == metric).and_then(|t| t.2))
            .collect();
        let k = vals.len();
        let mean = if k > 0 { vals.iter().sum::<f64>() / k as f64 } else { f64::NAN };
        let stderr = if k > 1 {
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        rows.push(ReportRow { method, metric: metric.to_string(), mean, stderr, replicates: k });
    }
    Ok(ExperimentReport {
        name: exp.name().to_string(),
        rows,
        replicates,
        seed,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn scored(methods: &[&str], values: &[f64], out: &mut Measurements) {
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    for (m, &v) in methods.iter().zip(values) {
        out.push((m.to_string(), "success", Some(if v <= best + SUCCESS_TOL { 1.0 } else { 0.0 })));
        out.push((m.to_string(), "relative_loss", Some(relative_loss(v, best))));
        out.push((m.to_string(), "objective", Some(v)));
    }
}

fn replicate(exp: &Experiment, rng: &mut Rng) -> Result<Measurements> {
    let mut out = Measurements::new();
    match exp {
        &Experiment::Outliers { n, outlier_frac, leverage, lambda } => {
            let data = gen_outlier_data(n, outlier_frac, leverage, lambda, rng)?;
            let proposed = detect_outliers(&data.problem)?;
            let ipod = theta_ipod(&data.problem, None, ITER_TOL, ITER_MAX)?.fit;
            for (m, flags) in [("proposed", &proposed.flags), ("ipod", &ipod.flags)] {
                out.push((m.into(), "masking", masking(flags, &data.truth)));
                out.push((m.into(), "swamping", swamping(flags, &data.truth)));
            }
        }
        &Experiment::Quadratics2d { n, complexity } => {
            let tqs = gen_quadratics_2d(n, complexity, rng)?;
            let x0 = [rng.uniform(), rng.uniform()];
            let fs: Vec<TruncatedFunction2d> = tqs.iter().cloned().map(Into::into).collect();
            let exact = minimize_sum_2d(&fs)?.value;
            let dc = dc_minimize(&tqs, &x0, ITER_TOL, ITER_MAX)?.solution.value;
            scored(&["proposed", "dc"], &[exact, dc], &mut out);
        }
        Experiment::Placement { n_points, shapes } => {
            let points = gen_points(*n_points, rng);
            for kind in shapes {
                let spec = ShapeSpec { kind: *kind, points: points.clone() };
                let p = place_shape(&spec)?;
                let label = match kind {
                    ShapeKind::Circle { .. } => "circle",
                    ShapeKind::Square { .. } => "square",
                    ShapeKind::RegularHexagon { .. } => "hexagon",
                };
                out.push((label.into(), "covered", Some(p.covered_weight)));
            }
        }
        &Experiment::Signal { w, lambda } => {
            let (truth, noisy) = gen_signal(rng);
            let rp = RestorationProblem { observations: noisy.clone(), w, lambda, neighborhood: Neighborhood::Chain };
            let proposed = restore_signal(&rp)?;
            let imo = imo_restore(&noisy, Neighborhood::Chain, w, lambda, ITER_TOL, ITER_MAX)?;
            let dc = dc_minimize(&signal_terms(&rp)?, &noisy, ITER_TOL, ITER_MAX)?.solution;
            let xs = [&proposed.x, &imo.x, &dc.x];
            let values: Vec<f64> = xs.iter().map(|x| rp.objective(x)).collect();
            let methods = ["proposed", "imo", "dc"];
            scored(&methods, &values, &mut out);
            for (m, x) in methods.iter().zip(xs) {
                out.push((m.to_string(), "rmse", Some(rmse(x, &truth))));
            }
        }
    }
    Ok(out)
}

/// The restoration objective as dense truncated quadratics: data terms with
/// `λ = ∞`, then one term per neighbour pair.
pub fn signal_terms(rp: &RestorationProblem) -> Result<Vec<TruncatedQuadratic>> {
    rp.validate()?;
    let d = rp.observations.len();
    let unit = |pairs: &[(usize, f64)]| {
        let mut c = vec![0.0; d];
        for &(i, v) in pairs {
            c[i] = v;
        }
        c
    };
    let mut tqs: Vec<TruncatedQuadratic> = rp
        .observations
        .iter()
        .enumerate()
        .map(|(i, &y)| TruncatedQuadratic::new(Quadratic::squared_residual(&unit(&[(i, 1.0)]), y), f64::INFINITY))
        .collect::<Result<_>>()?;
    for (i, j) in rp.edges() {
        let q = Quadratic::squared_residual(&unit(&[(i, 1.0), (j, -1.0)]), 0.0).scaled(rp.w);
        tqs.push(TruncatedQuadratic::new(q, rp.w * rp.lambda)?);
    }
    debug_assert!((truncated_sum(&tqs, &rp.observations).unwrap_or(0.0) - rp.objective(&rp.observations)).abs() < 1e-6);
    Ok(tqs)
}
