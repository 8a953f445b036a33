//! Application reductions: outlier detection in regression, shape
//! placement, and signal/image restoration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex1d::PoissonTerm;
use crate::error::{Error, Result};
use crate::geometry2d::{ConvexRegion, Point, TruncatedFunction2d, CONTAINS_SLACK};
use crate::quadform::{Quadratic, TruncatedQuadratic};
use crate::solver1d::{minimize_sum_1d, TruncatedFunction1d};
use crate::solver2d::minimize_sum_2d;
use crate::solverhd::{minimize_ccd, CcdOptions, CcdOutcome, SparseTerm, SparseTruncatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
}

/// `y_i = x_iᵀβ + γ_i + ε_i` with an ℓ0 penalty `λ` per nonzero `γ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionProblem {
    /// Design rows, each of length `p`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub family: Family,
}

impl RegressionProblem {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, lambda: f64, family: Family) -> Result<Self> {
        let rp = RegressionProblem { x, y, lambda, family };
        rp.validate()?;
        Ok(rp)
    }

    /// Design `[1, x_i]` for simple regression.
    pub fn simple(xs: &[f64], y: Vec<f64>, lambda: f64, family: Family) -> Result<Self> {
        Self::new(xs.iter().map(|&v| vec![1.0, v]).collect(), y, lambda, family)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.x.len() });
        }
        let p = self.p();
        if p == 0 || n < p {
            return Err(Error::invalid("x", format!("need n ≥ p ≥ 1, got n = {n}, p = {p}")));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: row.len() });
        }
        if self.x.iter().flatten().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "entries must be finite"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive and finite"));
        }
        if self.family == Family::Poisson && self.y.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("y", "Poisson responses must be nonnegative"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    fn linear(&self, i: usize, beta: &[f64]) -> f64 {
        self.x[i].iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Per-observation truncation level: `λ` for Gaussian data and
    /// `λ − y log y + y` (with `0 log 0 = 0`) for Poisson data.
    pub fn level(&self, i: usize) -> f64 {
        match self.family {
            Family::Gaussian => self.lambda,
            Family::Poisson => self.lambda - xlogx(self.y[i]) + self.y[i],
        }
    }

    /// The penalized objective in `(β, γ)`; `γ_i = −∞` stands for the limit
    /// of a zero Poisson count fitted exactly.
    pub fn objective(&self, beta: &[f64], gamma: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                let eta = self.linear(i, beta);
                let g = gamma[i];
                let penalty = if g != 0.0 { self.lambda } else { 0.0 };
                let fit = match self.family {
                    Family::Gaussian => (self.y[i] - eta - g).powi(2),
                    Family::Poisson if g == f64::NEG_INFINITY => 0.0,
                    Family::Poisson => (eta + g).exp() - (eta + g) * self.y[i],
                };
                fit + penalty
            })
            .sum()
    }

    /// Untruncated loss of observation `i` at `β`.
    fn loss(&self, i: usize, beta: &[f64]) -> f64 {
        let eta = self.linear(i, beta);
        match self.family {
            Family::Gaussian => (self.y[i] - eta).powi(2),
            Family::Poisson => eta.exp() - eta * self.y[i],
        }
    }
}

fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFit {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub flags: Vec<bool>,
    pub objective: f64,
}

impl OutlierFit {
    /// Fills in `γ` from `β`: an observation is an outlier when its loss
    /// is not below its truncation level.
    pub fn from_beta(rp: &RegressionProblem, beta: Vec<f64>) -> Self {
        let gamma: Vec<f64> = (0..rp.n())
            .map(|i| {
                if rp.loss(i, &beta) < rp.level(i) {
                    0.0
                } else {
                    let eta = rp.linear(i, &beta);
                    match rp.family {
                        Family::Gaussian => rp.y[i] - eta,
                        Family::Poisson if rp.y[i] == 0.0 => f64::NEG_INFINITY,
                        Family::Poisson => rp.y[i].ln() - eta,
                    }
                }
            })
            .collect();
        Self::from_parts(rp, beta, gamma)
    }

    pub fn from_parts(rp: &RegressionProblem, beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        let flags = gamma.iter().map(|&g| g != 0.0).collect();
        let objective = rp.objective(&beta, &gamma);
        OutlierFit { beta, gamma, flags, objective }
    }
}

/// The terms `min{(y_i − x_iᵀβ)², λ}` in `β`.
pub fn reduce_outliers_gaussian(rp: &RegressionProblem) -> Result<Vec<TruncatedQuadratic>> {
    rp.validate()?;
    if rp.family != Family::Gaussian {
        return Err(Error::invalid("family", "Gaussian family required"));
    }
    (0..rp.n())
        .map(|i| TruncatedQuadratic::new(Quadratic::squared_residual(&rp.x[i], rp.y[i]), rp.lambda))
        .collect()
}

fn check_design(rp: &RegressionProblem) -> Result<()> {
    let p = rp.p();
    let x = DMatrix::from_fn(rp.n(), p, |i, j| rp.x[i][j]);
    let xtx = x.transpose() * &x;
    let svd = xtx.singular_values();
    let max = svd.max();
    if !(svd.min() > 1e-12 * max) {
        return Err(Error::Singular("design matrix does not have full column rank".into()));
    }
    Ok(())
}

/// Joint minimization in `(β, γ)` through the reduced truncated problem in `β`.
pub fn detect_outliers(rp: &RegressionProblem) -> Result<OutlierFit> {
    detect_outliers_with(rp, CcdOptions::default())
}

pub fn detect_outliers_with(rp: &RegressionProblem, opts: CcdOptions) -> Result<OutlierFit> {
    rp.validate()?;
    check_design(rp)?;
    let p = rp.p();
    let beta = match (rp.family, p) {
        (Family::Gaussian, 1) => {
            let fs: Vec<TruncatedFunction1d> = (0..rp.n())
                .map(|i| {
                    let xi = rp.x[i][0];
                    TruncatedFunction1d::quadratic(2.0 * xi * xi, -2.0 * xi * rp.y[i], rp.y[i] * rp.y[i], rp.lambda)
                })
                .collect();
            minimize_sum_1d(&fs)?.x
        }
        (Family::Gaussian, 2) => {
            let fs: Vec<TruncatedFunction2d> = reduce_outliers_gaussian(rp)?.into_iter().map(Into::into).collect();
            minimize_sum_2d(&fs)?.x
        }
        (Family::Poisson, 1) => {
            let fs: Vec<TruncatedFunction1d> = (0..rp.n())
                .map(|i| TruncatedFunction1d::convex(PoissonTerm { offset: 0.0, scale: rp.x[i][0], y: rp.y[i] }, rp.level(i)))
                .collect();
            minimize_sum_1d(&fs)?.x
        }
        _ => regression_ccd(rp, opts)?.solution.x,
    };
    Ok(OutlierFit::from_beta(rp, beta))
}

/// The reduced problem as a sparse sum over the `p` coefficients.
pub fn regression_sum(rp: &RegressionProblem) -> Result<SparseTruncatedSum> {
    let p = rp.p();
    let support: Vec<usize> = (0..p).collect();
    let terms = (0..rp.n())
        .map(|i| match rp.family {
            Family::Gaussian => SparseTerm::SquaredResidual {
                support: support.clone(),
                coefs: rp.x[i].clone(),
                target: rp.y[i],
                weight: 1.0,
                lambda: rp.lambda,
            },
            Family::Poisson => SparseTerm::Poisson {
                support: support.clone(),
                coefs: rp.x[i].clone(),
                offset: 0.0,
                y: rp.y[i],
                lambda: rp.level(i),
            },
        })
        .collect();
    SparseTruncatedSum::new(p, terms)
}

fn regression_ccd(rp: &RegressionProblem, opts: CcdOptions) -> Result<CcdOutcome> {
    let sum = regression_sum(rp)?;
    minimize_ccd(&sum, &vec![0.0; rp.p()], opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Circle { radius: f64 },
    /// Axis-aligned.
    Square { side: f64 },
    /// Flat top and bottom, vertices at multiples of 60° from the x-axis.
    RegularHexagon { circumradius: f64 },
}

impl ShapeKind {
    /// The shape centred at the origin.
    pub fn region(&self) -> Result<ConvexRegion> {
        match *self {
            ShapeKind::Circle { radius } => {
                positive("radius", radius)?;
                Ok(ConvexRegion::Disk { center: [0.0, 0.0], radius })
            }
            ShapeKind::Square { side } => {
                positive("side", side)?;
                let h = side / 2.0;
                ConvexRegion::polygon(vec![[-h, -h], [h, -h], [h, h], [-h, h]])
            }
            ShapeKind::RegularHexagon { circumradius } => {
                positive("circumradius", circumradius)?;
                let v = (0..6)
                    .map(|k| {
                        let t = std::f64::consts::PI / 3.0 * k as f64;
                        [circumradius * t.cos(), circumradius * t.sin()]
                    })
                    .collect();
                ConvexRegion::polygon(v)
            }
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be positive and finite"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Points with positive weights.
    pub points: Vec<(Point, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Where the shape's centre goes.
    pub location: Point,
    pub covered_weight: f64,
    pub covered: Vec<usize>,
}

/// Translation of the shape maximizing the total weight of covered points.
pub fn place_shape(spec: &ShapeSpec) -> Result<Placement> {
    place_shape_with(spec, true)
}

/// As [`place_shape`]; `mirror = false` skips reflecting the shape, which
/// only matters for shapes that are not centrally symmetric.
pub fn place_shape_with(spec: &ShapeSpec, mirror: bool) -> Result<Placement> {
    if spec.points.is_empty() {
        return Err(Error::invalid("points", "at least one point is required"));
    }
    for (p, w) in &spec.points {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::invalid("points", "coordinates must be finite"));
        }
        positive("weight", *w)?;
    }
    let shape = spec.kind.region()?;
    let base = if mirror { shape.mirrored() } else { shape.clone() };
    let fs: Vec<TruncatedFunction2d> = spec
        .points
        .iter()
        .map(|&(p, w)| TruncatedFunction2d::Indicator { region: base.translated(p), weight: w })
        .collect();
    let sol = minimize_sum_2d(&fs)?;
    let location = [sol.x[0], sol.x[1]];
    let placed = shape.translated(location);
    let covered: Vec<usize> =
        (0..spec.points.len()).filter(|&i| placed.contains(spec.points[i].0, CONTAINS_SLACK)).collect();
    let covered_weight = covered.iter().map(|&i| spec.points[i].1).sum();
    Ok(Placement { location, covered_weight, covered })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Neighborhood {
    /// `x_i` and `x_{i+1}`.
    Chain,
    /// Right and down neighbours on a row-major grid.
    Grid4 { width: usize, height: usize },
}

impl Neighborhood {
    /// Each unordered neighbour pair once, as `(i, j)` with `i < j`.
    pub fn edges(&self, len: usize) -> Vec<(usize, usize)> {
        match *self {
            Neighborhood::Chain => (1..len).map(|i| (i - 1, i)).collect(),
            Neighborhood::Grid4 { width, height } => {
                let mut e = Vec::with_capacity(2 * width * height);
                for r in 0..height {
                    for c in 0..width {
                        let i = r * width + c;
                        if c + 1 < width {
                            e.push((i, i + 1));
                        }
                        if r + 1 < height {
                            e.push((i, i + width));
                        }
                    }
                }
                e
            }
        }
    }
}

/// `Σ (x_i − y_i)² + w Σ_{(i,j)} min{(x_i − x_j)², λ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationProblem {
    pub observations: Vec<f64>,
    pub w: f64,
    pub lambda: f64,
    pub neighborhood: Neighborhood,
}

impl RestorationProblem {
    pub fn validate(&self) -> Result<()> {
        positive("w", self.w)?;
        positive("lambda", self.lambda)?;
        if self.observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations", "must be finite"));
        }
        if let Neighborhood::Grid4 { width, height } = self.neighborhood {
            if width == 0 || height == 0 {
                return Err(Error::invalid("width", "grid dimensions must be positive"));
            }
            if width * height != self.observations.len() {
                return Err(Error::DimensionMismatch { expected: width * height, got: self.observations.len() });
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighborhood.edges(self.observations.len())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let data: f64 = x.iter().zip(&self.observations).map(|(a, b)| (a - b).powi(2)).sum();
        let smooth: f64 = self.edges().iter().map(|&(i, j)| (x[i] - x[j]).powi(2).min(self.lambda)).sum();
        data + self.w * smooth
    }

    /// Data terms with `λ = ∞`, neighbour terms `min{w(x_i − x_j)², wλ}`.
    pub fn sparse_sum(&self) -> Result<SparseTruncatedSum> {
        self.validate()?;
        let d = self.observations.len();
        let mut terms: Vec<SparseTerm> = self
            .observations
            .iter()
            .enumerate()
            .map(|(j, &y)| SparseTerm::SquaredResidual {
                support: vec![j],
                coefs: vec![1.0],
                target: y,
                weight: 1.0,
                lambda: f64::INFINITY,
            })
            .collect();
        terms.extend(self.edges().into_iter().map(|(i, j)| SparseTerm::SquaredResidual {
            support: vec![i, j],
            coefs: vec![1.0, -1.0],
            target: 0.0,
            weight: self.w,
            lambda: self.w * self.lambda,
        }));
        SparseTruncatedSum::new(d, terms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restoration {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Coordinate descent started at the observations.
pub fn restore(rp: &RestorationProblem, opts: CcdOptions) -> Result<Restoration> {
    let sum = rp.sparse_sum()?;
    let out = minimize_ccd(&sum, &rp.observations, opts)?;
    Ok(Restoration {
        objective: out.solution.value,
        iterations: out.solution.iterations,
        converged: out.solution.converged,
        x: out.solution.x,
    })
}

pub fn restore_signal(rp: &RestorationProblem) -> Result<Restoration> {
    if rp.neighborhood != Neighborhood::Chain {
        return Err(Error::invalid("neighborhood", "signals use the chain neighbourhood"));
    }
    restore(rp, CcdOptions::default())
}

pub fn restore_image(rp: &RestorationProblem) -> Result<Restoration> {
    if !matches!(rp.neighborhood, Neighborhood::Grid4 { .. }) {
        return Err(Error::invalid("neighborhood", "images use the 4-neighbour grid"));
    }
    restore(rp, CcdOptions::default())
}

/// Least-squares coefficients of `y` on the rows of `x`.
pub fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len());
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let chol = (xm.transpose() * &xm)
        .cholesky()
        .ok_or_else(|| Error::Singular("design matrix does not have full column rank".into()))?;
    Ok(chol.solve(&(xm.transpose() * yv)).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_term() {
        let rp = RegressionProblem::new(vec![vec![1.0]], vec![5.0], 4.0, Family::Gaussian).unwrap();
        let t = &reduce_outliers_gaussian(&rp).unwrap()[0];
        for b in [0.0, 3.0, 5.0, 8.0] {
            assert!((t.eval(&[b]).unwrap() - ((5.0 - b) * (5.0f64 - b)).min(4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn clean_data_gives_least_squares() {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 / 2.0).collect();
        let y: Vec<f64> = xs.iter().enumerate().map(|(k, &x)| 1.0 + 2.0 * x + 0.1 * ((k * 37 % 11) as f64 - 5.0)).collect();
        let rp = RegressionProblem::simple(&xs, y.clone(), 1e6, Family::Gaussian).unwrap();
        let fit = detect_outliers(&rp).unwrap();
        assert!(fit.flags.iter().all(|f| !f));
        let ls = least_squares(&rp.x, &y).unwrap();
        assert!((fit.beta[0] - ls[0]).abs() < 1e-6 && (fit.beta[1] - ls[1]).abs() < 1e-6);
    }

    #[test]
    fn gross_outlier_is_flagged() {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 - 10.0).collect();
        let mut y: Vec<f64> = xs.iter().enumerate().map(|(k, &x)| 1.0 + 2.0 * x + 0.3 * ((k * 7 % 5) as f64 - 2.0)).collect();
        y[4] += 10.0;
        let rp = RegressionProblem::simple(&xs, y, 6.25, Family::Gaussian).unwrap();
        let fit = detect_outliers(&rp).unwrap();
        assert!(fit.flags[4]);
        assert_eq!(fit.flags.iter().filter(|&&f| f).count(), 1);
        assert!((fit.beta[1] - 2.0).abs() < 0.1);
        let reduced: f64 = reduce_outliers_gaussian(&rp).unwrap().iter().map(|t| t.eval(&fit.beta).unwrap()).sum();
        assert!((fit.objective - reduced).abs() < 1e-8);
    }

    #[test]
    fn poisson_zero_count_uses_limit() {
        let rp = RegressionProblem::new(vec![vec![1.0]; 4], vec![0.0, 3.0, 2.0, 4.0], 2.0, Family::Poisson).unwrap();
        assert_eq!(rp.level(0), 2.0);
        let beta = vec![10.0];
        let fit = OutlierFit::from_beta(&rp, beta);
        assert_eq!(fit.gamma[0], f64::NEG_INFINITY);
        assert!(fit.objective.is_finite());
    }

    #[test]
    fn poisson_objective_matches_reduced_sum() {
        let xs = [0.1, 0.5, 0.9, 1.3, 1.7, 2.1];
        let y = vec![1.0, 2.0, 0.0, 4.0, 30.0, 9.0];
        let rp = RegressionProblem::new(xs.iter().map(|&v| vec![v]).collect(), y, 3.0, Family::Poisson).unwrap();
        let fit = detect_outliers(&rp).unwrap();
        let reduced: f64 = (0..rp.n()).map(|i| rp.loss(i, &fit.beta).min(rp.level(i))).sum();
        // the per-observation constant from γ_i ≠ 0 is folded into λ*
        assert!((fit.objective - reduced).abs() < 1e-8, "{} {}", fit.objective, reduced);
    }

    fn pts(v: &[(f64, f64)]) -> Vec<(Point, f64)> {
        v.iter().map(|&(x, y)| ([x, y], 1.0)).collect()
    }

    #[test]
    fn one_point_is_covered() {
        let spec = ShapeSpec { kind: ShapeKind::Circle { radius: 1.0 }, points: vec![([0.3, -0.2], 2.5)] };
        let p = place_shape(&spec).unwrap();
        assert_eq!(p.covered_weight, 2.5);
        assert_eq!(p.covered, vec![0]);
    }

    #[test]
    fn far_points_cannot_share_a_circle() {
        let spec = ShapeSpec { kind: ShapeKind::Circle { radius: 1.0 }, points: pts(&[(0.0, 0.0), (3.0, 0.0)]) };
        assert_eq!(place_shape(&spec).unwrap().covered_weight, 1.0);
    }

    #[test]
    fn square_covers_cluster() {
        let spec = ShapeSpec {
            kind: ShapeKind::Square { side: 1.0 },
            points: pts(&[(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.5, 0.5), (2.2, 2.2)]),
        };
        let p = place_shape(&spec).unwrap();
        assert_eq!(p.covered_weight, 5.0);
        assert_eq!(place_shape_with(&spec, false).unwrap().covered_weight, 5.0);
    }

    #[test]
    fn hexagon_is_flat_topped() {
        let ConvexRegion::Polygon { vertices } = (ShapeKind::RegularHexagon { circumradius: 1.0 }).region().unwrap() else {
            panic!()
        };
        assert!((vertices[1][1] - vertices[2][1]).abs() < 1e-15);
        assert_eq!(vertices[0], [1.0, 0.0]);
    }

    #[test]
    fn constant_signal_is_unchanged() {
        let rp = RestorationProblem { observations: vec![2.0; 30], w: 4.0, lambda: 9.0, neighborhood: Neighborhood::Chain };
        let r = restore_signal(&rp).unwrap();
        assert_eq!(r.x, rp.observations);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn step_edge_survives() {
        let obs: Vec<f64> = (0..40).map(|k| if k < 20 { 0.0 } else { 10.0 }).collect();
        let rp = RestorationProblem { observations: obs.clone(), w: 4.0, lambda: 9.0, neighborhood: Neighborhood::Chain };
        let r = restore_signal(&rp).unwrap();
        assert!(r.x[20] - r.x[19] > 3.0);
        assert!(r.objective <= rp.objective(&obs));
    }

    #[test]
    fn grid_edges_count() {
        let e = Neighborhood::Grid4 { width: 256, height: 256 }.edges(256 * 256);
        assert_eq!(256 * 256 + e.len(), 196_096);
    }
}
