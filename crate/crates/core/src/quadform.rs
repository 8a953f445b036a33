//! Quadratic forms `½xᵀAx + bᵀx + c`, running sums of them, and closed-form
//! minimization including the rank-deficient cases.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative pivot tolerance for rank decisions.
pub const PIVOT_RTOL: f64 = 1e-12;

/// A quadratic form in `dim` variables. `A` is stored row-major and kept symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl Quadratic {
    pub fn zero(dim: usize) -> Self {
        Quadratic {
            dim,
            a: vec![0.0; dim * dim],
            b: vec![0.0; dim],
            c: 0.0,
        }
    }

    /// Builds a quadratic from a square matrix given as rows. The matrix is
    /// symmetrized as `(A + Aᵀ)/2`.
    pub fn new(a: &[Vec<f64>], b: &[f64], c: f64) -> Result<Self> {
        let dim = b.len();
        if dim == 0 {
            return Err(Error::invalid("b", "quadratic must have at least one variable"));
        }
        if a.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
        }
        let mut flat = Vec::with_capacity(dim * dim);
        for row in a {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Ok(Self::from_flat(dim, flat, b.to_vec(), c))
    }

    /// Row-major constructor; symmetrizes.
    pub fn from_flat(dim: usize, mut a: Vec<f64>, b: Vec<f64>, c: f64) -> Self {
        assert_eq!(a.len(), dim * dim, "A must be dim×dim");
        assert_eq!(b.len(), dim, "b must have length dim");
        for i in 0..dim {
            for j in (i + 1)..dim {
                let m = 0.5 * (a[i * dim + j] + a[j * dim + i]);
                a[i * dim + j] = m;
                a[j * dim + i] = m;
            }
        }
        Quadratic { dim, a, b, c }
    }

    /// One-dimensional `½a x² + b x + c`.
    pub fn univariate(a: f64, b: f64, c: f64) -> Self {
        Quadratic { dim: 1, a: vec![a], b: vec![b], c }
    }

    /// Two-dimensional form from the upper triangle `[[a11, a12], [a12, a22]]`.
    pub fn bivariate(a11: f64, a12: f64, a22: f64, b: [f64; 2], c: f64) -> Self {
        Quadratic {
            dim: 2,
            a: vec![a11, a12, a12, a22],
            b: b.to_vec(),
            c,
        }
    }

    /// `(y − aᵀx)²` expanded into quadratic form.
    pub fn squared_residual(coefs: &[f64], target: f64) -> Self {
        let dim = coefs.len();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                a[i * dim + j] = 2.0 * coefs[i] * coefs[j];
            }
        }
        let b = coefs.iter().map(|&v| -2.0 * target * v).collect();
        Quadratic { dim, a, b, c: target * target }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.dim + j]
    }

    pub fn a_flat(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            quad += x[i] * ax;
        }
        let lin: f64 = self.b.iter().zip(x).map(|(b, x)| b * x).sum();
        0.5 * quad + lin + self.c
    }

    /// `Ax + b`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let row = &self.a[i * d..(i + 1) * d];
                row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b[i]
            })
            .collect()
    }

    pub fn max_abs_a(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn norm_b(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Quadratic {
            dim: self.dim,
            a: self.a.iter().map(|v| v * s).collect(),
            b: self.b.iter().map(|v| v * s).collect(),
            c: self.c * s,
        }
    }

    /// Shifts the constant term.
    pub fn offset(&self, delta: f64) -> Self {
        let mut q = self.clone();
        q.c += delta;
        q
    }

    pub fn add_assign(&mut self, other: &Quadratic) -> Result<()> {
        self.combine(other, 1.0)
    }

    pub fn sub_assign(&mut self, other: &Quadratic) -> Result<()> {
        self.combine(other, -1.0)
    }

    fn combine(&mut self, other: &Quadratic, sign: f64) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        for (a, o) in self.a.iter_mut().zip(&other.a) {
            *a += sign * o;
        }
        for (b, o) in self.b.iter_mut().zip(&other.b) {
            *b += sign * o;
        }
        self.c += sign * other.c;
        Ok(())
    }

    pub fn minimize(&self) -> Minimum {
        self.minimize_scaled(self.max_abs_a(), self.norm_b())
    }

    /// Minimizes using externally supplied magnitudes for the rank and range
    /// tolerances. Running sums pass the magnitudes of their summands so that
    /// cancellation residue is not mistaken for curvature.
    pub fn minimize_scaled(&self, a_scale: f64, b_scale: f64) -> Minimum {
        let a_scale = a_scale.max(self.max_abs_a());
        let b_scale = b_scale.max(self.norm_b());
        let pivot = PIVOT_RTOL * a_scale;
        let range_tol = 1e-9 * (1.0 + b_scale);
        let (eigvals, eigvecs) = self.symmetric_eigen();
        let d = self.dim;
        let mut x = vec![0.0; d];
        let mut null_sq = 0.0;
        let mut full_rank = true;
        for k in 0..d {
            let v = &eigvecs[k * d..(k + 1) * d];
            let proj: f64 = v.iter().zip(&self.b).map(|(v, b)| v * b).sum();
            let lam = eigvals[k];
            if lam < -pivot {
                return Minimum::Unbounded;
            }
            if lam <= pivot {
                full_rank = false;
                null_sq += proj * proj;
            } else {
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi -= proj / lam * vi;
                }
            }
        }
        if null_sq.sqrt() > range_tol {
            return Minimum::Unbounded;
        }
        let value = self.eval_unchecked(&x);
        if full_rank {
            Minimum::Point { x, value }
        } else {
            Minimum::Flat { x, value }
        }
    }

    /// Eigenvalues ascending and eigenvectors stored contiguously, one per
    /// eigenvalue.
    fn symmetric_eigen(&self) -> (Vec<f64>, Vec<f64>) {
        match self.dim {
            1 => (vec![self.a[0]], vec![1.0]),
            2 => {
                let (vals, vecs) = sym_eigen_2x2(self.a[0], self.a[1], self.a[3]);
                (
                    vals.to_vec(),
                    vec![vecs[0][0], vecs[0][1], vecs[1][0], vecs[1][1]],
                )
            }
            d => {
                let m = DMatrix::from_row_slice(d, d, &self.a);
                let eig = SymmetricEigen::new(m);
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
                let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let mut vecs = Vec::with_capacity(d * d);
                for &i in &order {
                    let col: DVector<f64> = eig.eigenvectors.column(i).into_owned();
                    vecs.extend(col.iter());
                }
                (vals, vecs)
            }
        }
    }
}

/// Eigen-decomposition of `[[p, q], [q, r]]`; eigenvalues ascending with
/// unit eigenvectors.
pub fn sym_eigen_2x2(p: f64, q: f64, r: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mean = 0.5 * (p + r);
    let half_diff = 0.5 * (p - r);
    let rad = half_diff.hypot(q);
    let phi = 0.5 * (2.0 * q).atan2(p - r);
    let (s, c) = phi.sin_cos();
    // (c, s) belongs to the larger eigenvalue.
    ([mean - rad, mean + rad], [[-s, c], [c, s]])
}

/// Result of minimizing a quadratic.
#[derive(Debug, Clone, PartialEq)]
pub enum Minimum {
    /// Unique minimizer (`A` positive definite).
    Point { x: Vec<f64>, value: f64 },
    /// `A` singular, `b` in its range: the least-norm minimizer.
    Flat { x: Vec<f64>, value: f64 },
    Unbounded,
}

impl Minimum {
    pub fn value(&self) -> Option<f64> {
        match self {
            Minimum::Point { value, .. } | Minimum::Flat { value, .. } => Some(*value),
            Minimum::Unbounded => None,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Minimum::Point { x, .. } | Minimum::Flat { x, .. } => Some(x),
            Minimum::Unbounded => None,
        }
    }

    pub fn into_parts(self) -> Option<(Vec<f64>, f64)> {
        match self {
            Minimum::Point { x, value } | Minimum::Flat { x, value } => Some((x, value)),
            Minimum::Unbounded => None,
        }
    }
}

/// A quadratic paired with its truncation level. `lambda` may be `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedQuadratic {
    pub q: Quadratic,
    pub lambda: f64,
}

impl TruncatedQuadratic {
    pub fn new(q: Quadratic, lambda: f64) -> Result<Self> {
        if lambda.is_nan() || lambda == f64::NEG_INFINITY {
            return Err(Error::invalid("lambda", "must be finite or +inf"));
        }
        Ok(TruncatedQuadratic { q, lambda })
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `min{q(x), λ}`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.q.eval(x)?.min(self.lambda))
    }

    pub fn is_truncatable(&self) -> bool {
        self.lambda.is_finite()
    }
}

/// Sum of `Σ min{q_k(x), λ_k}` over a list of truncated quadratics.
pub fn truncated_sum(terms: &[TruncatedQuadratic], x: &[f64]) -> Result<f64> {
    terms.iter().map(|t| t.eval(x)).sum()
}

/// A running sum of quadratics over an index set.
#[derive(Debug, Clone)]
pub struct ActiveSum {
    indices: BTreeSet<usize>,
    total: Quadratic,
    a_mag: f64,
    b_mag: f64,
}

impl ActiveSum {
    pub fn new(dim: usize) -> Self {
        ActiveSum {
            indices: BTreeSet::new(),
            total: Quadratic::zero(dim),
            a_mag: 0.0,
            b_mag: 0.0,
        }
    }

    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.indices
    }

    pub fn total(&self) -> &Quadratic {
        &self.total
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.contains(&k)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn add(&mut self, k: usize, q: &Quadratic) -> Result<()> {
        if q.dim() != self.total.dim() {
            return Err(Error::DimensionMismatch { expected: self.total.dim(), got: q.dim() });
        }
        if !self.indices.insert(k) {
            return Err(Error::DuplicateIndex(k));
        }
        self.total.add_assign(q)?;
        self.a_mag += q.max_abs_a();
        self.b_mag += q.norm_b();
        Ok(())
    }

    pub fn remove(&mut self, k: usize, q: &Quadratic) -> Result<()> {
        if q.dim() != self.total.dim() {
            return Err(Error::DimensionMismatch { expected: self.total.dim(), got: q.dim() });
        }
        if !self.indices.remove(&k) {
            return Err(Error::MissingIndex(k));
        }
        if self.indices.is_empty() {
            self.reset();
        } else {
            self.total.sub_assign(q)?;
            self.a_mag = (self.a_mag - q.max_abs_a()).max(0.0);
            self.b_mag = (self.b_mag - q.norm_b()).max(0.0);
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.total = Quadratic::zero(self.total.dim());
        self.a_mag = 0.0;
        self.b_mag = 0.0;
    }

    /// Magnitudes of the summands, used as tolerance scales.
    pub fn scales(&self) -> (f64, f64) {
        (self.a_mag, self.b_mag)
    }

    pub fn minimize(&self) -> Minimum {
        self.total.minimize_scaled(self.a_mag, self.b_mag)
    }
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
}

impl Serialize for Quadratic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QuadraticRepr { a: self.a_rows(), b: self.b.clone(), c: self.c }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quadratic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = QuadraticRepr::deserialize(d)?;
        Quadratic::new(&r.a, &r.b, r.c).map_err(de::Error::custom)
    }
}

/// Truncation level on the wire: a number or the string `"inf"`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum LevelRepr {
    Number(f64),
    Text(String),
}

impl LevelRepr {
    pub(crate) fn from_level(v: f64) -> Self {
        if v.is_finite() {
            LevelRepr::Number(v)
        } else {
            LevelRepr::Text("inf".to_string())
        }
    }

    pub(crate) fn to_level(&self) -> std::result::Result<f64, String> {
        match self {
            LevelRepr::Number(v) => Ok(*v),
            LevelRepr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(format!("invalid lambda `{other}`")),
            },
        }
    }
}

/// Serde adapter for `λ` fields using [`LevelRepr`].
pub(crate) mod level {
    use super::LevelRepr;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        LevelRepr::from_level(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        LevelRepr::deserialize(d)?.to_level().map_err(de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct TruncatedRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
    lambda: LevelRepr,
}

impl Serialize for TruncatedQuadratic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TruncatedRepr {
            a: self.q.a_rows(),
            b: self.q.b.clone(),
            c: self.q.c,
            lambda: LevelRepr::from_level(self.lambda),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TruncatedQuadratic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TruncatedRepr::deserialize(d)?;
        let q = Quadratic::new(&r.a, &r.b, r.c).map_err(de::Error::custom)?;
        let lambda = r.lambda.to_level().map_err(de::Error::custom)?;
        TruncatedQuadratic::new(q, lambda).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_term_f1() -> Quadratic {
        // 4x² + 1
        Quadratic::univariate(8.0, 0.0, 1.0)
    }

    fn two_term_f2() -> Quadratic {
        // 2(x−1)² + 2 = 2x² − 4x + 4
        Quadratic::univariate(4.0, -4.0, 4.0)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Quadratic::univariate(2.0, 0.0, 0.0).eval(&[3.0]).unwrap(), 9.0);
        assert_eq!(two_term_f1().eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(two_term_f2().eval(&[1.0]).unwrap(), 2.0);
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let q = Quadratic::zero(2);
        assert_eq!(
            q.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn construction_symmetrizes() {
        let q = Quadratic::new(&[vec![2.0, 1.0], vec![3.0, 4.0]], &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(q.a(0, 1), 2.0);
        assert_eq!(q.a(1, 0), 2.0);
    }

    #[test]
    fn two_term_example_sum_coefficients() {
        let mut s = ActiveSum::new(1);
        s.add(0, &two_term_f1()).unwrap();
        s.add(1, &two_term_f2()).unwrap();
        // 6x² − 4x + 5 ⇔ ½·12·x² − 4x + 5
        assert_eq!(s.total().a(0, 0), 12.0);
        assert_eq!(s.total().b(), &[-4.0]);
        assert_eq!(s.total().c(), 5.0);
    }

    #[test]
    fn add_remove_roundtrip_and_errors() {
        let mut s = ActiveSum::new(1);
        s.add(0, &two_term_f1()).unwrap();
        let before = s.total().clone();
        s.add(1, &two_term_f2()).unwrap();
        assert_eq!(s.add(1, &two_term_f2()), Err(Error::DuplicateIndex(1)));
        s.remove(1, &two_term_f2()).unwrap();
        assert_eq!(s.remove(1, &two_term_f2()), Err(Error::MissingIndex(1)));
        for (a, b) in s.total().a_flat().iter().zip(before.a_flat()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((s.total().c() - before.c()).abs() <= 1e-12);
        s.remove(0, &two_term_f1()).unwrap();
        assert_eq!(s.total(), &Quadratic::zero(1));
    }

    #[test]
    fn empty_sum_is_zero() {
        let s = ActiveSum::new(2);
        assert_eq!(s.total(), &Quadratic::zero(2));
        assert_eq!(
            s.minimize(),
            Minimum::Flat { x: vec![0.0, 0.0], value: 0.0 }
        );
    }

    #[test]
    fn minimize_two_term_example_sum() {
        let q = Quadratic::univariate(12.0, -4.0, 5.0);
        let Minimum::Point { x, value } = q.minimize() else { panic!("expected point") };
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((value - 13.0 / 3.0).abs() < 1e-14);
        // grid check over [−2, 3] at step 1e-5
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        let mut t = -2.0;
        while t <= 3.0 {
            let v = 6.0 * t * t - 4.0 * t + 5.0;
            if v < best {
                best = v;
                arg = t;
            }
            t += 1e-5;
        }
        assert!((arg - x[0]).abs() < 1e-5);
        assert!((best - value).abs() < 1e-8);
    }

    #[test]
    fn minimize_bowl() {
        let q = Quadratic::bivariate(2.0, 0.0, 2.0, [0.0, 0.0], 0.0);
        assert_eq!(q.minimize(), Minimum::Point { x: vec![0.0, 0.0], value: 0.0 });
    }

    #[test]
    fn minimize_rank_one_is_flat_least_norm() {
        // (x + y)² + 2(x + y) + 1 = (x + y + 1)²
        let q = Quadratic::bivariate(2.0, 2.0, 2.0, [2.0, 2.0], 1.0);
        let Minimum::Flat { x, value } = q.minimize() else { panic!("expected flat") };
        assert!(value.abs() < 1e-12);
        assert!((x[0] + 0.5).abs() < 1e-12 && (x[1] + 0.5).abs() < 1e-12);
        // (x + y)² alone: least-norm minimizer is the origin
        let q = Quadratic::bivariate(2.0, 2.0, 2.0, [0.0, 0.0], 0.0);
        let Minimum::Flat { x, value } = q.minimize() else { panic!("expected flat") };
        assert!(x[0].abs() < 1e-15 && x[1].abs() < 1e-15 && value == 0.0);
    }

    #[test]
    fn minimize_unbounded_cases() {
        assert_eq!(Quadratic::univariate(0.0, 1.0, 0.0).minimize(), Minimum::Unbounded);
        assert_eq!(Quadratic::univariate(-1.0, 0.0, 0.0).minimize(), Minimum::Unbounded);
        let q = Quadratic::bivariate(2.0, 0.0, 0.0, [0.0, 1.0], 0.0);
        assert_eq!(q.minimize(), Minimum::Unbounded);
    }

    #[test]
    fn minimize_three_dimensional() {
        let q = Quadratic::new(
            &[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]],
            &[1.0, -2.0, 0.5],
            3.0,
        )
        .unwrap();
        let Minimum::Point { x, value } = q.minimize() else { panic!() };
        let g = q.gradient(&x);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        assert!((q.eval(&x).unwrap() - value).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_with_infinite_level() {
        let text = r#"{"A": [[2.0]], "b": [0.0], "c": 1.0, "lambda": "inf"}"#;
        let t: TruncatedQuadratic = serde_json::from_str(text).unwrap();
        assert!(t.lambda.is_infinite());
        let back = serde_json::to_string(&t).unwrap();
        let again: TruncatedQuadratic = serde_json::from_str(&back).unwrap();
        assert_eq!(t, again);
        let bad = r#"{"A": [[2.0]], "b": [0.0], "c": 1.0, "lambda": "lots"}"#;
        assert!(serde_json::from_str::<TruncatedQuadratic>(bad).is_err());
    }

    fn arb_psd_quadratic(dim: usize) -> impl Strategy<Value = Quadratic> {
        (
            prop::collection::vec(-3.0..3.0f64, dim * dim),
            prop::collection::vec(-5.0..5.0f64, dim),
            -5.0..5.0f64,
            0.1..2.0f64,
        )
            .prop_map(move |(m, b, c, ridge)| {
                // A = MᵀM + ridge·I
                let mut a = vec![0.0; dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        a[i * dim + j] = (0..dim).map(|k| m[k * dim + i] * m[k * dim + j]).sum();
                    }
                    a[i * dim + i] += ridge;
                }
                Quadratic::from_flat(dim, a, b, c)
            })
    }

    proptest! {
        #[test]
        fn active_sum_matches_recomputation(
            qs in prop::collection::vec(arb_psd_quadratic(2), 1..12),
            ops in prop::collection::vec((0usize..12, any::<bool>()), 1..100),
        ) {
            let mut s = ActiveSum::new(2);
            for (k, add) in ops {
                let k = k % qs.len();
                if add && !s.contains(k) {
                    s.add(k, &qs[k]).unwrap();
                } else if !add && s.contains(k) {
                    s.remove(k, &qs[k]).unwrap();
                }
                let mut fresh = Quadratic::zero(2);
                for &i in s.indices() {
                    fresh.add_assign(&qs[i]).unwrap();
                }
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs().max(a.abs()));
                for (a, b) in s.total().a_flat().iter().zip(fresh.a_flat()) {
                    prop_assert!(close(*a, *b));
                }
                for (a, b) in s.total().b().iter().zip(fresh.b()) {
                    prop_assert!(close(*a, *b));
                }
                prop_assert!(close(s.total().c(), fresh.c()));
            }
        }

        #[test]
        fn minimizer_satisfies_first_order_condition(q in arb_psd_quadratic(2)) {
            let (x, v) = q.minimize().into_parts().unwrap();
            let g = q.gradient(&x);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(gn <= 1e-8 * (1.0 + q.norm_b()));
            let e = q.eval(&x).unwrap();
            prop_assert!((e - v).abs() <= 1e-10 * (1.0 + v.abs()));
        }

        #[test]
        fn minimizer_first_order_in_one_dimension(q in arb_psd_quadratic(1)) {
            let (x, _) = q.minimize().into_parts().unwrap();
            prop_assert!(q.gradient(&x)[0].abs() <= 1e-8 * (1.0 + q.norm_b()));
        }
    }
}
