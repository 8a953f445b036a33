//! Univariate convex functions given by value and derivatives, with level
//! crossings and minimization of sums by safeguarded Newton iteration.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Maximum iterations of the safeguarded Newton loops.
pub const MAX_ITER: usize = 200;
/// Bracket expansion stops once the search radius exceeds this.
const FAR: f64 = 1e15;

/// A convex function of one variable.
pub trait ConvexScalarFn: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;
    /// A point near the minimizer, if known.
    fn hint(&self) -> Option<f64> {
        None
    }
}

/// `½a x² + b x + c` with `a ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFn {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ConvexScalarFn for QuadraticFn {
    fn value(&self, x: f64) -> f64 {
        (0.5 * self.a * x + self.b) * x + self.c
    }
    fn derivative(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
    fn second_derivative(&self, _x: f64) -> f64 {
        self.a
    }
    fn hint(&self) -> Option<f64> {
        (self.a > 0.0).then(|| -self.b / self.a)
    }
}

/// Poisson negative log-likelihood in the natural parameter,
/// `e^θ − θ·y` with `θ = offset + scale·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonTerm {
    pub offset: f64,
    pub scale: f64,
    pub y: f64,
}

impl PoissonTerm {
    fn theta(&self, t: f64) -> f64 {
        self.offset + self.scale * t
    }
}

impl ConvexScalarFn for PoissonTerm {
    fn value(&self, t: f64) -> f64 {
        let th = self.theta(t);
        th.exp() - th * self.y
    }
    fn derivative(&self, t: f64) -> f64 {
        self.scale * (self.theta(t).exp() - self.y)
    }
    fn second_derivative(&self, t: f64) -> f64 {
        self.scale * self.scale * self.theta(t).exp()
    }
    fn hint(&self) -> Option<f64> {
        (self.y > 0.0 && self.scale != 0.0).then(|| (self.y.ln() - self.offset) / self.scale)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex function assembled from closures.
#[derive(Clone)]
pub struct ClosureFn {
    value: ScalarFn,
    derivative: ScalarFn,
    second: ScalarFn,
    hint: Option<f64>,
}

impl ClosureFn {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ClosureFn {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            second: Arc::new(second),
            hint: None,
        }
    }

    pub fn with_hint(mut self, hint: f64) -> Self {
        self.hint = Some(hint);
        self
    }
}

impl fmt::Debug for ClosureFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureFn").field("hint", &self.hint).finish_non_exhaustive()
    }
}

impl ConvexScalarFn for ClosureFn {
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
    fn second_derivative(&self, x: f64) -> f64 {
        (self.second)(x)
    }
    fn hint(&self) -> Option<f64> {
        self.hint
    }
}

/// Where the infimum of a convex function lies.
#[derive(Debug, Clone, Copy, PartialEq)]
enum MinLocation {
    At(f64),
    /// Strictly decreasing over the searched range; infimum towards `+∞`.
    TowardsPlus(f64),
    /// Strictly increasing over the searched range; infimum towards `−∞`.
    TowardsMinus(f64),
}

/// Root of a nondecreasing `g` on `[lo, hi]` with `g(lo) ≤ 0 ≤ g(hi)`.
/// Newton steps are halved once when they leave the bracket, then bisection
/// takes over.
fn safeguarded_root(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    tol: f64,
) -> Result<f64> {
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    let mut best = (f64::INFINITY, x);
    for _ in 0..MAX_ITER {
        let gx = g(x);
        if gx.abs() < best.0 {
            best = (gx.abs(), x);
        }
        if gx.abs() <= tol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            return Ok(best.1);
        }
        let slope = dg(x);
        let mut next = f64::NAN;
        if slope > 0.0 && slope.is_finite() {
            let step = gx / slope;
            let cand = x - step;
            if cand > lo && cand < hi {
                next = cand;
            } else {
                let damped = x - 0.5 * step;
                if damped > lo && damped < hi {
                    next = damped;
                }
            }
        }
        if !next.is_finite() || next == x {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    Err(Error::RootNotConverged { iterations: MAX_ITER, lo, hi })
}

/// Finds the minimizer of a convex function described by its derivative.
fn locate_min(
    deriv: &dyn Fn(f64) -> f64,
    second: &dyn Fn(f64) -> f64,
    x0: f64,
    tol: f64,
) -> Result<MinLocation> {
    let g0 = deriv(x0);
    if g0.abs() <= tol {
        return Ok(MinLocation::At(x0));
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut inner = x0;
    let mut step = 1.0_f64.max(x0.abs() * 1e-3);
    let outer = loop {
        let cand = x0 + dir * step;
        let gc = deriv(cand);
        if gc.is_nan() {
            return Err(Error::Divergence { last: cand });
        }
        if dir * gc >= 0.0 {
            break cand;
        }
        inner = cand;
        step *= 2.0;
        if step > FAR {
            return Ok(if dir > 0.0 {
                MinLocation::TowardsPlus(cand)
            } else {
                MinLocation::TowardsMinus(cand)
            });
        }
    };
    let (lo, hi) = if dir > 0.0 { (inner, outer) } else { (outer, inner) };
    let x = safeguarded_root(deriv, second, lo, hi, x0, tol)?;
    Ok(MinLocation::At(x))
}

/// The interval `{x : f(x) ≤ level}`; endpoints may be infinite when the
/// sublevel set is unbounded. `None` when `min f > level`.
pub fn crossing_interval(f: &dyn ConvexScalarFn, level: f64) -> Result<Option<(f64, f64)>> {
    let tol = 1e-10 * (1.0 + level.abs());
    let x0 = f.hint().unwrap_or(0.0);
    let deriv = |x: f64| f.derivative(x);
    let second = |x: f64| f.second_derivative(x);
    let gtol = 1e-12 * (1.0 + f.derivative(x0).abs());
    let loc = locate_min(&deriv, &second, x0, gtol)?;
    let m = match loc {
        MinLocation::At(m) | MinLocation::TowardsPlus(m) | MinLocation::TowardsMinus(m) => m,
    };
    let fm = f.value(m);
    if fm > level + tol {
        return Ok(None);
    }
    if fm >= level - tol {
        if let MinLocation::At(_) = loc {
            return Ok(Some((m, m)));
        }
    }
    let h = |x: f64| f.value(x) - level;
    let right = match loc {
        MinLocation::TowardsPlus(_) => f64::INFINITY,
        _ => side_root(&h, &deriv, m, 1.0, tol)?,
    };
    let left = match loc {
        MinLocation::TowardsMinus(_) => f64::NEG_INFINITY,
        _ => side_root(&h, &deriv, m, -1.0, tol)?,
    };
    Ok(Some((left, right)))
}

/// Root of `h` on the side `dir` of the minimizer `m` (where `h(m) ≤ 0`).
fn side_root(
    h: &dyn Fn(f64) -> f64,
    deriv: &dyn Fn(f64) -> f64,
    m: f64,
    dir: f64,
    tol: f64,
) -> Result<f64> {
    let mut inner = m;
    let mut step = 1.0_f64.max(m.abs() * 1e-3);
    let outer = loop {
        let cand = m + dir * step;
        let hc = h(cand);
        if hc >= 0.0 || hc.is_nan() {
            break cand;
        }
        inner = cand;
        step *= 2.0;
        if step > FAR {
            return Ok(dir * f64::INFINITY);
        }
    };
    // g(s) = h(m + dir·s) is nondecreasing in s on [inner, outer].
    let to_s = |x: f64| dir * (x - m);
    let g = |s: f64| {
        let v = h(m + dir * s);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let dg = |s: f64| dir * deriv(m + dir * s);
    let s = safeguarded_root(g, dg, to_s(inner), to_s(outer), to_s(inner), tol)?;
    Ok(m + dir * s)
}

/// Minimizes `Σ f_k`. Fails with [`Error::Divergence`] when no finite
/// minimizer exists.
pub fn minimize_convex_sum(fs: &[&dyn ConvexScalarFn]) -> Result<(f64, f64)> {
    let start = fs.iter().filter_map(|f| f.hint()).fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
    let x0 = if start.1 > 0 { start.0 / start.1 as f64 } else { 0.0 };
    minimize_convex_sum_from(fs, x0)
}

/// As [`minimize_convex_sum`], starting the search at `x0`.
pub fn minimize_convex_sum_from(fs: &[&dyn ConvexScalarFn], x0: f64) -> Result<(f64, f64)> {
    if fs.is_empty() {
        return Err(Error::invalid("fs", "empty list of functions"));
    }
    let scale: f64 = fs.iter().map(|f| f.derivative(0.0).abs()).sum();
    let tol = 1e-9 * (1.0 + scale);
    let deriv = |x: f64| fs.iter().map(|f| f.derivative(x)).sum::<f64>();
    let second = |x: f64| fs.iter().map(|f| f.second_derivative(x)).sum::<f64>();
    match locate_min(&deriv, &second, x0, tol)? {
        MinLocation::At(x) => Ok((x, fs.iter().map(|f| f.value(x)).sum())),
        MinLocation::TowardsPlus(x) | MinLocation::TowardsMinus(x) => Err(Error::Divergence { last: x }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_minus(y: f64) -> PoissonTerm {
        PoissonTerm { offset: 0.0, scale: 1.0, y }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        // f(lo) and f(hi) have opposite signs
        let sl = f(lo).signum();
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid).signum() == sl {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn crossing_symmetric_parabola() {
        let f = QuadraticFn { a: 2.0, b: 0.0, c: 0.0 };
        let (l, r) = crossing_interval(&f, 4.0).unwrap().unwrap();
        assert!((l + 2.0).abs() < 1e-10 && (r - 2.0).abs() < 1e-10);
    }

    #[test]
    fn crossing_below_minimum_is_none() {
        let f = QuadraticFn { a: 2.0, b: 0.0, c: 5.0 };
        assert_eq!(crossing_interval(&f, 1.0).unwrap(), None);
    }

    #[test]
    fn crossing_tangent_level() {
        let f = QuadraticFn { a: 2.0, b: 0.0, c: 1.0 };
        let (l, r) = crossing_interval(&f, 1.0).unwrap().unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn crossing_poisson_term_against_bisection() {
        let f = exp_minus(3.0);
        // λ* = λ − y log y + y with λ = 1; the term's minimum is 3 − 3 log 3.
        let level = 1.0 - 3.0 * 3f64.ln() + 3.0;
        let (l, r) = crossing_interval(&f, level).unwrap().unwrap();
        let h = |x: f64| f.value(x) - level;
        let l_ref = bisect(h, -20.0, 3f64.ln());
        let r_ref = bisect(h, 3f64.ln(), 20.0);
        assert!((l - l_ref).abs() < 1e-9, "{l} vs {l_ref}");
        assert!((r - r_ref).abs() < 1e-9, "{r} vs {r_ref}");
        assert!(h(l).abs() <= 1e-10 * (1.0 + level.abs()));
        assert!(h(r).abs() <= 1e-10 * (1.0 + level.abs()));
    }

    #[test]
    fn crossing_unbounded_side() {
        // e^x has infimum 0 at −∞, so {e^x ≤ 2} = (−∞, ln 2].
        let f = exp_minus(0.0);
        let (l, r) = crossing_interval(&f, 2.0).unwrap().unwrap();
        assert_eq!(l, f64::NEG_INFINITY);
        assert!((r - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn sum_of_two_parabolas() {
        let f1 = QuadraticFn { a: 2.0, b: 0.0, c: 0.0 };
        let f2 = QuadraticFn { a: 2.0, b: -4.0, c: 4.0 };
        let (x, v) = minimize_convex_sum(&[&f1, &f2]).unwrap();
        assert!((x - 1.0).abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exp_minus_x() {
        let f = ClosureFn::new(|x: f64| x.exp() - x, |x: f64| x.exp() - 1.0, |x: f64| x.exp());
        let (x, v) = minimize_convex_sum(&[&f]).unwrap();
        assert!(x.abs() < 1e-9 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_poisson_terms() {
        let f1 = exp_minus(2.0);
        let f2 = exp_minus(4.0);
        let (x, v) = minimize_convex_sum(&[&f1, &f2]).unwrap();
        let x_ref = 3f64.ln();
        assert!((x - x_ref).abs() < 1e-10);
        assert!((v - (6.0 - 6.0 * 3f64.ln())).abs() < 1e-12);
        // dense grid confirms
        let mut best = f64::INFINITY;
        let mut t = -2.0;
        while t < 3.0 {
            best = best.min(f1.value(t) + f2.value(t));
            t += 1e-4;
        }
        assert!(best >= v - 1e-12 && best - v < 1e-7);
    }

    #[test]
    fn divergence_is_reported() {
        let f = QuadraticFn { a: 0.0, b: 1.0, c: 0.0 };
        assert!(matches!(minimize_convex_sum(&[&f]), Err(Error::Divergence { .. })));
        // e^x: the derivative falls below tolerance far out on the left
        let (x, v) = minimize_convex_sum(&[&exp_minus(0.0)]).unwrap();
        assert!(x < -15.0 && v < 1e-6);
        assert!(minimize_convex_sum(&[]).is_err());
    }

    proptest! {
        #[test]
        fn crossing_roundtrip_quadratics(a in 0.01..50.0f64, b in -20.0..20.0f64, c in -5.0..5.0f64, level in -5.0..20.0f64) {
            let f = QuadraticFn { a, b, c };
            let tol = 1e-10 * (1.0 + level.abs());
            match crossing_interval(&f, level).unwrap() {
                None => prop_assert!(f.value(-b / a) > level - tol),
                Some((l, r)) => {
                    prop_assert!(l <= r);
                    prop_assert!((f.value(l) - level).abs() <= tol * 10.0 || l == r);
                    prop_assert!((f.value(r) - level).abs() <= tol * 10.0 || l == r);
                }
            }
        }

        #[test]
        fn crossing_roundtrip_poisson(y in 0.5..30.0f64, scale in 0.2..3.0f64, offset in -2.0..2.0f64, extra in 0.01..10.0f64) {
            let f = PoissonTerm { offset, scale, y };
            let min = y - y * y.ln();
            let level = min + extra;
            let (l, r) = crossing_interval(&f, level).unwrap().unwrap();
            let tol = 1e-10 * (1.0 + level.abs());
            prop_assert!((f.value(l) - level).abs() <= tol);
            prop_assert!((f.value(r) - level).abs() <= tol);
        }

        #[test]
        fn agrees_with_closed_form(qs in prop::collection::vec((0.1..10.0f64, -10.0..10.0f64, -3.0..3.0f64), 1..6)) {
            let fns: Vec<QuadraticFn> = qs.iter().map(|&(a, b, c)| QuadraticFn { a, b, c }).collect();
            let refs: Vec<&dyn ConvexScalarFn> = fns.iter().map(|f| f as &dyn ConvexScalarFn).collect();
            let (x, v) = minimize_convex_sum(&refs).unwrap();
            let sa: f64 = fns.iter().map(|f| f.a).sum();
            let sb: f64 = fns.iter().map(|f| f.b).sum();
            let sc: f64 = fns.iter().map(|f| f.c).sum();
            let q = crate::quadform::Quadratic::univariate(sa, sb, sc);
            let (xq, vq) = q.minimize().into_parts().unwrap();
            prop_assert!((x - xq[0]).abs() <= 1e-8 * (1.0 + xq[0].abs()));
            prop_assert!((v - vq).abs() <= 1e-8 * (1.0 + vq.abs()));
        }
    }
}
