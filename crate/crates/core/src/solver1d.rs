//! Exact minimization of `Σ min{f_i(x), λ_i}` on the real line.
//!
//! Each term is replaced by `g_i = f_i − λ_i` truncated at zero. The sublevel
//! interval `C_i = {g_i ≤ 0}` of every term is computed, the interval
//! endpoints are swept left to right, and at every stop the untruncated
//! minimum of the terms whose intervals cover the current position is taken.
//! The smallest of these candidates, plus `Σλ_i`, is the global minimum.

use std::sync::Arc;

use crate::convex1d::{self, ConvexScalarFn, QuadraticFn};
use crate::error::{Error, Result};
use crate::quadform::{TruncatedQuadratic, PIVOT_RTOL};
use crate::solution::Solution;

/// A univariate truncated convex function.
#[derive(Debug, Clone)]
pub enum TruncatedFunction1d {
    Quadratic { q: QuadraticFn, lambda: f64 },
    Convex { f: Arc<dyn ConvexScalarFn>, lambda: f64 },
}

impl TruncatedFunction1d {
    /// `min{½a x² + b x + c, λ}`.
    pub fn quadratic(a: f64, b: f64, c: f64, lambda: f64) -> Self {
        TruncatedFunction1d::Quadratic { q: QuadraticFn { a, b, c }, lambda }
    }

    pub fn convex(f: impl ConvexScalarFn + 'static, lambda: f64) -> Self {
        TruncatedFunction1d::Convex { f: Arc::new(f), lambda }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            TruncatedFunction1d::Quadratic { lambda, .. } | TruncatedFunction1d::Convex { lambda, .. } => *lambda,
        }
    }

    /// The untruncated value `f(x)`.
    pub fn inner_value(&self, x: f64) -> f64 {
        match self {
            TruncatedFunction1d::Quadratic { q, .. } => q.value(x),
            TruncatedFunction1d::Convex { f, .. } => f.value(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.inner_value(x).min(self.lambda())
    }

    pub(crate) fn as_convex(&self) -> &dyn ConvexScalarFn {
        match self {
            TruncatedFunction1d::Quadratic { q, .. } => q,
            TruncatedFunction1d::Convex { f, .. } => f.as_ref(),
        }
    }
}

impl TryFrom<&TruncatedQuadratic> for TruncatedFunction1d {
    type Error = Error;

    fn try_from(t: &TruncatedQuadratic) -> Result<Self> {
        if t.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: t.dim() });
        }
        Ok(TruncatedFunction1d::quadratic(t.q.a(0, 0), t.q.b()[0], t.q.c(), t.lambda))
    }
}

/// `Σ min{f_i(x), λ_i}`.
pub fn objective_1d(fs: &[TruncatedFunction1d], x: f64) -> f64 {
    fs.iter().map(|f| f.eval(x)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Leave,
    Enter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEvent {
    pub position: f64,
    pub func_index: usize,
    pub kind: EventKind,
}

/// How a term participates in the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coverage {
    /// `λ = +∞`: part of every active set.
    Always,
    /// `C_i` empty: contributes the constant `λ_i`.
    Never,
    Interval(f64, f64),
}

impl Coverage {
    fn covers_after(&self, p: f64) -> bool {
        match *self {
            Coverage::Always => true,
            Coverage::Never => false,
            Coverage::Interval(l, r) => l <= p && p < r,
        }
    }
}

/// `{x : ½a x² + b x + c ≤ level}` in closed form.
pub fn quadratic_interval(a: f64, b: f64, c: f64, level: f64) -> Result<Option<(f64, f64)>> {
    if !(a >= 0.0) {
        return Err(Error::invalid("a", format!("quadratic coefficient {a} is not convex")));
    }
    let k = c - level;
    if a == 0.0 {
        return Ok(if b == 0.0 {
            (k <= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY))
        } else if b > 0.0 {
            Some((f64::NEG_INFINITY, -k / b))
        } else {
            Some((-k / b, f64::INFINITY))
        });
    }
    let disc = b * b - 2.0 * a * k;
    if disc < 0.0 {
        return Ok(None);
    }
    if disc == 0.0 {
        let m = -b / a;
        return Ok(Some((m, m)));
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 {
        // b = 0 and k = 0
        (0.0, 0.0)
    } else {
        // roots of (a/2)x² + bx + k: q/(a/2)·½ and k/(q/2)
        (q / a, 2.0 * k / q)
    };
    Ok(Some((r1.min(r2), r1.max(r2))))
}

fn coverage_of(f: &TruncatedFunction1d) -> Result<Coverage> {
    let lambda = f.lambda();
    if lambda == f64::INFINITY {
        return Ok(Coverage::Always);
    }
    let iv = match f {
        TruncatedFunction1d::Quadratic { q, .. } => quadratic_interval(q.a, q.b, q.c, lambda)?,
        TruncatedFunction1d::Convex { f, .. } => convex1d::crossing_interval(f.as_ref(), lambda)?,
    };
    Ok(match iv {
        None => Coverage::Never,
        Some((l, r)) => Coverage::Interval(l, r),
    })
}

fn events_from(coverage: &[Coverage]) -> Vec<SweepEvent> {
    let mut events = Vec::with_capacity(2 * coverage.len());
    for (i, c) in coverage.iter().enumerate() {
        if let Coverage::Interval(l, r) = *c {
            if l.is_finite() {
                events.push(SweepEvent { position: l, func_index: i, kind: EventKind::Enter });
            }
            if r.is_finite() {
                events.push(SweepEvent { position: r, func_index: i, kind: EventKind::Leave });
            }
        }
    }
    sort_events(&mut events);
    events
}

fn sort_events(events: &mut [SweepEvent]) {
    events.sort_unstable_by(|a, b| {
        a.position
            .total_cmp(&b.position)
            .then(a.kind.cmp(&b.kind))
            .then(a.func_index.cmp(&b.func_index))
    });
}

/// Interval endpoints of all terms, ordered by `(position, Leave before
/// Enter, index)`. Terms with empty or unbounded sides contribute only their
/// finite endpoints.
pub fn sweep_events(fs: &[TruncatedFunction1d]) -> Result<Vec<SweepEvent>> {
    let coverage = fs
        .iter()
        .enumerate()
        .map(|(i, f)| coverage_of(f).map_err(|e| e.at_term(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(events_from(&coverage))
}

/// Candidate minimization over the currently active terms.
trait Accumulator {
    fn enter(&mut self, i: usize);
    fn leave(&mut self, i: usize);
    /// Minimizer and value of `Σ_{active} g_k`, or `None` if unbounded.
    fn evaluate(&mut self) -> Option<(f64, f64)>;
}

/// Coefficients of `g_i = f_i − λ_i` for quadratic terms.
#[derive(Debug, Clone, Copy)]
struct Shifted {
    a: f64,
    b: f64,
    c: f64,
}

struct QuadAccumulator<'a> {
    terms: &'a [Shifted],
    base: (f64, f64, f64, f64, f64),
    a: f64,
    b: f64,
    c: f64,
    a_mag: f64,
    b_mag: f64,
    count: usize,
}

impl<'a> QuadAccumulator<'a> {
    fn new(terms: &'a [Shifted], always: &[usize]) -> Self {
        let mut acc = QuadAccumulator {
            terms,
            base: (0.0, 0.0, 0.0, 0.0, 0.0),
            a: 0.0,
            b: 0.0,
            c: 0.0,
            a_mag: 0.0,
            b_mag: 0.0,
            count: 0,
        };
        for &i in always {
            acc.enter(i);
        }
        acc.base = (acc.a, acc.b, acc.c, acc.a_mag, acc.b_mag);
        acc.count = 0;
        acc
    }

    fn base_only(&self) -> Option<(f64, f64)> {
        let (a, b, c, am, bm) = self.base;
        quad_min(a, b, c, am, bm)
    }
}

fn quad_min(a: f64, b: f64, c: f64, a_mag: f64, b_mag: f64) -> Option<(f64, f64)> {
    let pivot = PIVOT_RTOL * a_mag.max(a.abs());
    if a > pivot {
        let x = -b / a;
        Some((x, (0.5 * a * x + b) * x + c))
    } else if a >= -pivot && b.abs() <= 1e-9 * (1.0 + b_mag.max(b.abs())) {
        Some((0.0, c))
    } else {
        None
    }
}

impl Accumulator for QuadAccumulator<'_> {
    fn enter(&mut self, i: usize) {
        let t = self.terms[i];
        self.a += t.a;
        self.b += t.b;
        self.c += t.c;
        self.a_mag += t.a.abs();
        self.b_mag += t.b.abs();
        self.count += 1;
    }

    fn leave(&mut self, i: usize) {
        self.count -= 1;
        if self.count == 0 {
            (self.a, self.b, self.c, self.a_mag, self.b_mag) = self.base;
            return;
        }
        let t = self.terms[i];
        self.a -= t.a;
        self.b -= t.b;
        self.c -= t.c;
        self.a_mag -= t.a.abs();
        self.b_mag -= t.b.abs();
    }

    fn evaluate(&mut self) -> Option<(f64, f64)> {
        quad_min(self.a, self.b, self.c, self.a_mag, self.b_mag)
    }
}

/// `f − λ` as a convex function (identity for `λ = ∞`).
#[derive(Debug)]
pub(crate) struct Shift<'a> {
    pub(crate) f: &'a dyn ConvexScalarFn,
    pub(crate) by: f64,
}

impl ConvexScalarFn for Shift<'_> {
    fn value(&self, x: f64) -> f64 {
        self.f.value(x) - self.by
    }
    fn derivative(&self, x: f64) -> f64 {
        self.f.derivative(x)
    }
    fn second_derivative(&self, x: f64) -> f64 {
        self.f.second_derivative(x)
    }
    fn hint(&self) -> Option<f64> {
        self.f.hint()
    }
}

struct GenericAccumulator<'a> {
    shifted: Vec<Shift<'a>>,
    active: Vec<bool>,
    warm: f64,
    error: Option<Error>,
}

impl Accumulator for GenericAccumulator<'_> {
    fn enter(&mut self, i: usize) {
        self.active[i] = true;
    }

    fn leave(&mut self, i: usize) {
        self.active[i] = false;
    }

    fn evaluate(&mut self) -> Option<(f64, f64)> {
        let fs: Vec<&dyn ConvexScalarFn> = self
            .shifted
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s as &dyn ConvexScalarFn)
            .collect();
        if fs.is_empty() {
            return Some((0.0, 0.0));
        }
        match convex1d::minimize_convex_sum_from(&fs, self.warm) {
            Ok((x, v)) => {
                self.warm = x;
                Some((x, v))
            }
            Err(Error::Divergence { .. }) => None,
            Err(e) => {
                self.error.get_or_insert(e);
                None
            }
        }
    }
}

/// Where the winning candidate was found.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Stop {
    BaseOnly,
    Start,
    After(f64),
}

struct SweepOutcome {
    x: f64,
    value: f64,
    stop: Stop,
    pieces: usize,
}

fn run_sweep(
    acc: &mut dyn Accumulator,
    coverage: &[Coverage],
    events: &[SweepEvent],
    base_only: Option<(f64, f64)>,
) -> SweepOutcome {
    let mut best = SweepOutcome { x: 0.0, value: f64::INFINITY, stop: Stop::BaseOnly, pieces: 0 };
    let consider = |cand: Option<(f64, f64)>, stop: Stop, best: &mut SweepOutcome| {
        best.pieces += 1;
        if let Some((x, v)) = cand {
            if v < best.value {
                best.x = x;
                best.value = v;
                best.stop = stop;
            }
        }
    };
    consider(base_only, Stop::BaseOnly, &mut best);
    let mut started = false;
    for (i, c) in coverage.iter().enumerate() {
        if let Coverage::Interval(l, _) = *c {
            if l == f64::NEG_INFINITY {
                acc.enter(i);
                started = true;
            }
        }
    }
    if started {
        consider(acc.evaluate(), Stop::Start, &mut best);
    }
    let mut k = 0;
    while k < events.len() {
        let pos = events[k].position;
        while k < events.len() && events[k].position == pos {
            let e = events[k];
            match e.kind {
                EventKind::Enter => acc.enter(e.func_index),
                EventKind::Leave => acc.leave(e.func_index),
            }
            k += 1;
        }
        consider(acc.evaluate(), Stop::After(pos), &mut best);
    }
    best
}

/// Global minimum of `Σ min{f_i(x), λ_i}` over the real line.
pub fn minimize_sum_1d(fs: &[TruncatedFunction1d]) -> Result<Solution> {
    if fs.is_empty() {
        return Err(Error::invalid("fs", "at least one function is required"));
    }
    let coverage = fs
        .iter()
        .enumerate()
        .map(|(i, f)| coverage_of(f).map_err(|e| e.at_term(i)))
        .collect::<Result<Vec<_>>>()?;
    let events = events_from(&coverage);
    let lambda_sum: f64 = fs.iter().map(|f| f.lambda()).filter(|l| l.is_finite()).sum();
    let always: Vec<usize> = (0..fs.len()).filter(|&i| coverage[i] == Coverage::Always).collect();
    let all_quadratic = fs.iter().all(|f| matches!(f, TruncatedFunction1d::Quadratic { .. }));

    let outcome = if all_quadratic {
        let shifted: Vec<Shifted> = fs
            .iter()
            .map(|f| match f {
                TruncatedFunction1d::Quadratic { q, lambda } => Shifted {
                    a: q.a,
                    b: q.b,
                    c: if lambda.is_finite() { q.c - lambda } else { q.c },
                },
                TruncatedFunction1d::Convex { .. } => unreachable!(),
            })
            .collect();
        let mut acc = QuadAccumulator::new(&shifted, &always);
        let base = acc.base_only();
        run_sweep(&mut acc, &coverage, &events, base)
    } else {
        let shifted: Vec<Shift> = fs
            .iter()
            .map(|f| {
                let l = f.lambda();
                Shift { f: f.as_convex(), by: if l.is_finite() { l } else { 0.0 } }
            })
            .collect();
        let mut acc = GenericAccumulator {
            shifted,
            active: vec![false; fs.len()],
            warm: 0.0,
            error: None,
        };
        for &i in &always {
            acc.enter(i);
        }
        let base = acc.evaluate();
        let out = run_sweep(&mut acc, &coverage, &events, base);
        if let Some(e) = acc.error {
            return Err(e);
        }
        out
    };
    if !outcome.value.is_finite() {
        return Err(Error::Unbounded);
    }
    let active = match outcome.stop {
        Stop::BaseOnly => always,
        Stop::Start => (0..fs.len())
            .filter(|&i| match coverage[i] {
                Coverage::Always => true,
                Coverage::Interval(l, _) => l == f64::NEG_INFINITY,
                Coverage::Never => false,
            })
            .collect(),
        Stop::After(p) => (0..fs.len()).filter(|&i| coverage[i].covers_after(p)).collect(),
    };
    Ok(Solution {
        x: vec![outcome.x],
        value: outcome.value + lambda_sum,
        active,
        pieces_visited: outcome.pieces,
        iterations: 0,
        converged: true,
    })
}

/// A quadratic slice term `min{½a x² + b x + c, λ}` for the allocation-light
/// sweep used inside coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTerm {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
}

impl QuadTerm {
    pub fn eval(&self, x: f64) -> f64 {
        ((0.5 * self.a * x + self.b) * x + self.c).min(self.lambda)
    }
}

/// Reusable buffers for [`QuadSweeper::minimize`].
#[derive(Debug, Default)]
pub struct QuadSweeper {
    coverage: Vec<Coverage>,
    shifted: Vec<Shifted>,
    events: Vec<SweepEvent>,
    always: Vec<usize>,
}

impl QuadSweeper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Minimizer and minimum of `Σ min{½a x² + b x + c, λ}`; same algorithm as
    /// [`minimize_sum_1d`] without building a [`Solution`].
    pub fn minimize(&mut self, terms: &[QuadTerm]) -> Result<(f64, f64)> {
        self.coverage.clear();
        self.shifted.clear();
        self.events.clear();
        self.always.clear();
        let mut lambda_sum = 0.0;
        for (i, t) in terms.iter().enumerate() {
            let cov = if t.lambda == f64::INFINITY {
                self.always.push(i);
                Coverage::Always
            } else {
                lambda_sum += t.lambda;
                match quadratic_interval(t.a, t.b, t.c, t.lambda).map_err(|e| e.at_term(i))? {
                    None => Coverage::Never,
                    Some((l, r)) => {
                        if l.is_finite() {
                            self.events.push(SweepEvent { position: l, func_index: i, kind: EventKind::Enter });
                        }
                        if r.is_finite() {
                            self.events.push(SweepEvent { position: r, func_index: i, kind: EventKind::Leave });
                        }
                        Coverage::Interval(l, r)
                    }
                }
            };
            self.coverage.push(cov);
            let c = if t.lambda.is_finite() { t.c - t.lambda } else { t.c };
            self.shifted.push(Shifted { a: t.a, b: t.b, c });
        }
        sort_events(&mut self.events);
        let mut acc = QuadAccumulator::new(&self.shifted, &self.always);
        let base = acc.base_only();
        let out = run_sweep(&mut acc, &self.coverage, &self.events, base);
        if !out.value.is_finite() {
            return Err(Error::Unbounded);
        }
        Ok((out.x, out.value + lambda_sum))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex1d::PoissonTerm;

    fn two_term_example() -> Vec<TruncatedFunction1d> {
        vec![
            TruncatedFunction1d::quadratic(8.0, 0.0, 1.0, 3.0),
            TruncatedFunction1d::quadratic(4.0, -4.0, 4.0, 4.0),
        ]
    }

    #[test]
    fn two_term_example_events() {
        let ev = sweep_events(&two_term_example()).unwrap();
        let pos: Vec<f64> = ev.iter().map(|e| e.position).collect();
        let s = 0.5f64.sqrt();
        let expect = [-s, 0.0, s, 2.0];
        for (p, e) in pos.iter().zip(expect) {
            assert!((p - e).abs() < 1e-14, "{pos:?}");
        }
        assert_eq!(ev[0].kind, EventKind::Enter);
        assert_eq!(ev[1].func_index, 1);
    }

    #[test]
    fn two_term_example_minimum() {
        let s = minimize_sum_1d(&two_term_example()).unwrap();
        assert!((s.x[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.value - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.active, vec![0, 1]);
        assert!((objective_1d(&two_term_example(), s.x[0]) - s.value).abs() < 1e-12);
    }

    #[test]
    fn inactive_truncation() {
        let s = minimize_sum_1d(&[TruncatedFunction1d::quadratic(2.0, 0.0, 0.0, 5.0)]).unwrap();
        assert_eq!(s.x, vec![0.0]);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn always_truncated_terms_give_constant() {
        let fs = [
            TruncatedFunction1d::quadratic(2.0, 0.0, 10.0, 1.0),
            TruncatedFunction1d::quadratic(2.0, -18.0, 91.0, 2.0),
        ];
        assert!(sweep_events(&fs).unwrap().is_empty());
        let s = minimize_sum_1d(&fs).unwrap();
        assert_eq!(s.value, 3.0);
        assert!(s.active.is_empty());
    }

    #[test]
    fn empty_interval_contributes_no_events() {
        let fs = [
            TruncatedFunction1d::quadratic(2.0, 0.0, 5.0, 1.0),
            TruncatedFunction1d::quadratic(2.0, 0.0, 0.0, 1.0),
        ];
        let ev = sweep_events(&fs).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.func_index == 1));
    }

    #[test]
    fn identical_intervals_tie_break_by_index() {
        let f = TruncatedFunction1d::quadratic(2.0, 0.0, 0.0, 1.0);
        let ev = sweep_events(&[f.clone(), f]).unwrap();
        let order: Vec<(usize, EventKind)> = ev.iter().map(|e| (e.func_index, e.kind)).collect();
        assert_eq!(
            order,
            vec![(0, EventKind::Enter), (1, EventKind::Enter), (0, EventKind::Leave), (1, EventKind::Leave)]
        );
    }

    #[test]
    fn infinite_level_terms_are_always_active() {
        let fs = [
            TruncatedFunction1d::quadratic(2.0, -2.0, 1.0, f64::INFINITY),
            TruncatedFunction1d::quadratic(2.0, -10.0, 25.0, 1.0),
        ];
        let s = minimize_sum_1d(&fs).unwrap();
        // (x−1)² + min{(x−5)², 1}: best is x = 1 with value 1
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(s.active.contains(&0));
    }

    #[test]
    fn poisson_terms_use_generic_path() {
        let y = [1.0, 2.0, 3.0, 40.0];
        let lambda = 2.0;
        let fs: Vec<TruncatedFunction1d> = y
            .iter()
            .map(|&y| {
                let ylogy = if y > 0.0 { y * f64::ln(y) } else { 0.0 };
                TruncatedFunction1d::convex(PoissonTerm { offset: 0.0, scale: 1.0, y }, lambda - ylogy + y)
            })
            .collect();
        let s = minimize_sum_1d(&fs).unwrap();
        assert!((objective_1d(&fs, s.x[0]) - s.value).abs() < 1e-9);
        let mut t = -3.0;
        while t < 6.0 {
            assert!(objective_1d(&fs, t) >= s.value - 1e-9);
            t += 1e-3;
        }
    }

    #[test]
    fn sweeper_matches_public_api() {
        let terms = [
            QuadTerm { a: 8.0, b: 0.0, c: 1.0, lambda: 3.0 },
            QuadTerm { a: 4.0, b: -4.0, c: 4.0, lambda: 4.0 },
        ];
        let (x, v) = QuadSweeper::new().minimize(&terms).unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-12 && (v - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_concave_and_empty_input() {
        assert!(minimize_sum_1d(&[]).is_err());
        let err = minimize_sum_1d(&[TruncatedFunction1d::quadratic(-1.0, 0.0, 0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Term { index: 0, .. }));
    }

    #[test]
    fn quadratic_interval_cases() {
        let (l, r) = quadratic_interval(2.0, 0.0, 0.0, 4.0).unwrap().unwrap();
        assert!((l + 2.0).abs() < 1e-15 && (r - 2.0).abs() < 1e-15);
        assert_eq!(quadratic_interval(2.0, 0.0, 5.0, 1.0).unwrap(), None);
        assert_eq!(quadratic_interval(0.0, 1.0, 0.0, 2.0).unwrap(), Some((f64::NEG_INFINITY, 2.0)));
        assert_eq!(
            quadratic_interval(0.0, 0.0, 0.0, 2.0).unwrap(),
            Some((f64::NEG_INFINITY, f64::INFINITY))
        );
    }
}
