//! Brute-force references: exhaustive subset enumeration (exact) and dense
//! grid search (approximate).

use rayon::prelude::*;

use crate::convex1d::{minimize_convex_sum_from, ConvexScalarFn};
use crate::error::{Error, Result};
use crate::geometry2d::TruncatedFunction2d;
use crate::quadform::{ActiveSum, Minimum, Quadratic, TruncatedQuadratic};
use crate::solver1d::{Shift, TruncatedFunction1d};

/// Largest number of truncatable terms accepted by the subset oracle.
pub const MAX_SUBSET_TERMS: usize = 24;
/// Gray-code steps between rebuilds of the running sum.
const REBUILD_EVERY: usize = 256;

/// Minimum found by an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub x: Vec<f64>,
    /// The winning subset (subset oracle) or empty (grid oracle).
    pub subset: Vec<usize>,
}

/// `min_S min_x Σ_{k∈S}(f_k − λ_k) + Σλ_k` over all subsets `S` of the terms
/// with finite `λ`; terms with `λ = ∞` are in every subset.
pub fn subset_oracle(tqs: &[TruncatedQuadratic]) -> Result<OracleValue> {
    let dim = tqs.first().map_or(1, |t| t.dim());
    if let Some(t) = tqs.iter().find(|t| t.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: t.dim() });
    }
    let (fixed, free): (Vec<usize>, Vec<usize>) = (0..tqs.len()).partition(|&i| tqs[i].lambda == f64::INFINITY);
    check_size(free.len())?;
    let shifted: Vec<Quadratic> = tqs
        .iter()
        .map(|t| if t.lambda.is_finite() { t.q.offset(-t.lambda) } else { t.q.clone() })
        .collect();
    let lambda_sum: f64 = tqs.iter().map(|t| t.lambda).filter(|l| l.is_finite()).sum();

    let rebuild = |mask: u64| -> Result<ActiveSum> {
        let mut s = ActiveSum::new(dim);
        for &i in &fixed {
            s.add(i, &shifted[i])?;
        }
        for (bit, &i) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                s.add(i, &shifted[i])?;
            }
        }
        Ok(s)
    };

    let total = 1u64 << free.len();
    let mut sum = rebuild(0)?;
    let mut best: Option<(f64, Vec<f64>, u64)> = None;
    let mut gray = 0u64;
    for step in 0..total {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            gray ^= 1 << bit;
            let i = free[bit];
            if step as usize % REBUILD_EVERY == 0 {
                sum = rebuild(gray)?;
            } else if gray >> bit & 1 == 1 {
                sum.add(i, &shifted[i])?;
            } else {
                sum.remove(i, &shifted[i])?;
            }
        }
        if let Minimum::Point { x, value } | Minimum::Flat { x, value } = sum.minimize() {
            if best.as_ref().is_none_or(|b| value < b.0) {
                best = Some((value, x, gray));
            }
        }
    }
    let (value, x, mask) = best.ok_or(Error::Unbounded)?;
    Ok(OracleValue { value: value + lambda_sum, x, subset: subset_of(&fixed, &free, mask) })
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_SUBSET_TERMS {
        return Err(Error::invalid("terms", format!("subset enumeration limited to {MAX_SUBSET_TERMS} truncatable terms, got {n}")));
    }
    Ok(())
}

fn subset_of(fixed: &[usize], free: &[usize], mask: u64) -> Vec<usize> {
    let mut s: Vec<usize> = fixed.to_vec();
    s.extend(free.iter().enumerate().filter(|&(bit, _)| mask >> bit & 1 == 1).map(|(_, &i)| i));
    s.sort_unstable();
    s
}

/// Planar version of [`subset_oracle`]; quadratic terms only.
pub fn subset_oracle_2d(fs: &[TruncatedFunction2d]) -> Result<OracleValue> {
    let tqs: Vec<TruncatedQuadratic> = fs
        .iter()
        .enumerate()
        .map(|(i, f)| match f {
            TruncatedFunction2d::Quadratic(t) => Ok(t.clone()),
            TruncatedFunction2d::Indicator { .. } => {
                Err(Error::Unsupported { index: i, reason: "subset oracle needs quadratic terms".into() })
            }
        })
        .collect::<Result<_>>()?;
    subset_oracle(&tqs)
}

/// Univariate version of [`subset_oracle`] for arbitrary convex terms;
/// each subset is minimized from scratch by Newton's method, and subsets
/// without a finite minimizer are skipped.
pub fn subset_oracle_1d(fs: &[TruncatedFunction1d]) -> Result<OracleValue> {
    let (fixed, free): (Vec<usize>, Vec<usize>) = (0..fs.len()).partition(|&i| fs[i].lambda() == f64::INFINITY);
    check_size(free.len())?;
    let shifted: Vec<Shift> = fs
        .iter()
        .map(|f| {
            let l = f.lambda();
            Shift { f: f.as_convex(), by: if l.is_finite() { l } else { 0.0 } }
        })
        .collect();
    let lambda_sum: f64 = fs.iter().map(|f| f.lambda()).filter(|l| l.is_finite()).sum();
    let best = (0..1u64 << free.len())
        .into_par_iter()
        .filter_map(|mask| {
            let members = subset_of(&fixed, &free, mask);
            if members.is_empty() {
                return Some((0.0, 0.0, mask));
            }
            let refs: Vec<&dyn ConvexScalarFn> = members.iter().map(|&i| &shifted[i] as &dyn ConvexScalarFn).collect();
            let x0 = start_point(&refs);
            minimize_convex_sum_from(&refs, x0).ok().map(|(x, v)| (v, x, mask))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let (value, x, mask) = best.ok_or(Error::Unbounded)?;
    Ok(OracleValue { value: value + lambda_sum, x: vec![x], subset: subset_of(&fixed, &free, mask) })
}

fn start_point(fs: &[&dyn ConvexScalarFn]) -> f64 {
    let hints: Vec<f64> = fs.iter().filter_map(|f| f.hint()).collect();
    if hints.is_empty() {
        0.0
    } else {
        hints.iter().sum::<f64>() / hints.len() as f64
    }
}

/// Exhaustive evaluation on a uniform grid with `resolution` points per
/// axis (endpoints included) over the box `bounds`. The gap to the true
/// minimum over the box is at most the Lipschitz constant times half the
/// cell diagonal.
pub fn grid_oracle<F>(objective: F, bounds: &[(f64, f64)], resolution: usize) -> Result<OracleValue>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if bounds.is_empty() {
        return Err(Error::invalid("bounds", "at least one axis is required"));
    }
    if resolution < 2 {
        return Err(Error::invalid("resolution", "at least 2 points per axis"));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::invalid("bounds", "each axis needs finite lo ≤ hi"));
    }
    let d = bounds.len();
    let total = (resolution as u128).pow(d as u32);
    if total > u64::MAX as u128 {
        return Err(Error::invalid("resolution", "grid too large"));
    }
    let coord = |axis: usize, k: usize| {
        let (lo, hi) = bounds[axis];
        lo + (hi - lo) * k as f64 / (resolution - 1) as f64
    };
    let best = (0..total as u64)
        .into_par_iter()
        .fold(
            || (f64::INFINITY, u64::MAX, vec![0.0; d]),
            |mut acc, flat| {
                let mut rest = flat;
                for axis in 0..d {
                    acc.2[axis] = coord(axis, (rest % resolution as u64) as usize);
                    rest /= resolution as u64;
                }
                let v = objective(&acc.2);
                if v < acc.0 || (v == acc.0 && flat < acc.1) {
                    acc.0 = v;
                    acc.1 = flat;
                }
                acc
            },
        )
        .map(|(v, flat, _)| (v, flat))
        .reduce(|| (f64::INFINITY, u64::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut rest = best.1;
    let mut x = vec![0.0; d];
    for (axis, xi) in x.iter_mut().enumerate() {
        *xi = coord(axis, (rest % resolution as u64) as usize);
        rest /= resolution as u64;
    }
    Ok(OracleValue { value: best.0, x, subset: Vec::new() })
}
