//! Cyclic coordinate descent for sums of truncated convex functions in many
//! variables, where each term reads only a few coordinates.
//!
//! Each coordinate update restricts the objective to one variable, which
//! leaves a univariate sum of truncated convex functions that the 1-D sweep
//! minimizes exactly. Only terms touching the coordinate are sliced.

use serde::{Deserialize, Serialize};

use crate::convex1d::PoissonTerm;
use crate::error::{Error, Result};
use crate::quadform::TruncatedQuadratic;
use crate::solution::Solution;
use crate::solver1d::{minimize_sum_1d, objective_1d, QuadSweeper, QuadTerm, TruncatedFunction1d};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// A term of a sparse objective together with the coordinates it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SparseTerm {
    /// `min{w·(Σ_k c_k x_{s_k} − t)², λ}`.
    SquaredResidual {
        support: Vec<usize>,
        coefs: Vec<f64>,
        target: f64,
        weight: f64,
        #[serde(with = "crate::quadform::level")]
        lambda: f64,
    },
    /// A truncated quadratic in the variables `x_{s_0}, x_{s_1}, …`.
    Quadratic { support: Vec<usize>, term: TruncatedQuadratic },
    /// `min{e^θ − θy, λ}` with `θ = offset + Σ_k c_k x_{s_k}`.
    Poisson {
        support: Vec<usize>,
        coefs: Vec<f64>,
        offset: f64,
        y: f64,
        #[serde(with = "crate::quadform::level")]
        lambda: f64,
    },
}

impl SparseTerm {
    pub fn support(&self) -> &[usize] {
        match self {
            SparseTerm::SquaredResidual { support, .. }
            | SparseTerm::Quadratic { support, .. }
            | SparseTerm::Poisson { support, .. } => support,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            SparseTerm::SquaredResidual { lambda, .. } | SparseTerm::Poisson { lambda, .. } => *lambda,
            SparseTerm::Quadratic { term, .. } => term.lambda,
        }
    }

    fn is_quadratic(&self) -> bool {
        !matches!(self, SparseTerm::Poisson { .. })
    }

    /// The untruncated value at `x`.
    pub fn inner_value(&self, x: &[f64]) -> f64 {
        match self {
            SparseTerm::SquaredResidual { support, coefs, target, weight, .. } => {
                let r: f64 = support.iter().zip(coefs).map(|(&k, c)| c * x[k]).sum::<f64>() - target;
                weight * r * r
            }
            SparseTerm::Quadratic { support, term } => {
                let z: Vec<f64> = support.iter().map(|&k| x[k]).collect();
                term.q.eval_unchecked(&z)
            }
            SparseTerm::Poisson { support, coefs, offset, y, .. } => {
                let theta = offset + support.iter().zip(coefs).map(|(&k, c)| c * x[k]).sum::<f64>();
                theta.exp() - theta * y
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.inner_value(x).min(self.lambda())
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let support = self.support();
        if support.is_empty() {
            return Err(Error::invalid("support", "must be nonempty"));
        }
        if let Some(&k) = support.iter().find(|&&k| k >= dim) {
            return Err(Error::invalid("support", format!("coordinate {k} out of range for dimension {dim}")));
        }
        let mut sorted = support.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("support", "coordinates must be distinct"));
        }
        let check_coefs = |coefs: &[f64]| {
            if coefs.len() != support.len() {
                return Err(Error::invalid("coefs", "length must match support"));
            }
            if coefs.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("coefs", "must be finite"));
            }
            Ok(())
        };
        let check_lambda = |l: f64| {
            if l.is_nan() || l == f64::NEG_INFINITY {
                return Err(Error::invalid("lambda", "must be a number or +inf"));
            }
            Ok(())
        };
        match self {
            SparseTerm::SquaredResidual { coefs, target, weight, lambda, .. } => {
                check_coefs(coefs)?;
                check_lambda(*lambda)?;
                if !(target.is_finite() && weight.is_finite() && *weight >= 0.0) {
                    return Err(Error::invalid("weight", "target must be finite and weight nonnegative"));
                }
            }
            SparseTerm::Quadratic { term, .. } => {
                if term.dim() != support.len() {
                    return Err(Error::DimensionMismatch { expected: support.len(), got: term.dim() });
                }
            }
            SparseTerm::Poisson { coefs, offset, y, lambda, .. } => {
                check_coefs(coefs)?;
                check_lambda(*lambda)?;
                if !(offset.is_finite() && y.is_finite() && *y >= 0.0) {
                    return Err(Error::invalid("y", "offset must be finite and y nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Restriction to coordinate `support[pos]` with the others frozen at `x`,
    /// as `(½a t² + b t + c)` for quadratic terms.
    fn quad_slice(&self, pos: usize, x: &[f64]) -> QuadTerm {
        match self {
            SparseTerm::SquaredResidual { support, coefs, target, weight, lambda } => {
                let mut r = -target;
                for (q, (&k, c)) in support.iter().zip(coefs).enumerate() {
                    if q != pos {
                        r += c * x[k];
                    }
                }
                let cj = coefs[pos];
                QuadTerm { a: 2.0 * weight * cj * cj, b: 2.0 * weight * cj * r, c: weight * r * r, lambda: *lambda }
            }
            SparseTerm::Quadratic { support, term } => {
                let q = &term.q;
                let m = support.len();
                let mut b = q.b()[pos];
                let mut c = q.c();
                for k in 0..m {
                    if k == pos {
                        continue;
                    }
                    let zk = x[support[k]];
                    b += q.a(pos, k) * zk;
                    c += q.b()[k] * zk;
                    for l in 0..m {
                        if l != pos {
                            c += 0.5 * q.a(k, l) * zk * x[support[l]];
                        }
                    }
                }
                QuadTerm { a: q.a(pos, pos), b, c, lambda: term.lambda }
            }
            SparseTerm::Poisson { .. } => unreachable!("Poisson terms have no quadratic slice"),
        }
    }

    fn slice(&self, pos: usize, x: &[f64]) -> TruncatedFunction1d {
        match self {
            SparseTerm::Poisson { support, coefs, offset, y, lambda } => {
                let mut theta0 = *offset;
                for (q, (&k, c)) in support.iter().zip(coefs).enumerate() {
                    if q != pos {
                        theta0 += c * x[k];
                    }
                }
                TruncatedFunction1d::convex(PoissonTerm { offset: theta0, scale: coefs[pos], y: *y }, *lambda)
            }
            _ => {
                let t = self.quad_slice(pos, x);
                TruncatedFunction1d::quadratic(t.a, t.b, t.c, t.lambda)
            }
        }
    }
}

/// Sparse objective `Σ_i min{f_i(x), λ_i}` with a coordinate → term index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTruncatedSum {
    dim: usize,
    terms: Vec<SparseTerm>,
    /// For each coordinate, `(term, position in the term's support)`.
    index: Vec<Vec<(usize, usize)>>,
}

impl SparseTruncatedSum {
    pub fn new(dim: usize, terms: Vec<SparseTerm>) -> Result<Self> {
        let mut index = vec![Vec::new(); dim];
        for (i, t) in terms.iter().enumerate() {
            t.validate(dim).map_err(|e| e.at_term(i))?;
            for (pos, &k) in t.support().iter().enumerate() {
                index[k].push((i, pos));
            }
        }
        Ok(SparseTruncatedSum { dim, terms, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[SparseTerm] {
        &self.terms
    }

    /// Terms reading coordinate `j`.
    pub fn touching(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.index[j].iter().map(|&(i, _)| i)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// The terms touching `j` as univariate functions of `x_j`, all other
    /// coordinates frozen at `x`.
    pub fn slice_1d(&self, j: usize, x: &[f64]) -> Result<Vec<TruncatedFunction1d>> {
        if j >= self.dim {
            return Err(Error::invalid("j", format!("coordinate {j} out of range for dimension {}", self.dim)));
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.index[j].iter().map(|&(i, pos)| self.terms[i].slice(pos, x)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcdOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every coordinate update (costs a full
    /// evaluation per update).
    pub trace_updates: bool,
}

impl Default for CcdOptions {
    fn default() -> Self {
        CcdOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, trace_updates: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcdOutcome {
    pub solution: Solution,
    /// Term restrictions built, summed over all updates.
    pub term_slices: usize,
    /// Objective after each full cycle.
    pub cycle_values: Vec<f64>,
    /// Objective after each coordinate update, when requested.
    pub update_values: Vec<f64>,
}

/// Cyclic coordinate descent from `x0`, visiting coordinates `0..d` in order.
/// A coordinate moves only when its univariate minimum is strictly below
/// the current slice value. Stops when the largest change over a cycle is
/// below `tol` or after `max_iter` cycles (`converged = false`).
pub fn minimize_ccd(p: &SparseTruncatedSum, x0: &[f64], opts: CcdOptions) -> Result<CcdOutcome> {
    if x0.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: x0.len() });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let mut x = x0.to_vec();
    let mut sweeper = QuadSweeper::new();
    let mut quad_buf: Vec<QuadTerm> = Vec::new();
    let mut term_slices = 0usize;
    let mut cycle_values = Vec::new();
    let mut update_values = Vec::new();
    let mut converged = false;
    let mut cycles = 0;
    while cycles < opts.max_iter {
        cycles += 1;
        let mut max_change = 0.0_f64;
        for j in 0..p.dim {
            let touching = &p.index[j];
            if touching.is_empty() {
                continue;
            }
            term_slices += touching.len();
            let current = x[j];
            let all_quad = touching.iter().all(|&(i, _)| p.terms[i].is_quadratic());
            let (cand, cand_value, cur_value) = if all_quad {
                quad_buf.clear();
                quad_buf.extend(touching.iter().map(|&(i, pos)| p.terms[i].quad_slice(pos, &x)));
                let (t, v) = sweeper.minimize(&quad_buf).map_err(|e| coordinate_error(j, e))?;
                (t, v, quad_buf.iter().map(|q| q.eval(current)).sum::<f64>())
            } else {
                let fs: Vec<TruncatedFunction1d> = touching.iter().map(|&(i, pos)| p.terms[i].slice(pos, &x)).collect();
                let s = minimize_sum_1d(&fs).map_err(|e| coordinate_error(j, e))?;
                (s.x[0], s.value, objective_1d(&fs, current))
            };
            if cand_value < cur_value && cand != current {
                max_change = max_change.max((cand - current).abs());
                x[j] = cand;
            }
            if opts.trace_updates {
                update_values.push(p.objective(&x));
            }
        }
        cycle_values.push(p.objective(&x));
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    let value = p.objective(&x);
    let active = p
        .terms
        .iter()
        .enumerate()
        .filter(|(_, t)| t.inner_value(&x) <= t.lambda())
        .map(|(i, _)| i)
        .collect();
    Ok(CcdOutcome {
        solution: Solution { x, value, active, pieces_visited: term_slices, iterations: cycles, converged },
        term_slices,
        cycle_values,
        update_values,
    })
}

fn coordinate_error(j: usize, e: Error) -> Error {
    Error::invalid("coordinate", format!("subproblem for x[{j}] failed: {e}"))
}
