//! 3-SAT to truncated-sum reduction. Variable `k` is TRUE iff `x_k > 0`;
//! each clause becomes seven terms `min{g_t(x), 1}` where `g_t` is 0 on one
//! orthant pattern of the clause's variables and ∞ elsewhere.

use rayon::prelude::*;

use crate::bench::Rng;
use crate::error::{Error, Result};

/// A literal: variable index (0-based) and polarity (`true` for `b_k`,
/// `false` for `¬b_k`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula3Sat {
    pub num_vars: usize,
    pub clauses: Vec<[Literal; 3]>,
}

/// Required sign per clause variable: `true` means `x_k > 0`.
pub type OrthantPattern = [(usize, bool); 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthantReduction {
    pub num_vars: usize,
    pub clauses: Vec<[OrthantPattern; 7]>,
}

/// Largest variable count accepted by [`min_by_orthants`].
pub const MAX_VARS: usize = 24;

impl Formula3Sat {
    pub fn new(num_vars: usize, clauses: Vec<[Literal; 3]>) -> Result<Self> {
        let f = Formula3Sat { num_vars, clauses };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.clauses.iter().enumerate() {
            if c.iter().any(|l| l.var >= self.num_vars) {
                return Err(Error::invalid("clauses", format!("clause {i} names a variable beyond {}", self.num_vars)));
            }
            if c[0].var == c[1].var || c[0].var == c[2].var || c[1].var == c[2].var {
                return Err(Error::invalid("clauses", format!("clause {i} repeats a variable")));
            }
        }
        Ok(())
    }

    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|l| assignment[l.var] == l.positive))
    }

    /// Brute-force satisfiability over all `2ⁿ` assignments.
    pub fn brute_force_sat(&self) -> bool {
        let n = self.num_vars;
        (0..1u64 << n).into_par_iter().any(|mask| {
            let a: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            self.is_satisfied_by(&a)
        })
    }

    /// Parses DIMACS CNF; every clause must have exactly three literals.
    pub fn from_dimacs(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut lits: Vec<(i64, usize)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if line.starts_with('%') {
                break;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if header.is_some() || parts.len() != 3 || parts[0] != "cnf" {
                    return Err(Error::Parse { line: ln + 1, reason: "expected `p cnf <vars> <clauses>`".into() });
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse { line: ln + 1, reason: e.to_string() });
                header = Some((parse(parts[1])?, parse(parts[2])?));
                continue;
            }
            if header.is_none() {
                return Err(Error::Parse { line: ln + 1, reason: "clause before the problem line".into() });
            }
            for tok in line.split_whitespace() {
                let v: i64 = tok.parse().map_err(|_| Error::Parse { line: ln + 1, reason: format!("bad literal `{tok}`") })?;
                lits.push((v, ln + 1));
            }
        }
        let (num_vars, num_clauses) = header.ok_or(Error::Parse { line: 0, reason: "missing problem line".into() })?;
        let mut clauses = Vec::new();
        let mut cur: Vec<Literal> = Vec::new();
        for (v, line) in lits {
            if v == 0 {
                if cur.len() != 3 {
                    return Err(Error::Parse { line, reason: format!("clause {} has width {}, expected 3", clauses.len() + 1, cur.len()) });
                }
                clauses.push([cur[0], cur[1], cur[2]]);
                cur.clear();
                continue;
            }
            let var = v.unsigned_abs() as usize;
            if var > num_vars {
                return Err(Error::Parse { line, reason: format!("variable {var} exceeds declared {num_vars}") });
            }
            cur.push(Literal { var: var - 1, positive: v > 0 });
        }
        if !cur.is_empty() {
            return Err(Error::Parse { line: 0, reason: "last clause is not terminated by 0".into() });
        }
        if clauses.len() != num_clauses {
            return Err(Error::Parse { line: 0, reason: format!("declared {num_clauses} clauses, found {}", clauses.len()) });
        }
        Formula3Sat::new(num_vars, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let v = l.var as i64 + 1;
                s.push_str(&format!("{} ", if l.positive { v } else { -v }));
            }
            s.push_str("0\n");
        }
        s
    }
}

/// Uniform random 3-SAT formula: each clause draws three distinct
/// variables and independent polarities.
pub fn random_formula(num_vars: usize, num_clauses: usize, rng: &mut Rng) -> Result<Formula3Sat> {
    if num_vars < 3 {
        return Err(Error::invalid("num_vars", "at least 3 variables are required"));
    }
    let clauses = (0..num_clauses)
        .map(|_| {
            let mut vars = [0usize; 3];
            for j in 0..3 {
                loop {
                    let v = rng.below(num_vars as u64) as usize;
                    if !vars[..j].contains(&v) {
                        vars[j] = v;
                        break;
                    }
                }
            }
            vars.map(|var| Literal { var, positive: rng.next_u64() & 1 == 1 })
        })
        .collect();
    Formula3Sat::new(num_vars, clauses)
}

/// Pattern `t` (1..=7) read as three binary digits, most significant
/// first; digit 1 means the literal holds.
pub fn pattern(clause: &[Literal; 3], t: u8) -> OrthantPattern {
    std::array::from_fn(|j| {
        let digit = t >> (2 - j) & 1 == 1;
        let l = clause[j];
        (l.var, digit == l.positive)
    })
}

pub fn reduce(f: &Formula3Sat) -> Result<OrthantReduction> {
    f.validate()?;
    let clauses = f.clauses.iter().map(|c| std::array::from_fn(|k| pattern(c, k as u8 + 1))).collect();
    Ok(OrthantReduction { num_vars: f.num_vars, clauses })
}

/// Sign vector of `x`: `true` iff `x_k > 0`.
pub fn signs(x: &[f64]) -> Vec<bool> {
    x.iter().map(|&v| v > 0.0).collect()
}

/// `Σ_t min{g_t, 1}` for one clause at a sign vector.
pub fn clause_value(patterns: &[OrthantPattern; 7], positive: &[bool]) -> u32 {
    patterns
        .iter()
        .map(|p| if p.iter().all(|&(k, s)| positive[k] == s) { 0 } else { 1 })
        .sum()
}

impl OrthantReduction {
    pub fn value_at_signs(&self, positive: &[bool]) -> u32 {
        self.clauses.iter().map(|c| clause_value(c, positive)).sum()
    }

    pub fn value_at(&self, x: &[f64]) -> u32 {
        self.value_at_signs(&signs(x))
    }
}

/// Exact minimum of the reduced sum over all `2ⁿ` orthants.
pub fn min_by_orthants(r: &OrthantReduction) -> Result<u32> {
    let n = r.num_vars;
    if n > MAX_VARS {
        return Err(Error::invalid("num_vars", format!("orthant enumeration limited to {MAX_VARS} variables")));
    }
    if r.clauses.is_empty() {
        return Ok(0);
    }
    Ok((0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let s: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            r.value_at_signs(&s)
        })
        .min()
        .unwrap_or(0))
}
