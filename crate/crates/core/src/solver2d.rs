//! Exact minimization of a sum of planar truncated functions.
//!
//! Every truncation boundary is walked once. Along the walk the set `I` of
//! regions `C_k` containing the current arc is updated at each crossing,
//! and the untruncated minimum of `I` and of `J = I ∖ {owner}` is taken at
//! every crossing and once at a probe point per component. The best of
//! these candidates, together with the empty set, is the global minimum.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry2d::{
    arc_midpoint, classify, contains, crossings, objective_2d, sort_along, traversal_tangent, Boundary,
    BoundaryCurve, Point, TruncatedFunction2d,
};
use crate::quadform::{ActiveSum, Minimum, Quadratic};
use crate::solution::Solution;

/// Events between membership re-checks.
const RESEED_EVERY: usize = 64;
/// `|cos|` of the crossing angle below which a crossing counts as a tangency.
const TANGENT_COS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Quadratic,
    Indicator,
}

/// Boundaries merged when they coincide, with the terms that own them.
#[derive(Debug, Clone)]
struct Group {
    curve: BoundaryCurve,
    members: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Event {
    point: Point,
    other: usize,
    /// Outward normal of the other group's boundary at `point`.
    normal: Point,
}

struct Arrangement<'a> {
    fs: &'a [TruncatedFunction2d],
    mode: Mode,
    groups: Vec<Group>,
    /// Terms whose region is the whole plane.
    always: Vec<usize>,
    /// Terms with a curve, in index order.
    toggled: Vec<usize>,
    /// Per group, crossings with every other group.
    events: Vec<Vec<Event>>,
}

impl<'a> Arrangement<'a> {
    fn build(fs: &'a [TruncatedFunction2d]) -> Result<Self> {
        let quad = fs.iter().any(|f| matches!(f, TruncatedFunction2d::Quadratic(_)));
        let ind = fs.iter().any(|f| matches!(f, TruncatedFunction2d::Indicator { .. }));
        if quad && ind {
            return Err(Error::invalid("terms", "quadratic and indicator terms cannot be mixed"));
        }
        let mode = if ind { Mode::Indicator } else { Mode::Quadratic };
        let classes: Vec<Boundary> = fs.par_iter().enumerate().map(|(i, f)| classify(f, i)).collect::<Result<_>>()?;
        let mut groups: Vec<Group> = Vec::new();
        let mut always = Vec::new();
        let mut toggled = Vec::new();
        for (i, class) in classes.into_iter().enumerate() {
            match class {
                Boundary::Everywhere => always.push(i),
                Boundary::Nowhere => {}
                Boundary::Curve(curve) => {
                    toggled.push(i);
                    match groups.iter_mut().find(|g| g.curve.coincides_with(&curve)) {
                        Some(g) => g.members.push(i),
                        None => groups.push(Group { curve, members: vec![i] }),
                    }
                }
            }
        }
        let pair_lists: Vec<Vec<(usize, usize, Event, Event)>> = (0..groups.len())
            .into_par_iter()
            .map(|a| {
                let mut out = Vec::new();
                for b in a + 1..groups.len() {
                    for c in crossings(&groups[a].curve, &groups[b].curve)? {
                        out.push((
                            a,
                            b,
                            Event { point: c.point, other: b, normal: c.normal_second },
                            Event { point: c.point, other: a, normal: c.normal_first },
                        ));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut events: Vec<Vec<Event>> = vec![Vec::new(); groups.len()];
        for (a, b, ea, eb) in pair_lists.into_iter().flatten() {
            events[a].push(ea);
            events[b].push(eb);
        }
        Ok(Arrangement { fs, mode, groups, always, toggled, events })
    }

    /// Group indices whose regions contain `p`.
    fn members_at(&self, p: Point) -> Vec<bool> {
        self.groups.iter().map(|g| contains(&self.fs[g.members[0]], p)).collect()
    }

    /// Walks every component of group `gi`, calling `visit` with the
    /// membership vector over groups, the excluded group (for `J`) and the
    /// current point.
    fn traverse<V: FnMut(&[bool], Option<usize>, Point)>(&self, gi: usize, mut visit: V) {
        let group = &self.groups[gi];
        let tagged: Vec<(Point, usize)> = self.events[gi].iter().enumerate().map(|(k, e)| (e.point, k)).collect();
        for (ci, comp) in sort_along(&group.curve, &tagged).into_iter().enumerate() {
            let mut inside = self.members_at(comp.probe);
            inside[gi] = true;
            visit(&inside, None, comp.probe);
            visit(&inside, Some(gi), comp.probe);
            for (j, cp) in comp.points.iter().enumerate() {
                let ev = &self.events[gi][cp.other];
                let tangent = traversal_tangent(&group.curve, ci, ev.point);
                let cos = dot(ev.normal, tangent) / (norm(ev.normal) * norm(tangent));
                if cos < -TANGENT_COS {
                    inside[ev.other] = true;
                } else if cos > TANGENT_COS {
                    inside[ev.other] = false;
                } else {
                    inside[ev.other] = !inside[ev.other];
                    visit(&inside, None, ev.point);
                    visit(&inside, Some(gi), ev.point);
                    inside[ev.other] = !inside[ev.other];
                }
                if (j + 1) % RESEED_EVERY == 0 {
                    let mid = arc_midpoint(&group.curve, ci, &comp.points, j);
                    let mut fresh = self.members_at(mid);
                    fresh[gi] = true;
                    inside = fresh;
                }
                visit(&inside, None, ev.point);
                visit(&inside, Some(gi), ev.point);
            }
        }
    }

    fn term_set(&self, inside: &[bool], exclude: Option<usize>) -> Vec<usize> {
        let mut set: Vec<usize> = inside
            .iter()
            .enumerate()
            .filter(|&(g, &on)| on && Some(g) != exclude)
            .flat_map(|(g, _)| self.groups[g].members.iter().copied())
            .collect();
        set.sort_unstable();
        set
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    x: Point,
    active: Vec<usize>,
    visited: usize,
}

impl Best {
    fn none() -> Self {
        Best { value: f64::INFINITY, x: [0.0, 0.0], active: Vec::new(), visited: 0 }
    }

    fn offer(&mut self, value: f64, x: Point, active: impl FnOnce() -> Vec<usize>) {
        self.visited += 1;
        if value < self.value {
            self.value = value;
            self.x = x;
            self.active = active();
        }
    }

    fn merge(mut self, other: Best) -> Best {
        let visited = self.visited + other.visited;
        if other.value < self.value {
            self = other;
        }
        self.visited = visited;
        self
    }
}

/// Shifted quadratic `f_k − λ_k` (or `f_k` when `λ_k = ∞`).
fn shifted(f: &TruncatedFunction2d) -> Quadratic {
    match f {
        TruncatedFunction2d::Quadratic(t) if t.lambda.is_finite() => t.q.offset(-t.lambda),
        TruncatedFunction2d::Quadratic(t) => t.q.clone(),
        TruncatedFunction2d::Indicator { .. } => unreachable!("indicator terms have no quadratic form"),
    }
}

fn finite_lambda_sum(fs: &[TruncatedFunction2d]) -> f64 {
    fs.iter().map(|f| f.lambda()).filter(|l| l.is_finite()).sum()
}

/// Global minimizer of `Σ min{f_i, λ_i}` over the plane.
pub fn minimize_sum_2d(fs: &[TruncatedFunction2d]) -> Result<Solution> {
    let arr = Arrangement::build(fs)?;
    let best = match arr.mode {
        Mode::Quadratic => solve_quadratic(&arr)?,
        Mode::Indicator => solve_indicator(&arr),
    };
    if !best.value.is_finite() {
        return Err(Error::Unbounded);
    }
    let mut active = best.active;
    active.extend(arr.always.iter().copied());
    active.sort_unstable();
    let value = match arr.mode {
        Mode::Quadratic => best.value + finite_lambda_sum(fs),
        Mode::Indicator => best.value,
    };
    Ok(Solution {
        x: best.x.to_vec(),
        value,
        active,
        pieces_visited: best.visited,
        iterations: 0,
        converged: true,
    })
}

fn solve_quadratic(arr: &Arrangement) -> Result<Best> {
    let mut used = vec![false; arr.fs.len()];
    for &i in arr.always.iter().chain(&arr.toggled) {
        used[i] = true;
    }
    let shifted: Vec<Option<Quadratic>> =
        arr.fs.iter().zip(&used).map(|(f, &u)| u.then(|| shifted(f))).collect();
    let mut base = ActiveSum::new(2);
    for &i in &arr.always {
        base.add(i, shifted[i].as_ref().expect("always-active term"))?;
    }
    let mut best = Best::none();
    consider_sum(&base, &mut best, Vec::new);

    let per_group: Vec<Best> = (0..arr.groups.len())
        .into_par_iter()
        .map(|gi| {
            let mut local = Best::none();
            let mut sum = base.clone();
            let mut current: Vec<bool> = vec![false; arr.groups.len()];
            arr.traverse(gi, |inside, exclude, _| {
                sync_sum(arr, &shifted, &mut sum, &mut current, inside, exclude);
                consider_sum(&sum, &mut local, || arr.term_set(inside, exclude));
            });
            local
        })
        .collect();
    Ok(per_group.into_iter().fold(best, Best::merge))
}

/// Brings `sum` to the membership `inside` minus `exclude`.
fn sync_sum(
    arr: &Arrangement,
    shifted: &[Option<Quadratic>],
    sum: &mut ActiveSum,
    current: &mut [bool],
    inside: &[bool],
    exclude: Option<usize>,
) {
    for g in 0..current.len() {
        let want = inside[g] && Some(g) != exclude;
        if want != current[g] {
            for &m in &arr.groups[g].members {
                let q = shifted[m].as_ref().expect("toggled term");
                let r = if want { sum.add(m, q) } else { sum.remove(m, q) };
                r.expect("membership bookkeeping is consistent");
            }
            current[g] = want;
        }
    }
}

fn consider_sum(sum: &ActiveSum, best: &mut Best, active: impl FnOnce() -> Vec<usize>) {
    match sum.minimize() {
        Minimum::Point { x, value } | Minimum::Flat { x, value } => best.offer(value, [x[0], x[1]], active),
        Minimum::Unbounded => best.visited += 1,
    }
}

fn solve_indicator(arr: &Arrangement) -> Best {
    let mut best = Best::none();
    // the empty set: any point outside all regions, or the best region otherwise
    best.offer(0.0, far_point(arr), Vec::new);
    let per_group: Vec<Best> = (0..arr.groups.len())
        .into_par_iter()
        .map(|gi| {
            let mut local = Best::none();
            arr.traverse(gi, |inside, exclude, p| {
                if exclude.is_none() {
                    let value = objective_2d(arr.fs, p);
                    local.offer(value, p, || arr.term_set(inside, None));
                }
            });
            local
        })
        .collect();
    per_group.into_iter().fold(best, Best::merge)
}

/// A point outside every indicator region.
fn far_point(arr: &Arrangement) -> Point {
    let reach = arr
        .fs
        .iter()
        .map(|f| match f {
            TruncatedFunction2d::Indicator { region, .. } => match region {
                crate::geometry2d::ConvexRegion::Disk { center, radius } => norm(*center) + radius,
                crate::geometry2d::ConvexRegion::Polygon { vertices } => {
                    vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max)
                }
            },
            TruncatedFunction2d::Quadratic(_) => 0.0,
        })
        .fold(0.0, f64::max);
    [2.0 * reach + 1.0, 0.0]
}

/// Index sets of the toggled terms met during the traversal, always
/// including the empty set. Always-active terms are left out.
pub fn enumerate_candidate_sets(fs: &[TruncatedFunction2d]) -> Result<Vec<Vec<usize>>> {
    let arr = Arrangement::build(fs)?;
    let per_group: Vec<BTreeSet<Vec<usize>>> = (0..arr.groups.len())
        .into_par_iter()
        .map(|gi| {
            let mut sets = BTreeSet::new();
            arr.traverse(gi, |inside, exclude, _| {
                sets.insert(arr.term_set(inside, exclude));
            });
            sets
        })
        .collect();
    let mut all: BTreeSet<Vec<usize>> = BTreeSet::new();
    all.insert(Vec::new());
    for s in per_group {
        all.extend(s);
    }
    Ok(all.into_iter().collect())
}
