//! Truncation boundaries in the plane and the operations the 2-D sweep needs:
//! construction from a term, pairwise intersection, closed membership, and
//! ordering of points along a boundary.
//!
//! A boundary is made of one or more *components* that are traversed
//! independently: an ellipse, circle or convex polygon has one closed
//! component, a strip has two open lines. Closed components are traversed
//! clockwise, lines in the direction of increasing parameter.

use std::f64::consts::{PI, TAU};

use nalgebra::{Complex, Matrix4, Schur};

use crate::error::{Error, Result};
use crate::quadform::{sym_eigen_2x2, TruncatedQuadratic, PIVOT_RTOL};

pub type Point = [f64; 2];

/// Intersection points closer than this are merged.
pub const DEDUP_SPACING: f64 = 1e-7;
/// Acceptance threshold on the normalized implicit functions after polishing.
const ON_CURVE_TOL: f64 = 1e-8;
/// Absolute slack of closed membership in indicator regions.
pub const CONTAINS_SLACK: f64 = 1e-9;

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// A convex region used by indicator terms.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexRegion {
    Disk { center: Point, radius: f64 },
    /// Strictly convex, counter-clockwise.
    Polygon { vertices: Vec<Point> },
}

impl ConvexRegion {
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        validate_polygon(&vertices)?;
        Ok(ConvexRegion::Polygon { vertices })
    }

    /// Closed membership with an absolute slack `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        match self {
            ConvexRegion::Disk { center, radius } => dist(p, *center) <= radius + tol,
            ConvexRegion::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|k| {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    let e = sub(b, a);
                    cross(e, sub(p, a)) >= -tol * norm(e)
                })
            }
        }
    }

    pub fn translated(&self, by: Point) -> Self {
        match self {
            ConvexRegion::Disk { center, radius } => ConvexRegion::Disk { center: add(*center, by), radius: *radius },
            ConvexRegion::Polygon { vertices } => ConvexRegion::Polygon {
                vertices: vertices.iter().map(|&v| add(v, by)).collect(),
            },
        }
    }

    /// Point reflection through the origin, `{−y : y ∈ S}`; keeps CCW order.
    pub fn mirrored(&self) -> Self {
        match self {
            ConvexRegion::Disk { center, radius } => ConvexRegion::Disk { center: scale(*center, -1.0), radius: *radius },
            ConvexRegion::Polygon { vertices } => ConvexRegion::Polygon {
                vertices: vertices.iter().map(|&v| scale(v, -1.0)).collect(),
            },
        }
    }
}

fn validate_polygon(vertices: &[Point]) -> Result<()> {
    if vertices.len() < 3 {
        return Err(Error::invalid("vertices", "a polygon needs at least 3 vertices"));
    }
    let n = vertices.len();
    for k in 0..n {
        let a = vertices[k];
        let b = vertices[(k + 1) % n];
        let c = vertices[(k + 2) % n];
        if cross(sub(b, a), sub(c, b)) <= 0.0 {
            return Err(Error::invalid("vertices", "polygon must be strictly convex and counter-clockwise"));
        }
    }
    Ok(())
}

/// A planar truncated convex function.
#[derive(Debug, Clone, PartialEq)]
pub enum TruncatedFunction2d {
    Quadratic(TruncatedQuadratic),
    /// `−weight` on `region`, `+∞` outside, truncated at level 0.
    Indicator { region: ConvexRegion, weight: f64 },
}

impl TruncatedFunction2d {
    pub fn lambda(&self) -> f64 {
        match self {
            TruncatedFunction2d::Quadratic(t) => t.lambda,
            TruncatedFunction2d::Indicator { .. } => 0.0,
        }
    }

    /// `min{f(p), λ}`.
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            TruncatedFunction2d::Quadratic(t) => t.q.eval_unchecked(&p).min(t.lambda),
            TruncatedFunction2d::Indicator { region, weight } => {
                if region.contains(p, CONTAINS_SLACK) {
                    -weight
                } else {
                    0.0
                }
            }
        }
    }
}

impl From<TruncatedQuadratic> for TruncatedFunction2d {
    fn from(t: TruncatedQuadratic) -> Self {
        TruncatedFunction2d::Quadratic(t)
    }
}

/// `Σ min{f_i(p), λ_i}`.
pub fn objective_2d(fs: &[TruncatedFunction2d], p: Point) -> f64 {
    fs.iter().map(|f| f.eval(p)).sum()
}

/// `C_i = {f_i ≤ λ_i}` membership, closed, with slack `1e-9·(1+|λ|)` for
/// quadratics and an absolute `CONTAINS_SLACK` for indicator regions.
pub fn contains(f: &TruncatedFunction2d, p: Point) -> bool {
    match f {
        TruncatedFunction2d::Quadratic(t) => {
            t.lambda == f64::INFINITY || t.q.eval_unchecked(&p) <= t.lambda + 1e-9 * (1.0 + t.lambda.abs())
        }
        TruncatedFunction2d::Indicator { region, .. } => region.contains(p, CONTAINS_SLACK),
    }
}

/// Geometry of a truncation boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveShape {
    /// Semi-axes `a ≥ b`; `theta` is the direction of the `a` axis.
    Ellipse { center: Point, a: f64, b: f64, theta: f64 },
    Circle { center: Point, radius: f64 },
    /// `{p : o1 ≤ n·p ≤ o2}` with unit normal `n`.
    Strip { normal: Point, o1: f64, o2: f64 },
    ConvexPolygon { vertices: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub shape: CurveShape,
    pub owner: usize,
}

/// What a term's boundary analysis found.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Curve(BoundaryCurve),
    /// `C_i` is the whole plane (`λ = ∞` or a constant below its level).
    Everywhere,
    /// `C_i` is empty or a null set.
    Nowhere,
}

/// The truncation boundary of a planar term, or `None` when `C_i` is empty
/// or the whole plane.
pub fn boundary_of(f: &TruncatedFunction2d, owner: usize) -> Result<Option<BoundaryCurve>> {
    Ok(match classify(f, owner)? {
        Boundary::Curve(c) => Some(c),
        _ => None,
    })
}

pub fn classify(f: &TruncatedFunction2d, owner: usize) -> Result<Boundary> {
    match f {
        TruncatedFunction2d::Quadratic(t) => quadratic_boundary(t, owner),
        TruncatedFunction2d::Indicator { region, weight } => {
            if !(*weight > 0.0) {
                return Err(Error::Unsupported { index: owner, reason: "indicator weight must be positive".into() });
            }
            let shape = match region {
                ConvexRegion::Disk { center, radius } => {
                    if !(*radius > 0.0) {
                        return Err(Error::Unsupported { index: owner, reason: "disk radius must be positive".into() });
                    }
                    CurveShape::Circle { center: *center, radius: *radius }
                }
                ConvexRegion::Polygon { vertices } => {
                    validate_polygon(vertices).map_err(|e| e.at_term(owner))?;
                    CurveShape::ConvexPolygon { vertices: vertices.clone() }
                }
            };
            Ok(Boundary::Curve(BoundaryCurve { shape, owner }))
        }
    }
}

fn quadratic_boundary(t: &TruncatedQuadratic, owner: usize) -> Result<Boundary> {
    if t.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: t.dim() }.at_term(owner));
    }
    if t.lambda == f64::INFINITY {
        return Ok(Boundary::Everywhere);
    }
    let q = &t.q;
    let (vals, vecs) = sym_eigen_2x2(q.a(0, 0), q.a(0, 1), q.a(1, 1));
    let pivot = PIVOT_RTOL * q.max_abs_a();
    let unsupported = |reason: &str| Error::Unsupported { index: owner, reason: reason.to_string() };
    if vals[0] < -pivot {
        return Err(unsupported("Hessian is not positive semidefinite"));
    }
    let b = q.b();
    if vals[1] <= pivot {
        // constant or affine
        if q.norm_b() <= 1e-12 * (1.0 + q.c().abs()) {
            return Ok(if q.c() <= t.lambda { Boundary::Everywhere } else { Boundary::Nowhere });
        }
        return Err(unsupported("affine term: half-plane boundaries are not supported"));
    }
    if vals[0] <= pivot {
        // rank one: ½σ s² + β s + c with s = uᵀx
        let u = vecs[1];
        let sigma = vals[1];
        let beta = dot(u, [b[0], b[1]]);
        let resid = sub([b[0], b[1]], scale(u, beta));
        if norm(resid) > 1e-9 * (1.0 + q.norm_b()) {
            return Err(unsupported("rank-one Hessian with linear term outside its range"));
        }
        let k = q.c() - t.lambda;
        let disc = beta * beta - 2.0 * sigma * k;
        if disc <= 0.0 {
            return Ok(Boundary::Nowhere);
        }
        let sq = disc.sqrt();
        let (o1, o2) = ((-beta - sq) / sigma, (-beta + sq) / sigma);
        return Ok(Boundary::Curve(BoundaryCurve { shape: CurveShape::Strip { normal: u, o1, o2 }, owner }));
    }
    // positive definite: ½(x−m)ᵀA(x−m) + v_min
    let det = vals[0] * vals[1];
    let (a11, a12, a22) = (q.a(0, 0), q.a(0, 1), q.a(1, 1));
    let m = [-(a22 * b[0] - a12 * b[1]) / det, -(a11 * b[1] - a12 * b[0]) / det];
    let vmin = q.eval_unchecked(&m);
    let kappa = 2.0 * (t.lambda - vmin);
    if !(kappa > 0.0) {
        return Ok(Boundary::Nowhere);
    }
    let a = (kappa / vals[0]).sqrt();
    let bb = (kappa / vals[1]).sqrt();
    let shape = if (vals[1] - vals[0]) <= 1e-12 * vals[1] {
        CurveShape::Circle { center: m, radius: a }
    } else {
        let dir = vecs[0];
        CurveShape::Ellipse { center: m, a, b: bb, theta: dir[1].atan2(dir[0]) }
    };
    Ok(Boundary::Curve(BoundaryCurve { shape, owner }))
}

/// `(p−c)ᵀM(p−c) − 1` with `p(t) = c + u cos t + v sin t` on its zero set.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Conic {
    c: Point,
    u: Point,
    v: Point,
    m: [f64; 3],
}

impl Conic {
    fn ellipse(center: Point, a: f64, b: f64, theta: f64) -> Self {
        let (s, co) = theta.sin_cos();
        let (ia, ib) = (1.0 / (a * a), 1.0 / (b * b));
        Conic {
            c: center,
            u: [a * co, a * s],
            v: [-b * s, b * co],
            m: [ia * co * co + ib * s * s, (ia - ib) * co * s, ia * s * s + ib * co * co],
        }
    }

    fn circle(center: Point, r: f64) -> Self {
        Conic { c: center, u: [r, 0.0], v: [0.0, r], m: [1.0 / (r * r), 0.0, 1.0 / (r * r)] }
    }

    fn mul(&self, d: Point) -> Point {
        [self.m[0] * d[0] + self.m[1] * d[1], self.m[1] * d[0] + self.m[2] * d[1]]
    }

    fn eval(&self, p: Point) -> f64 {
        let d = sub(p, self.c);
        dot(d, self.mul(d)) - 1.0
    }

    fn grad(&self, p: Point) -> Point {
        scale(self.mul(sub(p, self.c)), 2.0)
    }

    fn at(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        add(self.c, add(scale(self.u, c), scale(self.v, s)))
    }

    fn param(&self, p: Point) -> f64 {
        // solve d = u cos t + v sin t
        let d = sub(p, self.c);
        let det = cross(self.u, self.v);
        let cos_t = cross(d, self.v) / det;
        let sin_t = cross(self.u, d) / det;
        sin_t.atan2(cos_t).rem_euclid(TAU)
    }

    /// Clockwise tangent at parameter `t`.
    fn cw_tangent(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        sub(scale(self.u, s), scale(self.v, c))
    }
}

/// One traversable piece of a boundary.
#[derive(Debug, Clone, PartialEq)]
enum Component {
    Conic(Conic),
    /// `p0 + s·tau`; `outward` is the normal pointing out of `C_i`.
    Line { p0: Point, tau: Point, outward: Point },
    Polygon { vertices: Vec<Point>, perimeter: f64 },
}

impl Component {
    fn is_closed(&self) -> bool {
        !matches!(self, Component::Line { .. })
    }

    fn period(&self) -> f64 {
        match self {
            Component::Conic(_) => TAU,
            Component::Line { .. } => f64::INFINITY,
            Component::Polygon { perimeter, .. } => *perimeter,
        }
    }

    /// Sort key of `p` along the traversal direction.
    fn key(&self, p: Point) -> f64 {
        match self {
            Component::Conic(c) => (TAU - c.param(p)).rem_euclid(TAU),
            Component::Line { p0, tau, .. } => dot(sub(p, *p0), *tau),
            Component::Polygon { vertices, perimeter } => {
                let (edge, s) = nearest_edge(vertices, p);
                let before: f64 = (0..edge).map(|k| dist(vertices[k + 1], vertices[k])).sum();
                (perimeter - (before + s)).rem_euclid(*perimeter)
            }
        }
    }

    fn point_at(&self, key: f64) -> Point {
        match self {
            Component::Conic(c) => c.at((TAU - key).rem_euclid(TAU)),
            Component::Line { p0, tau, .. } => add(*p0, scale(*tau, key)),
            Component::Polygon { vertices, perimeter } => {
                let mut pos = (perimeter - key).rem_euclid(*perimeter);
                let n = vertices.len();
                for k in 0..n {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    let len = dist(a, b);
                    if pos <= len || k == n - 1 {
                        return add(a, scale(sub(b, a), pos.min(len) / len));
                    }
                    pos -= len;
                }
                vertices[0]
            }
        }
    }

    fn tangent(&self, p: Point) -> Point {
        match self {
            Component::Conic(c) => c.cw_tangent(c.param(p)),
            Component::Line { tau, .. } => *tau,
            Component::Polygon { vertices, .. } => {
                let (edge, _) = nearest_edge(vertices, p);
                let a = vertices[edge];
                let b = vertices[(edge + 1) % vertices.len()];
                scale(sub(b, a), -1.0)
            }
        }
    }
}

/// Edge index nearest to `p` and the distance of the projection from the
/// edge start.
fn nearest_edge(vertices: &[Point], p: Point) -> (usize, f64) {
    let n = vertices.len();
    let mut best = (f64::INFINITY, 0, 0.0);
    for k in 0..n {
        let a = vertices[k];
        let b = vertices[(k + 1) % n];
        let e = sub(b, a);
        let len = norm(e);
        let s = (dot(sub(p, a), e) / len).clamp(0.0, len);
        let q = add(a, scale(e, s / len));
        let d = dist(p, q);
        if d < best.0 {
            best = (d, k, s);
        }
    }
    (best.1, best.2)
}

fn polygon_perimeter(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    (0..n).map(|k| dist(vertices[k], vertices[(k + 1) % n])).sum()
}

impl BoundaryCurve {
    fn components(&self) -> Vec<Component> {
        match &self.shape {
            CurveShape::Ellipse { center, a, b, theta } => vec![Component::Conic(Conic::ellipse(*center, *a, *b, *theta))],
            CurveShape::Circle { center, radius } => vec![Component::Conic(Conic::circle(*center, *radius))],
            CurveShape::Strip { normal, o1, o2 } => {
                let tau = [-normal[1], normal[0]];
                vec![
                    Component::Line { p0: scale(*normal, *o1), tau, outward: scale(*normal, -1.0) },
                    Component::Line { p0: scale(*normal, *o2), tau, outward: *normal },
                ]
            }
            CurveShape::ConvexPolygon { vertices } => vec![Component::Polygon {
                vertices: vertices.clone(),
                perimeter: polygon_perimeter(vertices),
            }],
        }
    }

    pub fn component_count(&self) -> usize {
        match self.shape {
            CurveShape::Strip { .. } => 2,
            _ => 1,
        }
    }

    /// Index of the component nearest to `p`.
    pub fn component_of(&self, p: Point) -> usize {
        match &self.shape {
            CurveShape::Strip { normal, o1, o2 } => {
                let s = dot(*normal, p);
                usize::from((s - o2).abs() < (s - o1).abs())
            }
            _ => 0,
        }
    }

    /// Outward normal at a point of the boundary (not normalized).
    pub fn outward_normal(&self, p: Point) -> Point {
        match &self.shape {
            CurveShape::Ellipse { center, a, b, theta } => Conic::ellipse(*center, *a, *b, *theta).grad(p),
            CurveShape::Circle { center, radius } => Conic::circle(*center, *radius).grad(p),
            CurveShape::Strip { normal, .. } => {
                if self.component_of(p) == 0 {
                    scale(*normal, -1.0)
                } else {
                    *normal
                }
            }
            CurveShape::ConvexPolygon { vertices } => {
                let (k, _) = nearest_edge(vertices, p);
                let e = sub(vertices[(k + 1) % vertices.len()], vertices[k]);
                [e[1] / norm(e), -e[0] / norm(e)]
            }
        }
    }

    /// Normalized residual of the boundary equation at `p` (zero on the curve).
    pub fn residual(&self, p: Point) -> f64 {
        match &self.shape {
            CurveShape::Ellipse { center, a, b, theta } => Conic::ellipse(*center, *a, *b, *theta).eval(p),
            CurveShape::Circle { center, radius } => Conic::circle(*center, *radius).eval(p),
            CurveShape::Strip { normal, o1, o2 } => {
                let s = dot(*normal, p);
                (s - o1).abs().min((s - o2).abs())
            }
            CurveShape::ConvexPolygon { vertices } => {
                let (k, s) = nearest_edge(vertices, p);
                let a = vertices[k];
                let e = sub(vertices[(k + 1) % vertices.len()], a);
                dist(p, add(a, scale(e, s / norm(e))))
            }
        }
    }

    /// A characteristic length, used for relative tolerances.
    fn size(&self) -> f64 {
        match &self.shape {
            CurveShape::Ellipse { center, a, .. } => a.max(norm(*center)).max(1.0),
            CurveShape::Circle { center, radius } => radius.max(norm(*center)).max(1.0),
            CurveShape::Strip { o1, o2, .. } => o1.abs().max(o2.abs()).max(1.0),
            CurveShape::ConvexPolygon { vertices } => vertices.iter().map(|&v| norm(v)).fold(1.0, f64::max),
        }
    }

    /// Whether two boundaries are the same curve up to round-off.
    pub fn coincides_with(&self, other: &BoundaryCurve) -> bool {
        let tol = 1e-12 * self.size().max(other.size());
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let close_pt = |a: Point, b: Point| close(a[0], b[0]) && close(a[1], b[1]);
        match (&self.shape, &other.shape) {
            (
                CurveShape::Ellipse { center: c1, a: a1, b: b1, theta: t1 },
                CurveShape::Ellipse { center: c2, a: a2, b: b2, theta: t2 },
            ) => {
                let dt = (t1 - t2).rem_euclid(PI);
                close_pt(*c1, *c2) && close(*a1, *a2) && close(*b1, *b2) && (dt < 1e-12 || PI - dt < 1e-12)
            }
            (CurveShape::Circle { center: c1, radius: r1 }, CurveShape::Circle { center: c2, radius: r2 }) => {
                close_pt(*c1, *c2) && close(*r1, *r2)
            }
            (CurveShape::Strip { normal: n1, o1: a1, o2: b1 }, CurveShape::Strip { normal: n2, o1: a2, o2: b2 }) => {
                if dot(*n1, *n2) > 0.0 {
                    close_pt(*n1, *n2) && close(*a1, *a2) && close(*b1, *b2)
                } else {
                    close_pt(*n1, scale(*n2, -1.0)) && close(*a1, -b2) && close(*b1, -a2)
                }
            }
            (CurveShape::ConvexPolygon { vertices: v1 }, CurveShape::ConvexPolygon { vertices: v2 }) => {
                v1.len() == v2.len() && v1.iter().zip(v2).all(|(a, b)| close_pt(*a, *b))
            }
            _ => false,
        }
    }
}

/// A crossing between two boundaries, recorded from both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: Point,
    pub comp_first: usize,
    pub comp_second: usize,
    /// Outward normals of the first and second curve at the point.
    pub normal_first: Point,
    pub normal_second: Point,
}

/// A primitive piece of a component for pairwise intersection.
#[derive(Debug, Clone, Copy)]
enum Piece {
    Conic(Conic),
    /// Line `p0 + s·tau` with `s ∈ [lo, hi]`.
    Line { p0: Point, tau: Point, lo: f64, hi: f64, outward: Point },
}

fn pieces(curve: &BoundaryCurve) -> Vec<(usize, Piece)> {
    curve
        .components()
        .into_iter()
        .enumerate()
        .flat_map(|(ci, comp)| match comp {
            Component::Conic(c) => vec![(ci, Piece::Conic(c))],
            Component::Line { p0, tau, outward } => vec![(
                ci,
                Piece::Line { p0, tau, lo: f64::NEG_INFINITY, hi: f64::INFINITY, outward },
            )],
            Component::Polygon { vertices, .. } => {
                let n = vertices.len();
                (0..n)
                    .map(|k| {
                        let a = vertices[k];
                        let e = sub(vertices[(k + 1) % n], a);
                        let len = norm(e);
                        let tau = scale(e, 1.0 / len);
                        (ci, Piece::Line { p0: a, tau, lo: 0.0, hi: len, outward: [tau[1], -tau[0]] })
                    })
                    .collect()
            }
        })
        .collect()
}

fn piece_normal(piece: &Piece, p: Point) -> Point {
    match piece {
        Piece::Conic(c) => c.grad(p),
        Piece::Line { outward, .. } => *outward,
    }
}

/// All real intersection points of two distinct boundaries, deduplicated.
pub fn intersect(c1: &BoundaryCurve, c2: &BoundaryCurve) -> Result<Vec<Point>> {
    Ok(crossings(c1, c2)?.into_iter().map(|c| c.point).collect())
}

/// As [`intersect`], with component indices and outward normals.
pub fn crossings(c1: &BoundaryCurve, c2: &BoundaryCurve) -> Result<Vec<Crossing>> {
    if c1.coincides_with(c2) {
        return Err(Error::Geometry {
            first: c1.owner,
            second: c2.owner,
            reason: "boundaries coincide".into(),
        });
    }
    let p1 = pieces(c1);
    let p2 = pieces(c2);
    let mut out: Vec<Crossing> = Vec::new();
    for (ci, a) in &p1 {
        for (ck, b) in &p2 {
            let pts = piece_pair(a, b).map_err(|reason| Error::Geometry {
                first: c1.owner,
                second: c2.owner,
                reason,
            })?;
            for p in pts {
                if out.iter().any(|c| dist(c.point, p) < DEDUP_SPACING) {
                    continue;
                }
                out.push(Crossing {
                    point: p,
                    comp_first: *ci,
                    comp_second: *ck,
                    normal_first: piece_normal(a, p),
                    normal_second: piece_normal(b, p),
                });
            }
        }
    }
    Ok(out)
}

fn piece_pair(a: &Piece, b: &Piece) -> std::result::Result<Vec<Point>, String> {
    match (a, b) {
        (Piece::Conic(c1), Piece::Conic(c2)) => conic_conic(c1, c2),
        (Piece::Conic(c), Piece::Line { p0, tau, lo, hi, .. })
        | (Piece::Line { p0, tau, lo, hi, .. }, Piece::Conic(c)) => Ok(conic_line(c, *p0, *tau, *lo, *hi)),
        (
            Piece::Line { p0: a0, tau: ta, lo: la, hi: ha, .. },
            Piece::Line { p0: b0, tau: tb, lo: lb, hi: hb, .. },
        ) => Ok(line_line(*a0, *ta, *la, *ha, *b0, *tb, *lb, *hb).into_iter().collect()),
    }
}

#[allow(clippy::too_many_arguments)]
fn line_line(a0: Point, ta: Point, la: f64, ha: f64, b0: Point, tb: Point, lb: f64, hb: f64) -> Option<Point> {
    let den = cross(ta, tb);
    if den.abs() <= 1e-14 {
        return None;
    }
    let d = sub(b0, a0);
    let s = cross(d, tb) / den;
    let t = cross(d, ta) / den;
    let slack = 1e-12 * (1.0 + s.abs().max(t.abs()));
    (s >= la - slack && s <= ha + slack && t >= lb - slack && t <= hb + slack).then(|| add(a0, scale(ta, s)))
}

fn conic_line(c: &Conic, p0: Point, tau: Point, lo: f64, hi: f64) -> Vec<Point> {
    // E(p0 + s·tau) = qa s² + 2 qb s + qc
    let d = sub(p0, c.c);
    let mt = c.mul(tau);
    let qa = dot(tau, mt);
    let qb = dot(d, mt);
    let qc = dot(d, c.mul(d)) - 1.0;
    let disc = qb * qb - qa * qc;
    let scale_ = qb * qb + (qa * qc).abs();
    let mut roots: Vec<f64> = Vec::with_capacity(2);
    if disc < -1e-12 * scale_ {
        return Vec::new();
    }
    if disc <= 1e-12 * scale_ {
        roots.push(-qb / qa);
    } else {
        let sq = disc.sqrt();
        let q = -(qb + qb.signum() * sq);
        roots.push(q / qa);
        if q != 0.0 {
            roots.push(qc / q);
        }
    }
    let mut pts = Vec::with_capacity(2);
    for mut s in roots {
        for _ in 0..2 {
            let f = (qa * s + 2.0 * qb) * s + qc;
            let df = 2.0 * (qa * s + qb);
            if df.abs() > 1e-300 {
                s -= f / df;
            }
        }
        let slack = 1e-12 * (1.0 + s.abs());
        if s >= lo - slack && s <= hi + slack {
            let p = add(p0, scale(tau, s.clamp(lo, hi)));
            if c.eval(p).abs() <= 1e-6 && !pts.iter().any(|&q| dist(q, p) < DEDUP_SPACING) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Intersections of two ellipses. The first is parametrized by the
/// half-angle substitution `w = tan(s/2)`, which turns the second ellipse's
/// equation into a quartic in `w`. Roots come from the eigenvalues of the
/// companion matrix and are polished with Newton steps on the bivariate
/// system.
fn conic_conic(c1: &Conic, c2: &Conic) -> std::result::Result<Vec<Point>, String> {
    // Rotate the parametrization origin so that s = π (w = ∞) is far from
    // the second curve.
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..12 {
        let phi = k as f64 * PI / 6.0;
        let v = c2.eval(c1.at(phi + PI)).abs();
        if v > best.0 {
            best = (v, phi);
        }
    }
    let phi = best.1;
    let (sp, cp) = phi.sin_cos();
    let u = add(scale(c1.u, cp), scale(c1.v, sp));
    let v = sub(scale(c1.v, cp), scale(c1.u, sp));
    let d = sub(c1.c, c2.c);
    let mu = c2.mul(u);
    let mv = c2.mul(v);
    let md = c2.mul(d);
    let alpha = dot(u, mu);
    let beta = dot(v, mv);
    let gamma = dot(u, mv);
    let delta = dot(d, mu);
    let eps = dot(d, mv);
    let zeta = dot(d, md) - 1.0;
    let coeffs = [
        alpha + 2.0 * delta + zeta,
        4.0 * gamma + 4.0 * eps,
        -2.0 * alpha + 4.0 * beta + 2.0 * zeta,
        -4.0 * gamma + 4.0 * eps,
        alpha - 2.0 * delta + zeta,
    ];
    let cmax = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if cmax == 0.0 || !cmax.is_finite() {
        return Err(format!("degenerate quartic {coeffs:?}"));
    }
    let ws = real_quartic_roots(&coeffs).ok_or_else(|| format!("quartic solver failed on {coeffs:?}"))?;
    let param = |w: f64| {
        let s = 2.0 * w.atan();
        add(c1.c, add(scale(u, s.cos()), scale(v, s.sin())))
    };
    let mut pts: Vec<Point> = Vec::with_capacity(4);
    for w in ws {
        let mut p = param(w);
        for _ in 0..2 {
            p = newton_pair(c1, c2, p);
        }
        if c1.eval(p).abs() <= ON_CURVE_TOL && c2.eval(p).abs() <= ON_CURVE_TOL && !pts.iter().any(|&q| dist(q, p) < DEDUP_SPACING) {
            pts.push(p);
        }
    }
    Ok(pts)
}

fn newton_pair(c1: &Conic, c2: &Conic, p: Point) -> Point {
    let f1 = c1.eval(p);
    let f2 = c2.eval(p);
    let g1 = c1.grad(p);
    let g2 = c2.grad(p);
    let det = cross(g1, g2);
    let gscale = norm(g1) * norm(g2);
    if det.abs() > 1e-10 * gscale {
        let dx = (-f1 * g2[1] + f2 * g1[1]) / det;
        let dy = (-g1[0] * f2 + g2[0] * f1) / det;
        [p[0] + dx, p[1] + dy]
    } else {
        // near tangency: project onto the first curve
        let n2 = dot(g1, g1);
        if n2 > 0.0 {
            sub(p, scale(g1, f1 / n2))
        } else {
            p
        }
    }
}

/// Real roots of `Σ coeffs[k] wᵏ` (degree ≤ 4), from companion-matrix
/// eigenvalues with two Newton polishing steps each.
pub fn real_quartic_roots(coeffs: &[f64; 5]) -> Option<Vec<f64>> {
    let cmax = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut deg = 4;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * cmax {
        deg -= 1;
    }
    if deg == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[deg];
    let mut roots: Vec<f64> = if deg == 1 {
        vec![-coeffs[0] / coeffs[1]]
    } else {
        let mut comp = Matrix4::<f64>::zeros();
        for k in 0..deg {
            comp[(0, k)] = -coeffs[deg - 1 - k] / lead;
        }
        for k in 1..deg {
            comp[(k, k - 1)] = 1.0;
        }
        let sub = comp.view((0, 0), (deg, deg)).into_owned();
        let eig = companion_eigenvalues(sub, &coeffs[..=deg]);
        if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        eig.into_iter()
            .filter(|z| z.im.abs() <= 1e-4 * (1.0 + z.re.abs()))
            .map(|z| z.re)
            .collect()
    };
    let eval = |w: f64| {
        let mut p = 0.0;
        let mut dp = 0.0;
        for k in (0..=deg).rev() {
            dp = dp * w + p;
            p = p * w + coeffs[k];
        }
        (p, dp)
    };
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = eval(*r);
            if dp.abs() > 1e-300 {
                let next = *r - p / dp;
                if next.is_finite() {
                    *r = next;
                }
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    Some(roots)
}

/// Eigenvalues of a companion matrix. The QR iteration is capped; if it
/// stalls on both the matrix and its transpose, Aberth iteration on the
/// polynomial takes over.
fn companion_eigenvalues(comp: nalgebra::DMatrix<f64>, coeffs: &[f64]) -> Vec<Complex<f64>> {
    for m in [comp.clone(), comp.transpose()] {
        if let Some(schur) = Schur::try_new(m, f64::EPSILON, 2000) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    aberth(coeffs)
}

fn aberth(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let radius = 1.0 + coeffs[..deg].iter().fold(0.0_f64, |m, c| m.max((c / lead).abs()));
    let mut z: Vec<Complex<f64>> = (0..deg)
        .map(|k| Complex::from_polar(0.5 * radius, TAU * (k as f64 + 0.25) / deg as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0_f64;
        for i in 0..deg {
            let (mut p, mut dp) = (Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
            for k in (0..=deg).rev() {
                dp = dp * z[i] + p;
                p = p * z[i] + coeffs[k];
            }
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulse: Complex<f64> = (0..deg).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex::new(1.0, 0.0) - ratio * repulse);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// A point of a boundary component with its position in traversal order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub point: Point,
    pub arc_key: f64,
    pub other: usize,
}

/// Points of one component in traversal order, plus a probe point on the
/// arc that precedes the first point.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedComponent {
    pub closed: bool,
    pub points: Vec<CurvePoint>,
    pub probe: Point,
}

/// Orders points lying on `curve` along each of its components.
pub fn sort_along(curve: &BoundaryCurve, points: &[(Point, usize)]) -> Vec<SortedComponent> {
    let comps = curve.components();
    let mut per: Vec<Vec<CurvePoint>> = vec![Vec::new(); comps.len()];
    for &(p, other) in points {
        let ci = curve.component_of(p);
        per[ci].push(CurvePoint { point: p, arc_key: comps[ci].key(p), other });
    }
    comps
        .iter()
        .zip(per)
        .map(|(comp, mut pts)| {
            pts.sort_by(|a, b| a.arc_key.total_cmp(&b.arc_key).then(a.other.cmp(&b.other)));
            let probe = probe_point(comp, &pts);
            SortedComponent { closed: comp.is_closed(), points: pts, probe }
        })
        .collect()
}

fn probe_point(comp: &Component, pts: &[CurvePoint]) -> Point {
    if pts.is_empty() {
        return match comp {
            Component::Line { p0, .. } => *p0,
            _ => comp.point_at(arc_start(comp)),
        };
    }
    let first = pts[0].arc_key;
    if comp.is_closed() {
        let last = pts[pts.len() - 1].arc_key;
        let gap = first + comp.period() - last;
        comp.point_at((last + 0.5 * gap).rem_euclid(comp.period()))
    } else {
        let span = (pts[pts.len() - 1].arc_key - first).abs().max(1.0);
        comp.point_at(first - span)
    }
}

/// Key of parameter 0 of a closed component.
fn arc_start(comp: &Component) -> f64 {
    match comp {
        Component::Conic(_) => 0.0,
        Component::Polygon { vertices, .. } => comp.key(vertices[0]),
        Component::Line { .. } => 0.0,
    }
}

/// A point strictly inside the arc that follows `pts[j]`.
pub(crate) fn arc_midpoint(curve: &BoundaryCurve, comp_index: usize, pts: &[CurvePoint], j: usize) -> Point {
    let comps = curve.components();
    let comp = &comps[comp_index];
    let here = pts[j].arc_key;
    if j + 1 < pts.len() {
        comp.point_at(0.5 * (here + pts[j + 1].arc_key))
    } else if comp.is_closed() {
        let next = pts[0].arc_key + comp.period();
        comp.point_at((0.5 * (here + next)).rem_euclid(comp.period()))
    } else {
        comp.point_at(here + 1.0)
    }
}

/// Traversal tangent of `curve` at a point on component `comp_index`.
pub(crate) fn traversal_tangent(curve: &BoundaryCurve, comp_index: usize, p: Point) -> Point {
    curve.components()[comp_index].tangent(p)
}
