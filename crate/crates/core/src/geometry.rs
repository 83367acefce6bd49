//! Points, typed triangles, triangulated polygons and triangle shape scores.
//!
//! Vertex labeling convention shared by the prior sampler and the DP:
//!
//! * every triangle stores its vertices `x0, x1, x2` counter-clockwise;
//! * edge slot `s` is the directed edge `x_s -> x_{s+1}` (indices mod 3);
//! * solid (boundary) slots are `{0, 1}` for type 0, `{0}` for type 1 and
//!   none for type 2; the remaining slots are dashed diagonals.
//!
//! Growing the edge `(a, b)` with free vertex `c` (strictly left of `a -> b`)
//! produces `(0, b, c, a)`, `(1, b, c, a)` continuing on `(a, c)`,
//! `(1, c, a, b)` continuing on `(c, b)`, or `(2, b, c, a)` continuing on
//! `(a, c)` and `(c, b)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::GrammarParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate triangle ({0}, {1}, {2})")]
    Degenerate(Point, Point, Point),
    #[error("invalid triangle type {0}")]
    BadType(u8),
    #[error("malformed shape: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn key(self) -> [u64; 2] {
        // +0.0 and -0.0 must compare equal
        [(self.x + 0.0).to_bits(), (self.y + 0.0).to_bits()]
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn is_degenerate(a: Point, b: Point, c: Point) -> bool {
    let e1 = b.sub(a);
    let e2 = c.sub(a);
    let scale = e1.x * e1.x + e1.y * e1.y + e2.x * e2.x + e2.y * e2.y;
    let area = e1.cross(e2);
    !area.is_finite() || area.abs() <= 1e-12 * scale
}

/// True iff `c` lies strictly left of the directed line `a -> b`.
pub fn is_valid_placement(a: Point, b: Point, c: Point) -> bool {
    b.sub(a).cross(c.sub(a)) > 0.0
}

/// Log-anisotropy of the affine map taking `reference` onto `x`: the log
/// ratio of the singular values of its linear part.
pub fn log_anisotropy(reference: &[Point; 3], x: &[Point; 3]) -> Result<f64, GeometryError> {
    for t in [reference, x] {
        if is_degenerate(t[0], t[1], t[2]) {
            return Err(GeometryError::Degenerate(t[0], t[1], t[2]));
        }
    }
    Ok(log_anisotropy_unchecked(reference, x))
}

/// `log_anisotropy` without the degeneracy check; infinite or NaN for
/// degenerate input.
pub(crate) fn log_anisotropy_unchecked(reference: &[Point; 3], x: &[Point; 3]) -> f64 {
    // Linear part A solves A [r1 - r0, r2 - r0] = [x1 - x0, x2 - x0].
    let p1 = reference[1].sub(reference[0]);
    let p2 = reference[2].sub(reference[0]);
    let q1 = x[1].sub(x[0]);
    let q2 = x[2].sub(x[0]);
    let det_p = p1.cross(p2);
    // inverse of [[p1.x, p2.x], [p1.y, p2.y]]
    let (i00, i01, i10, i11) = (p2.y / det_p, -p2.x / det_p, -p1.y / det_p, p1.x / det_p);
    let a = q1.x * i00 + q2.x * i10;
    let b = q1.x * i01 + q2.x * i11;
    let c = q1.y * i00 + q2.y * i10;
    let d = q1.y * i01 + q2.y * i11;
    // sigma1 + sigma2 and sigma1 - sigma2 of a 2x2 matrix, written without
    // cancellation.
    let (sum, diff) = if a * d - b * c >= 0.0 {
        ((a + d).hypot(b - c), (a - d).hypot(b + c))
    } else {
        ((a - d).hypot(b + c), (a + d).hypot(b - c))
    };
    // ln((s + t) / (s - t)) = 2 atanh(t / s)
    2.0 * (diff / sum).atanh()
}

/// `ln s_i([X]) = -k_i df(X_i, X)^2`; `-inf` for a degenerate `X`.
pub fn log_shape_score(i: usize, x: &[Point; 3], params: &GrammarParams) -> f64 {
    if is_degenerate(x[0], x[1], x[2]) {
        return f64::NEG_INFINITY;
    }
    let k = params.stiffness[i];
    if k == 0.0 {
        return 0.0;
    }
    let df = log_anisotropy_unchecked(&params.ideal[i], x);
    if !df.is_finite() {
        return f64::NEG_INFINITY;
    }
    -k * df * df
}

/// Unnormalized shape weight `exp(-k_i df(X_i, X)^2)`; 0 for collinear input.
pub fn shape_score(i: usize, x0: Point, x1: Point, x2: Point, params: &GrammarParams) -> f64 {
    log_shape_score(i, &[x0, x1, x2], params).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TriangleType {
    End = 0,
    Neck = 1,
    Junction = 2,
}

impl TriangleType {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Result<Self, GeometryError> {
        match i {
            0 => Ok(TriangleType::End),
            1 => Ok(TriangleType::Neck),
            2 => Ok(TriangleType::Junction),
            _ => Err(GeometryError::BadType(i)),
        }
    }

    /// Degree in the dual tree.
    pub fn degree(self) -> usize {
        self.index() + 1
    }

    pub fn is_solid_slot(self, slot: usize) -> bool {
        match self {
            TriangleType::End => slot < 2,
            TriangleType::Neck => slot == 0,
            TriangleType::Junction => false,
        }
    }
}

/// A typed triangle with located vertices `x = [x0, x1, x2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TriangleRepr", into = "TriangleRepr")]
pub struct Triangle {
    pub ttype: TriangleType,
    pub x: [Point; 3],
}

#[derive(Serialize, Deserialize)]
struct TriangleRepr {
    #[serde(rename = "type")]
    ttype: u8,
    x0: Point,
    x1: Point,
    x2: Point,
}

impl TryFrom<TriangleRepr> for Triangle {
    type Error = GeometryError;

    fn try_from(r: TriangleRepr) -> Result<Self, Self::Error> {
        Triangle::new(TriangleType::from_index(r.ttype)?, r.x0, r.x1, r.x2)
    }
}

impl From<Triangle> for TriangleRepr {
    fn from(t: Triangle) -> Self {
        TriangleRepr {
            ttype: t.ttype as u8,
            x0: t.x[0],
            x1: t.x[1],
            x2: t.x[2],
        }
    }
}

impl Triangle {
    pub fn new(ttype: TriangleType, x0: Point, x1: Point, x2: Point) -> Result<Self, GeometryError> {
        if !(x0.is_finite() && x1.is_finite() && x2.is_finite()) || is_degenerate(x0, x1, x2) {
            return Err(GeometryError::Degenerate(x0, x1, x2));
        }
        Ok(Triangle {
            ttype,
            x: [x0, x1, x2],
        })
    }

    /// Directed edge of slot `s`.
    pub fn edge(&self, slot: usize) -> (Point, Point) {
        (self.x[slot % 3], self.x[(slot + 1) % 3])
    }

    pub fn log_shape_score(&self, params: &GrammarParams) -> f64 {
        log_shape_score(self.ttype.index(), &self.x, params)
    }
}

/// Solid (polygon boundary) edges of `t`.
pub fn boundary_edges(t: &Triangle) -> Vec<(Point, Point)> {
    (0..3)
        .filter(|&s| t.ttype.is_solid_slot(s))
        .map(|s| t.edge(s))
        .collect()
}

/// A rooted tree of triangles glued along dashed edges. Triangle 0 is the
/// root.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedPolygon {
    triangles: Vec<Triangle>,
    links: Vec<(usize, usize)>,
    /// Per triangle and slot, the triangle across that dashed edge.
    neighbors: Vec<[Option<usize>; 3]>,
}

fn same_segment(p: (Point, Point), q: (Point, Point)) -> bool {
    let (a, b) = (p.0.key(), p.1.key());
    let (c, d) = (q.0.key(), q.1.key());
    (a == c && b == d) || (a == d && b == c)
}

impl TriangulatedPolygon {
    /// Builds and validates a shape from triangles and `(parent, child)` links.
    pub fn new(triangles: Vec<Triangle>, links: Vec<(usize, usize)>) -> Result<Self, GeometryError> {
        let bad = |m: String| Err(GeometryError::Malformed(m));
        let n = triangles.len();
        if n < 2 {
            return bad(format!("a shape needs at least two triangles, got {n}"));
        }
        if links.len() != n - 1 {
            return bad(format!("{} links for {} triangles", links.len(), n));
        }
        let mut parent = vec![None; n];
        for &(p, c) in &links {
            if p >= n || c >= n || c == 0 || p == c {
                return bad(format!("invalid link ({p}, {c})"));
            }
            if parent[c].replace(p).is_some() {
                return bad(format!("triangle {c} has two parents"));
            }
        }
        // every triangle must reach the root
        for start in 1..n {
            let (mut cur, mut steps) = (start, 0);
            while let Some(p) = parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    return bad("cycle in links".into());
                }
            }
            if cur != 0 {
                return bad(format!("triangle {start} is not connected to the root"));
            }
        }

        let mut neighbors = vec![[None; 3]; n];
        for &(p, c) in &links {
            let dashed = |t: &Triangle| {
                let ty = t.ttype;
                (0..3).filter(move |&s| !ty.is_solid_slot(s))
            };
            let mut found = None;
            for ps in dashed(&triangles[p]) {
                for cs in dashed(&triangles[c]) {
                    if same_segment(triangles[p].edge(ps), triangles[c].edge(cs)) {
                        if found.is_some() {
                            return bad(format!("ambiguous glue edge between {p} and {c}"));
                        }
                        found = Some((ps, cs));
                    }
                }
            }
            let Some((ps, cs)) = found else {
                return bad(format!("triangles {p} and {c} share no dashed edge"));
            };
            if neighbors[p][ps].is_some() || neighbors[c][cs].is_some() {
                return bad(format!("dashed edge of {p} or {c} glued twice"));
            }
            neighbors[p][ps] = Some(c);
            neighbors[c][cs] = Some(p);
        }
        for (i, t) in triangles.iter().enumerate() {
            for s in 0..3 {
                if !t.ttype.is_solid_slot(s) && neighbors[i][s].is_none() {
                    return bad(format!("dashed edge {s} of triangle {i} is not glued"));
                }
            }
        }
        Ok(TriangulatedPolygon {
            triangles,
            links,
            neighbors,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn root(&self) -> &Triangle {
        &self.triangles[0]
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Counts of end, branch and junction triangles `(e, b, j)`.
    pub fn type_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for t in &self.triangles {
            c[t.ttype.index()] += 1;
        }
        c
    }

    /// Largest distance from the root in the dual tree.
    pub fn depth(&self) -> usize {
        let mut children = vec![Vec::new(); self.len()];
        for &(p, c) in &self.links {
            children[p].push(c);
        }
        let mut depth = vec![0usize; self.len()];
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                stack.push(c);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// All solid edges, each exactly once.
    pub fn solid_edges(&self) -> Vec<(Point, Point)> {
        self.triangles.iter().flat_map(boundary_edges).collect()
    }

    /// All dashed edges, each exactly once (from the parent side).
    pub fn dashed_edges(&self) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        for (i, t) in self.triangles.iter().enumerate() {
            for s in 0..3 {
                if let Some(nb) = self.neighbors[i][s] {
                    if nb > i {
                        out.push(t.edge(s));
                    }
                }
            }
        }
        out
    }

    /// Boundary as a closed cycle of `n + 2` vertices, traversed
    /// counter-clockwise around the dual tree.
    pub fn boundary(&self) -> Result<Vec<Point>, GeometryError> {
        let mut edges = Vec::with_capacity(self.len() + 2);
        // (triangle, next slot to visit, slots remaining)
        let mut stack = vec![(0usize, 0usize, 3usize)];
        while let Some(top) = stack.last_mut() {
            let (tri, slot, left) = *top;
            if left == 0 {
                stack.pop();
                continue;
            }
            *top = (tri, (slot + 1) % 3, left - 1);
            let t = &self.triangles[tri];
            if t.ttype.is_solid_slot(slot) {
                edges.push(t.edge(slot));
            } else if let Some(nb) = self.neighbors[tri][slot] {
                let back = self.neighbors[nb]
                    .iter()
                    .position(|&x| x == Some(tri))
                    .expect("neighbors are symmetric");
                stack.push((nb, (back + 1) % 3, 2));
            }
        }
        let n = edges.len();
        for k in 0..n {
            let (_, end) = edges[k];
            let (start, _) = edges[(k + 1) % n];
            if end.key() != start.key() {
                return Err(GeometryError::Malformed(
                    "boundary edges do not close into a cycle".into(),
                ));
            }
        }
        Ok(edges.into_iter().map(|e| e.0).collect())
    }

    /// Depth-first listing of `(triangle, parent)` in dashed-slot order; two
    /// shapes are the same derivation iff their keys are equal.
    pub fn canonical_key(&self) -> Vec<(u8, [u64; 6])> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(0usize, usize::MAX)];
        while let Some((tri, from)) = stack.pop() {
            let t = &self.triangles[tri];
            let k = |p: Point| p.key();
            let [a, b, c] = [k(t.x[0]), k(t.x[1]), k(t.x[2])];
            out.push((t.ttype as u8, [a[0], a[1], b[0], b[1], c[0], c[1]]));
            for s in (0..3).rev() {
                if let Some(nb) = self.neighbors[tri][s] {
                    if nb != from {
                        stack.push((nb, tri));
                    }
                }
            }
        }
        out
    }
}

/// Closed boundary polyline of a triangulated polygon.
pub fn polygon_boundary(t: &TriangulatedPolygon) -> Result<Vec<Point>, GeometryError> {
    t.boundary()
}
