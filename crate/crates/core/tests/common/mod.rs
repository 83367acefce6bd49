//! Brute-force oracles shared by the integration and acceptance tests.
//!
//! Nothing here touches the DP kernel: candidate vertices are found by a
//! plain scan of the grid, triangle weights come from `Triangle`,
//! `log_shape_score` and `triangle_log_likelihood`, and every partial shape
//! is formed explicitly as a product of its factors.

#![allow(dead_code)]

use std::collections::HashMap;

use shapegram::geometry::{signed_area, Point, Triangle, TriangleType, TriangulatedPolygon};
use shapegram::grammar::GrammarParams;
use shapegram::grid::{grid_point, to_point, EdgeLayout, Grid, GridPoint};
use shapegram::likelihood::{triangle_log_likelihood, EdgeScoreTable, LikelihoodConfig};
use shapegram::logspace::LogAccumulator;

pub type Edge = (GridPoint, GridPoint);

pub struct Oracle<'a> {
    pub table: &'a EdgeScoreTable,
    pub params: &'a GrammarParams,
    pub lambda: f64,
}

/// Exhaustive posterior over depth-bounded shapes.
pub struct Enumeration {
    /// `ln V_j(a, b)` for `j = 0..=d`.
    pub log_v: Vec<HashMap<Edge, f64>>,
    /// Every root triangle with its unnormalized marginal log weight.
    pub roots: Vec<(Triangle, f64)>,
    pub log_total: f64,
}

#[derive(Debug)]
pub struct TooLarge(pub String);

const T1: TriangleType = TriangleType::Neck;

fn p(g: GridPoint) -> Point {
    to_point(g)
}

impl<'a> Oracle<'a> {
    pub fn new(table: &'a EdgeScoreTable, params: &'a GrammarParams, lambda: f64) -> Self {
        Oracle {
            table,
            params,
            lambda,
        }
    }

    fn layout(&self) -> &EdgeLayout {
        self.table.layout()
    }

    fn grid(&self) -> Grid {
        self.layout().grid()
    }

    fn all_points(&self) -> Vec<GridPoint> {
        let g = self.grid();
        let mut out = vec![];
        for y in 0..g.height as i32 {
            for x in 0..g.width as i32 {
                out.push((x, y));
            }
        }
        out
    }

    pub fn edges(&self) -> Vec<Edge> {
        let pts = self.all_points();
        let mut out = vec![];
        for &a in &pts {
            for &b in &pts {
                if a != b && self.layout().is_admissible(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Vertices strictly left of `a -> b` joined to both ends by admissible
    /// edges.
    pub fn candidates(&self, a: GridPoint, b: GridPoint) -> Vec<GridPoint> {
        self.all_points()
            .into_iter()
            .filter(|&c| {
                signed_area(p(a), p(b), p(c)) > 0.0
                    && self.layout().is_admissible(a, c)
                    && self.layout().is_admissible(c, b)
            })
            .collect()
    }

    /// `ln(prior factor) + ln s_i + ln pi_i` of one triangle.
    pub fn triangle_weight(&self, log_prob: f64, t: &Triangle) -> f64 {
        let cfg = LikelihoodConfig {
            lambda: self.lambda,
            ..LikelihoodConfig::default()
        };
        log_prob
            + t.log_shape_score(self.params)
            + triangle_log_likelihood(t, self.table, &cfg).expect("grid edge")
    }

    /// The four growth outcomes of `(a, b)` with vertex `c`: the triangle,
    /// its local log weight and the new growth edges.
    pub fn outcomes(&self, a: GridPoint, b: GridPoint, c: GridPoint) -> Vec<(Triangle, f64, Vec<Edge>)> {
        let t = &self.params.t;
        let tri = |ty, x: [GridPoint; 3]| Triangle::new(ty, p(x[0]), p(x[1]), p(x[2])).unwrap();
        let end = tri(TriangleType::End, [b, c, a]);
        let neck_a = tri(T1, [b, c, a]);
        let neck_b = tri(T1, [c, a, b]);
        let junction = tri(TriangleType::Junction, [b, c, a]);
        vec![
            (end.clone(), self.triangle_weight(t[0].ln(), &end), vec![]),
            (neck_a.clone(), self.triangle_weight((t[1] / 2.0).ln(), &neck_a), vec![(a, c)]),
            (neck_b.clone(), self.triangle_weight((t[1] / 2.0).ln(), &neck_b), vec![(c, b)]),
            (
                junction.clone(),
                self.triangle_weight(t[2].ln(), &junction),
                vec![(a, c), (c, b)],
            ),
        ]
    }

    /// Root triangles `(i, a, b, c)` with their local log weight and growth
    /// edges.
    pub fn root_outcomes(&self) -> Vec<(Triangle, f64, Vec<Edge>)> {
        let mut out = vec![];
        for (a, b) in self.edges() {
            for c in self.candidates(a, b) {
                for (i, ty) in [TriangleType::End, T1, TriangleType::Junction].into_iter().enumerate() {
                    let t = Triangle::new(ty, p(a), p(b), p(c)).unwrap();
                    let growth = match i {
                        0 => vec![(a, c)],
                        1 => vec![(a, c), (c, b)],
                        _ => vec![(a, c), (c, b), (b, a)],
                    };
                    let w = self.triangle_weight(self.params.t[i].ln(), &t);
                    out.push((t, w, growth));
                }
            }
        }
        out
    }

    /// Weights of every partial shape of depth at most `j` from each edge,
    /// for `j < levels`.
    fn weight_lists(&self, levels: usize, budget: usize) -> Result<Vec<HashMap<Edge, Vec<f64>>>, TooLarge> {
        let edges = self.edges();
        let mut lists: Vec<HashMap<Edge, Vec<f64>>> = vec![edges.iter().map(|&e| (e, vec![])).collect()];
        let mut used = 0usize;
        for _ in 1..levels {
            let prev = lists.last().unwrap();
            let mut next = HashMap::new();
            for &(a, b) in &edges {
                let mut ws = vec![];
                for c in self.candidates(a, b) {
                    for (_, local, growth) in self.outcomes(a, b, c) {
                        let mut partial = vec![local];
                        for e in growth {
                            let sub = &prev[&e];
                            partial = partial
                                .iter()
                                .flat_map(|x| sub.iter().map(move |y| x + y))
                                .collect();
                        }
                        used += partial.len();
                        if used > budget {
                            return Err(TooLarge(format!("more than {budget} partial shapes")));
                        }
                        ws.extend(partial);
                    }
                }
                next.insert((a, b), ws);
            }
            lists.push(next);
        }
        Ok(lists)
    }

    /// `ln` of the summed weights of every `local * prod(sub)` combination,
    /// formed term by term.
    fn stream_products(local: f64, subs: &[&Vec<f64>], acc: &mut LogAccumulator, work: &mut usize) {
        fn rec(base: f64, subs: &[&Vec<f64>], acc: &mut LogAccumulator, work: &mut usize) {
            match subs.split_first() {
                None => {
                    acc.add(base);
                    *work += 1;
                }
                Some((head, rest)) => {
                    for &w in head.iter() {
                        rec(base + w, rest, acc, work);
                    }
                }
            }
        }
        rec(local, subs, acc, work);
    }

    /// Enumerates every rooted shape of depth at most `d`.
    pub fn enumerate(&self, d: usize, budget: usize) -> Result<Enumeration, TooLarge> {
        let g = self.grid();
        if g.width > 5 || g.height > 5 || d > 3 || d == 0 {
            return Err(TooLarge(format!("{}x{} grid at depth {d}", g.width, g.height)));
        }
        let lists = self.weight_lists(d, budget)?;
        let mut log_v: Vec<HashMap<Edge, f64>> = lists
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|(e, ws)| {
                        let mut acc = LogAccumulator::default();
                        ws.iter().for_each(|w| acc.add(*w));
                        (*e, acc.value())
                    })
                    .collect()
            })
            .collect();
        // level d is never materialized
        let prev = lists.last().unwrap();
        let mut work = 0usize;
        let mut top = HashMap::new();
        for (a, b) in self.edges() {
            let mut acc = LogAccumulator::default();
            for c in self.candidates(a, b) {
                for (_, local, growth) in self.outcomes(a, b, c) {
                    let subs: Vec<&Vec<f64>> = growth.iter().map(|e| &prev[e]).collect();
                    Self::stream_products(local, &subs, &mut acc, &mut work);
                }
            }
            if work > budget {
                return Err(TooLarge(format!("more than {budget} shapes at depth {d}")));
            }
            top.insert((a, b), acc.value());
        }
        log_v.push(top);
        let vd = log_v.last().unwrap();
        let roots: Vec<(Triangle, f64)> = self
            .root_outcomes()
            .into_iter()
            .map(|(t, local, growth)| {
                let w = growth.iter().fold(local, |acc, e| acc + vd[e]);
                (t, w)
            })
            .collect();
        let mut acc = LogAccumulator::default();
        roots.iter().for_each(|(_, w)| acc.add(*w));
        Ok(Enumeration {
            log_v,
            roots,
            log_total: acc.value(),
        })
    }

    /// Calls `f` on every rooted shape of depth at most `d` with its
    /// unnormalized log weight.
    pub fn for_each_shape(&self, d: usize, mut f: impl FnMut(&TriangulatedPolygon, f64)) {
        struct State {
            triangles: Vec<Triangle>,
            links: Vec<(usize, usize)>,
            pending: Vec<(Edge, usize, usize)>,
            log_w: f64,
        }
        fn grow(o: &Oracle, d: usize, st: &mut State, f: &mut dyn FnMut(&TriangulatedPolygon, f64)) {
            let Some(((a, b), depth, parent)) = st.pending.pop() else {
                let poly = TriangulatedPolygon::new(st.triangles.clone(), st.links.clone()).unwrap();
                f(&poly, st.log_w);
                return;
            };
            for c in o.candidates(a, b) {
                for (t, local, growth) in o.outcomes(a, b, c) {
                    if depth == d && !growth.is_empty() {
                        continue;
                    }
                    let idx = st.triangles.len();
                    st.triangles.push(t);
                    st.links.push((parent, idx));
                    let before = st.pending.len();
                    st.pending.extend(growth.iter().map(|&e| (e, depth + 1, idx)));
                    st.log_w += local;
                    grow(o, d, st, f);
                    st.log_w -= local;
                    st.pending.truncate(before);
                    st.links.pop();
                    st.triangles.pop();
                }
            }
            st.pending.push(((a, b), depth, parent));
        }
        for (t, local, growth) in self.root_outcomes() {
            let mut st = State {
                triangles: vec![t],
                links: vec![],
                pending: growth.into_iter().map(|e| (e, 1, 0)).collect(),
                log_w: local,
            };
            grow(self, d, &mut st, &mut f);
        }
    }

    /// Unnormalized log posterior weight of a complete shape, recomputed
    /// from its triangles; `-inf` if the grammar cannot derive it on this
    /// grid within depth `d`.
    pub fn shape_log_weight(&self, shape: &TriangulatedPolygon, d: usize) -> f64 {
        let tris = shape.triangles();
        let n = tris.len();
        let mut parent = vec![usize::MAX; n];
        for &(a, c) in shape.links() {
            parent[c] = a;
        }
        for t in tris {
            let g: Vec<Option<GridPoint>> = t.x.iter().map(|&x| grid_point(x)).collect();
            if g.iter().any(|x| x.is_none()) || signed_area(t.x[0], t.x[1], t.x[2]) <= 0.0 {
                return f64::NEG_INFINITY;
            }
            for s in 0..3 {
                if !self.layout().is_admissible(g[s].unwrap(), g[(s + 1) % 3].unwrap()) {
                    return f64::NEG_INFINITY;
                }
            }
        }
        let key = |q: Point| (q.x.to_bits(), q.y.to_bits());
        let mut total = self.triangle_weight(self.params.t[tris[0].ttype.index()].ln(), &tris[0]);
        for i in 1..n {
            let mut depth = 0;
            let mut k = i;
            while k != 0 {
                k = parent[k];
                depth += 1;
            }
            if depth > d {
                return f64::NEG_INFINITY;
            }
            // the slot of the child that is glued to its parent
            let t = &tris[i];
            let par = &tris[parent[i]];
            let glued = (0..3).find(|&s| {
                let (u, v) = t.edge(s);
                (0..3).any(|ps| {
                    let (pu, pv) = par.edge(ps);
                    key(u) == key(pv) && key(v) == key(pu)
                })
            });
            let log_prob = match (t.ttype, glued) {
                (TriangleType::End, Some(2)) => self.params.t[0].ln(),
                (TriangleType::Neck, Some(1 | 2)) => (self.params.t[1] / 2.0).ln(),
                (TriangleType::Junction, Some(2)) => self.params.t[2].ln(),
                _ => return f64::NEG_INFINITY,
            };
            total += self.triangle_weight(log_prob, t);
        }
        total
    }
}

/// Total-variation distance between the empirical distribution of `keys`
/// and the exact distribution `log_p(key)`, where `log_p` is normalized.
/// Unseen shapes contribute their total mass `1 - sum(p(seen))`.
pub fn shape_tv<K: std::hash::Hash + Eq + Clone>(
    samples: impl IntoIterator<Item = (K, f64)>,
) -> f64 {
    let mut counts: HashMap<K, (usize, f64)> = HashMap::new();
    let mut n = 0usize;
    for (k, log_p) in samples {
        counts.entry(k).or_insert((0, log_p)).0 += 1;
        n += 1;
    }
    let mut seen = 0.0;
    let mut diff = 0.0;
    for (_, (c, log_p)) in counts {
        let p = log_p.exp();
        seen += p;
        diff += (c as f64 / n as f64 - p).abs();
    }
    0.5 * (diff + (1.0 - seen).max(0.0))
}

/// TV distance between an empirical histogram and exact probabilities.
pub fn histogram_tv<K: std::hash::Hash + Eq>(counts: &HashMap<K, usize>, exact: &HashMap<K, f64>) -> f64 {
    let n: usize = counts.values().sum();
    let mut tv = 0.0;
    for (k, p) in exact {
        let q = counts.get(k).copied().unwrap_or(0) as f64 / n as f64;
        tv += (q - p).abs();
    }
    for (k, c) in counts {
        if !exact.contains_key(k) {
            tv += *c as f64 / n as f64;
        }
    }
    0.5 * tv
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    // log-domain values: relative error of exp(a) vs exp(b)
    if a == b {
        0.0
    } else {
        (a - b).exp_m1().abs()
    }
}

/// Expected triangle count and total mass under the depth-bounded,
/// grid-constrained prior with a flat likelihood, by a first-moment
/// recursion on edges: `M_j(a, b) = sum over partial shapes of
/// weight * (number of triangles)`.
pub fn flat_prior_mean_triangles(layout: &EdgeLayout, params: &GrammarParams, d: usize) -> f64 {
    let table = EdgeScoreTable::zeros(layout.clone());
    let o = Oracle::new(&table, params, 0.0);
    let edges = o.edges();
    // (mass, first moment) per edge, linear domain with a common scale is
    // fine for small grids
    let mut z: HashMap<Edge, (f64, f64)> = edges.iter().map(|&e| (e, (0.0, 0.0))).collect();
    let cands: HashMap<Edge, Vec<(Vec<Edge>, f64)>> = edges
        .iter()
        .map(|&(a, b)| {
            let v = o
                .candidates(a, b)
                .into_iter()
                .flat_map(|c| o.outcomes(a, b, c).into_iter().map(|(_, w, g)| (g, w.exp())))
                .collect();
            ((a, b), v)
        })
        .collect();
    for _ in 0..d {
        let mut next = HashMap::new();
        for e in &edges {
            let (mut mass, mut moment) = (0.0, 0.0);
            for (growth, w) in &cands[e] {
                let (mut m, mut f) = (*w, *w);
                // product rule: mass = w prod Z, moment = mass + sum_k w M_k prod_{l != k} Z_l
                for g in growth {
                    let (zg, mg) = z[g];
                    f = f * zg + m * mg;
                    m *= zg;
                }
                mass += m;
                moment += f;
            }
            next.insert(*e, (mass, moment));
        }
        z = next;
    }
    let (mut mass, mut moment) = (0.0, 0.0);
    for (_, w, growth) in o.root_outcomes() {
        let (mut m, mut f) = (w.exp(), w.exp());
        for g in &growth {
            let (zg, mg) = z[g];
            f = f * zg + m * mg;
            m *= zg;
        }
        mass += m;
        moment += f;
    }
    moment / mass
}
