//! Sampling shapes from the grammar prior.
//!
//! Structure and geometry are drawn separately: first the dual tree
//! (a Galton-Watson tree below a root with one to three children), then the
//! free vertex of every triangle breadth-first from a seed edge.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{log_shape_score, GeometryError, Point, Triangle, TriangleType, TriangulatedPolygon};
use crate::grammar::{root_growth_edges, GrammarParams, Production};
use crate::rng::stream_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("growth edge has zero length")]
    DegenerateEdge,
    #[error("every candidate vertex has zero shape weight")]
    NoCandidates,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Nodes at this depth are forced to be ends.
    pub d_max: usize,
    pub candidate_radius_steps: usize,
    pub candidate_angle_steps: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            d_max: 200,
            candidate_radius_steps: 32,
            candidate_angle_steps: 48,
            rng_seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        if self.d_max == 0 || self.candidate_radius_steps == 0 || self.candidate_angle_steps == 0 {
            return Err(PriorError::Config(format!(
                "d_max, candidate_radius_steps and candidate_angle_steps must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Candidate radii span `[0.2, 3] * |ab|` geometrically.
pub const RADIUS_RANGE: (f64, f64) = (0.2, 3.0);

/// A node of a sampled dual tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTreeNode {
    pub ttype: TriangleType,
    /// How the triangle attaches to its parent edge; `None` at the root.
    pub production: Option<Production>,
    /// The node sits at the depth cap and was forced to be an end.
    pub forced: bool,
    pub children: Vec<DualTreeNode>,
}

impl DualTreeNode {
    /// `[e, b, j]` over the whole subtree.
    pub fn type_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            counts[n.ttype.index()] += 1;
            stack.extend(n.children.iter());
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.type_counts().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn hit_cap(&self) -> bool {
        self.forced || self.children.iter().any(DualTreeNode::hit_cap)
    }

    /// Offspring counts of the non-root nodes that were actually drawn.
    fn drawn_offspring(&self, out: &mut (usize, usize)) {
        for c in &self.children {
            if !c.forced {
                out.0 += c.children.len();
                out.1 += 1;
            }
            c.drawn_offspring(out);
        }
    }
}

fn draw_type<R: Rng>(params: &GrammarParams, rng: &mut R) -> TriangleType {
    let u: f64 = rng.random();
    if u < params.t[0] {
        TriangleType::End
    } else if u < params.t[0] + params.t[1] {
        TriangleType::Neck
    } else {
        TriangleType::Junction
    }
}

fn grow<R: Rng>(params: &GrammarParams, cfg: &SamplerConfig, depth: usize, rng: &mut R) -> DualTreeNode {
    if depth >= cfg.d_max {
        return DualTreeNode {
            ttype: TriangleType::End,
            production: Some(Production::End),
            forced: true,
            children: vec![],
        };
    }
    let production = match draw_type(params, rng) {
        TriangleType::End => Production::End,
        TriangleType::Neck => {
            if rng.random::<bool>() {
                Production::NeckA
            } else {
                Production::NeckB
            }
        }
        TriangleType::Junction => Production::Junction,
    };
    let n_children = production.ttype().index();
    DualTreeNode {
        ttype: production.ttype(),
        production: Some(production),
        forced: false,
        children: (0..n_children).map(|_| grow(params, cfg, depth + 1, rng)).collect(),
    }
}

/// Draws a dual tree: the root has `i + 1` children with probability `t_i`,
/// every other node `i` children with probability `t_i`.
pub fn sample_structure<R: Rng>(params: &GrammarParams, cfg: &SamplerConfig, rng: &mut R) -> DualTreeNode {
    let ttype = draw_type(params, rng);
    DualTreeNode {
        ttype,
        production: None,
        forced: false,
        children: (0..ttype.degree()).map(|_| grow(params, cfg, 1, rng)).collect(),
    }
}

/// Which triangle a free vertex completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Root triangle `(i, a, b, c)` on the seed edge.
    Root(TriangleType),
    /// Growth of the edge `(a, b)`.
    Grow(Production),
}

impl Placement {
    fn labeled(self, a: Point, b: Point, c: Point) -> (usize, [Point; 3]) {
        match self {
            Placement::Root(t) => (t.index(), [a, b, c]),
            Placement::Grow(p) => (p.ttype().index(), p.vertices(a, b, c)),
        }
    }
}

/// Polar candidate set left of `a -> b` with each candidate's log shape
/// weight. Candidates are ordered radius-major.
pub fn vertex_candidates(
    placement: Placement,
    a: Point,
    b: Point,
    params: &GrammarParams,
    cfg: &SamplerConfig,
) -> Result<Vec<(Point, f64)>, PriorError> {
    let d = b.sub(a);
    let len = d.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(PriorError::DegenerateEdge);
    }
    let u = d.scale(1.0 / len);
    let n = Point::new(-u.y, u.x);
    let (r_lo, r_hi) = RADIUS_RANGE;
    let nr = cfg.candidate_radius_steps;
    let na = cfg.candidate_angle_steps;
    let mut out = Vec::with_capacity(nr * na);
    for i in 0..nr {
        let f = if nr == 1 { 0.5 } else { i as f64 / (nr - 1) as f64 };
        let r = len * r_lo * (r_hi / r_lo).powf(f);
        for k in 0..na {
            let theta = std::f64::consts::PI * (k as f64 + 0.5) / na as f64;
            let c = a.add(u.scale(r * theta.cos())).add(n.scale(r * theta.sin()));
            let (ti, x) = placement.labeled(a, b, c);
            out.push((c, log_shape_score(ti, &x, params)));
        }
    }
    Ok(out)
}

/// Draws the free vertex `c` for a triangle grown on `(a, b)` with
/// probability proportional to its shape score over the candidate set.
pub fn sample_vertex<R: Rng>(
    placement: Placement,
    a: Point,
    b: Point,
    params: &GrammarParams,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Point, PriorError> {
    let cands = vertex_candidates(placement, a, b, params, cfg)?;
    let max = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(PriorError::NoCandidates);
    }
    let weights: Vec<f64> = cands.iter().map(|c| (c.1 - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (w, (c, _)) in weights.iter().zip(&cands) {
        if target < *w {
            return Ok(*c);
        }
        target -= w;
    }
    // rounding at the upper end
    let last = weights.iter().rposition(|&w| w > 0.0).expect("max is finite");
    Ok(cands[last].0)
}

/// Unit horizontal edge at the origin.
pub fn default_seed_edge() -> (Point, Point) {
    (Point::new(0.0, 0.0), Point::new(1.0, 0.0))
}

/// Draws a structure, then places every triangle breadth-first starting
/// with the root on `seed_edge`.
pub fn sample_shape<R: Rng>(
    params: &GrammarParams,
    cfg: &SamplerConfig,
    rng: &mut R,
    seed_edge: (Point, Point),
) -> Result<TriangulatedPolygon, PriorError> {
    let tree = sample_structure(params, cfg, rng);
    let (a, b) = seed_edge;
    let c = sample_vertex(Placement::Root(tree.ttype), a, b, params, cfg, rng)?;
    let mut triangles = vec![Triangle::new(tree.ttype, a, b, c)?];
    let mut links = Vec::new();
    let mut queue = VecDeque::new();
    for (edge, child) in root_growth_edges(tree.ttype, a, b, c).into_iter().zip(&tree.children) {
        queue.push_back((child, edge, 0usize));
    }
    while let Some((node, (a, b), parent)) = queue.pop_front() {
        let production = node.production.expect("non-root nodes carry a production");
        let c = sample_vertex(Placement::Grow(production), a, b, params, cfg, rng)?;
        let idx = triangles.len();
        triangles.push(production.triangle(a, b, c)?);
        links.push((parent, idx));
        for (edge, child) in production.growth_edges(a, b, c).into_iter().zip(&node.children) {
            queue.push_back((child, edge, idx));
        }
    }
    Ok(TriangulatedPolygon::new(triangles, links)?)
}

/// `n` shapes, sample `i` drawn from stream `i` of `cfg.rng_seed`.
pub fn sample_shapes(
    params: &GrammarParams,
    cfg: &SamplerConfig,
    n: usize,
    seed_edge: (Point, Point),
) -> Result<Vec<TriangulatedPolygon>, PriorError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.rng_seed, i as u64);
            sample_shape(params, cfg, &mut rng, seed_edge)
        })
        .collect()
}

/// Monte Carlo summary of sampled structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub n_samples: usize,
    pub mean_n: f64,
    pub se_n: f64,
    pub mean_j: f64,
    pub se_j: f64,
    pub mean_e: f64,
    pub mean_b: f64,
    /// Ratio estimate of the mean offspring count of non-root nodes.
    pub mean_m: f64,
    pub se_m: f64,
    /// Fraction of samples in which the depth cap forced an end.
    pub capped_fraction: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample means and standard errors of triangle counts by type over
/// `n_samples` independent structures.
pub fn empirical_stats(
    params: &GrammarParams,
    cfg: &SamplerConfig,
    n_samples: usize,
) -> Result<EmpiricalStats, PriorError> {
    if n_samples == 0 {
        return Err(PriorError::Config("n_samples must be at least 1".into()));
    }
    cfg.validate()?;
    struct One {
        counts: [usize; 3],
        offspring: (usize, usize),
        capped: bool,
    }
    let samples: Vec<One> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng: ChaCha8Rng = stream_rng(cfg.rng_seed, i as u64);
            let tree = sample_structure(params, cfg, &mut rng);
            let mut offspring = (0, 0);
            tree.drawn_offspring(&mut offspring);
            One {
                counts: tree.type_counts(),
                offspring,
                capped: tree.hit_cap(),
            }
        })
        .collect();
    let col = |f: &dyn Fn(&One) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let (mean_n, se_n) = mean_se(&col(&|s| s.counts.iter().sum::<usize>() as f64));
    let (mean_j, se_j) = mean_se(&col(&|s| s.counts[2] as f64));
    let (mean_e, _) = mean_se(&col(&|s| s.counts[0] as f64));
    let (mean_b, _) = mean_se(&col(&|s| s.counts[1] as f64));

    // ratio estimator sum(children) / sum(nodes) with a delta-method error
    let kids = col(&|s| s.offspring.0 as f64);
    let nodes = col(&|s| s.offspring.1 as f64);
    let total_nodes: f64 = nodes.iter().sum();
    let (mean_m, se_m) = if total_nodes == 0.0 {
        (0.0, 0.0)
    } else {
        let r = kids.iter().sum::<f64>() / total_nodes;
        let nbar = total_nodes / n_samples as f64;
        let resid: Vec<f64> = kids.iter().zip(&nodes).map(|(k, w)| k - r * w).collect();
        let nn = n_samples as f64;
        let var = if n_samples > 1 {
            resid.iter().map(|e| e * e).sum::<f64>() / (nn - 1.0)
        } else {
            0.0
        };
        (r, (var / nn).sqrt() / nbar)
    };
    let capped = samples.iter().filter(|s| s.capped).count();
    Ok(EmpiricalStats {
        n_samples,
        mean_n,
        se_n,
        mean_j,
        se_j,
        mean_e,
        mean_b,
        mean_m,
        se_m,
        capped_fraction: capped as f64 / n_samples as f64,
    })
}
