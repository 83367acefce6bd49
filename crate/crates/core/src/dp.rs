//! Exact posterior sampling over grid-constrained, depth-bounded shapes.
//!
//! `V_j(a, b)` is the total unnormalized posterior mass of the partial
//! shapes of depth at most `j` grown from the edge `(a, b)`:
//!
//! ```text
//! V_0(a, b) = 0
//! V_j(a, b) = sum_c  t0     s0([b,c,a]) pi0(b,c,a)
//!                  + t1/2   s1([b,c,a]) pi1(b,c,a) V_{j-1}(a,c)
//!                  + t1/2   s1([c,a,b]) pi1(c,a,b) V_{j-1}(c,b)
//!                  + t2     s2([b,c,a]) pi2(b,c,a) V_{j-1}(a,c) V_{j-1}(c,b)
//! ```
//!
//! over vertices `c` strictly left of `a -> b` whose edges to `a` and `b` are
//! admissible. Everything is stored as natural logs. A root `(i, a, b, c)`
//! weighs `t_i s_i([a,b,c]) pi_i(a,b,c)` times `V_d` of each of its growth
//! edges; a triangle at depth `j` is drawn from the four-way conditional on
//! its parent edge using `V_{d-j}`, whose normalizer is `V_{d-j+1}` of that
//! edge.
//!
//! Shape scores depend only on vertex offsets, so the per-candidate prior
//! factors are precomputed once per edge offset and reused at every grid
//! position.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{log_shape_score, GeometryError, Triangle, TriangleType, TriangulatedPolygon};
use crate::grammar::{root_growth_edges, GrammarError, GrammarParams, Production};
use crate::grid::{to_point, EdgeLayout, Grid, GridError, GridPoint};
use crate::image::GrayImage;
use crate::likelihood::{precompute_edge_table, EdgeScoreTable, LikelihoodConfig, LikelihoodError};
use crate::logspace::ExactSum;
use crate::rng::stream_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("depth must be at least 1")]
    Depth,
    #[error("no admissible edges on the grid")]
    NoEdges,
    #[error("posterior has zero total mass (depth too small for any complete shape?)")]
    ZeroMass,
    #[error("zero conditional weight growing edge {0:?} -> {1:?} at depth {2}: tables are inconsistent")]
    Inconsistent(GridPoint, GridPoint, usize),
    #[error("instance too large to enumerate: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    /// Maximum depth `d` of the dual tree.
    pub depth: usize,
    /// Admissible edge lengths in grid steps.
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            depth: 20,
            l_min: 1.0,
            l_max: 8.0,
        }
    }
}

/// A vertex `c = a + du` completing a triangle on an edge offset `b - a`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    du: GridPoint,
    /// Offset index of `c - a`.
    ac: u32,
    /// Offset index of `b - c`.
    cb: u32,
    /// `ln P(production) + ln s` for each growth production.
    grow: [f64; 4],
    /// `ln t_i + ln s_i([a, b, c])` for a root `(i, a, b, c)`.
    root: [f64; 3],
}

/// Translation-invariant candidate tables for a layout and grammar.
#[derive(Debug, Clone)]
struct Kernel {
    layout: EdgeLayout,
    candidates: Vec<Vec<Candidate>>,
    /// Offset index of `a - b` for each offset `b - a`.
    reverse: Vec<u32>,
}

impl Kernel {
    fn new(layout: &EdgeLayout, params: &GrammarParams) -> Self {
        let offsets = layout.offsets();
        let pt = |d: GridPoint| to_point(d);
        let candidates = offsets
            .iter()
            .map(|&v| {
                let (a, b) = (pt((0, 0)), pt(v));
                offsets
                    .iter()
                    .enumerate()
                    .filter_map(|(ac, &u)| {
                        if v.0 * u.1 - v.1 * u.0 <= 0 {
                            return None;
                        }
                        let cb = layout.offset_index((v.0 - u.0, v.1 - u.1))?;
                        let c = pt(u);
                        let mut grow = [0.0; 4];
                        for (g, p) in grow.iter_mut().zip(Production::ALL) {
                            let x = p.vertices(a, b, c);
                            *g = p.log_prob(params) + log_shape_score(p.ttype().index(), &x, params);
                        }
                        let mut root = [0.0; 3];
                        for (i, r) in root.iter_mut().enumerate() {
                            *r = params.log_t(i) + log_shape_score(i, &[a, b, c], params);
                        }
                        Some(Candidate {
                            du: u,
                            ac: ac as u32,
                            cb: cb as u32,
                            grow,
                            root,
                        })
                    })
                    .collect()
            })
            .collect();
        let reverse = offsets
            .iter()
            .map(|&(dx, dy)| layout.offset_index((-dx, -dy)).expect("offsets are symmetric") as u32)
            .collect();
        Kernel {
            layout: layout.clone(),
            candidates,
            reverse,
        }
    }

    /// Candidates of an edge slot that lie on the grid, with the slots of
    /// `(a, c)` and `(c, b)`.
    #[inline]
    fn on_grid<'a>(&'a self, slot: usize) -> impl Iterator<Item = (&'a Candidate, GridPoint, usize, usize)> + 'a {
        let n = self.layout.n_offsets();
        let grid = self.layout.grid();
        let a = grid.point(slot / n);
        let k = slot % n;
        self.candidates[k].iter().filter_map(move |cand| {
            let c = (a.0 + cand.du.0, a.1 + cand.du.1);
            if !grid.contains(c) {
                return None;
            }
            let s_ac = self.layout.slot_of(slot / n, cand.ac as usize);
            let s_cb = self.layout.slot_of(grid.index(c), cand.cb as usize);
            Some((cand, c, s_ac, s_cb))
        })
    }
}

/// Log terms of the growth conditional for one candidate: the local
/// triangle weight and the full term including subtree masses.
#[inline]
fn growth_terms(cand: &Candidate, i_ac: f64, i_cb: f64, v_ac: f64, v_cb: f64, lambda: f64) -> [(f64, f64); 4] {
    // solid edges: End (b,c),(c,a); NeckA (b,c); NeckB (c,a); Junction none
    let local = [
        cand.grow[0] + lambda * (i_cb + i_ac),
        cand.grow[1] + lambda * i_cb,
        cand.grow[2] + lambda * i_ac,
        cand.grow[3],
    ];
    [
        (local[0], local[0]),
        (local[1], local[1] + v_ac),
        (local[2], local[2] + v_cb),
        (local[3], local[3] + v_ac + v_cb),
    ]
}

/// Log backward weights `ln V_j` for `j = 0..=d`, indexed by edge slot.
#[derive(Debug, Clone)]
pub struct DPTables {
    layout: EdgeLayout,
    levels: Vec<Vec<f64>>,
}

impl DPTables {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn layout(&self) -> &EdgeLayout {
        &self.layout
    }

    /// `ln V_j` per slot; unused slots hold `-inf`.
    pub fn level(&self, j: usize) -> &[f64] {
        &self.levels[j]
    }

    pub fn log_v(&self, j: usize, a: GridPoint, b: GridPoint) -> Option<f64> {
        Some(self.levels[j][self.layout.slot(a, b)?])
    }

    pub(crate) fn from_levels(layout: EdgeLayout, levels: Vec<Vec<f64>>) -> Self {
        DPTables { layout, levels }
    }

    pub(crate) fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }
}

fn log_sum_exp_in_place(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut acc = ExactSum::default();
    for &t in terms {
        acc.add((t - max).exp());
    }
    max + acc.value().ln()
}

fn compute_level(kernel: &Kernel, edge_values: &[f64], prev: &[f64], lambda: f64) -> Vec<f64> {
    let layout = &kernel.layout;
    let n = layout.n_offsets();
    let grid = layout.grid();
    let mut out = vec![f64::NEG_INFINITY; layout.n_slots()];
    out.par_chunks_mut(n).enumerate().for_each_init(
        || Vec::with_capacity(1024),
        |buf: &mut Vec<f64>, (ai, chunk)| {
            let a = grid.point(ai);
            for (k, &(dx, dy)) in layout.offsets().iter().enumerate() {
                if !grid.contains((a.0 + dx, a.1 + dy)) {
                    continue;
                }
                buf.clear();
                for (cand, _, s_ac, s_cb) in kernel.on_grid(ai * n + k) {
                    let (i_ac, i_cb) = (edge_values[s_ac], edge_values[s_cb]);
                    for (_, term) in growth_terms(cand, i_ac, i_cb, prev[s_ac], prev[s_cb], lambda) {
                        if term > f64::NEG_INFINITY {
                            buf.push(term);
                        }
                    }
                }
                chunk[k] = log_sum_exp_in_place(buf);
            }
        },
    );
    out
}

/// Runs the backward recursion to depth `d` on the table's layout.
pub fn compute_backward_weights(
    table: &EdgeScoreTable,
    params: &GrammarParams,
    lambda: f64,
    d: usize,
) -> Result<DPTables, DpError> {
    let kernel = Kernel::new(table.layout(), params);
    backward_with_kernel(&kernel, table, params, lambda, d)
}

fn backward_with_kernel(
    kernel: &Kernel,
    table: &EdgeScoreTable,
    params: &GrammarParams,
    lambda: f64,
    d: usize,
) -> Result<DPTables, DpError> {
    params.validate()?;
    if d < 1 {
        return Err(DpError::Depth);
    }
    if table.is_empty() {
        return Err(DpError::NoEdges);
    }
    let layout = table.layout();
    let mut levels = vec![vec![f64::NEG_INFINITY; layout.n_slots()]];
    for _ in 1..=d {
        let next = compute_level(kernel, table.values(), levels.last().unwrap(), lambda);
        levels.push(next);
    }
    Ok(DPTables {
        layout: layout.clone(),
        levels,
    })
}

/// Root-triangle marginal, stored per edge slot `(a, b)` of the root's
/// first side and expanded on demand.
#[derive(Debug, Clone)]
pub struct RootMarginal {
    slot_log_weight: Vec<f64>,
    cumulative: Vec<f64>,
    log_total: f64,
}

impl RootMarginal {
    /// Log normalizer: total unnormalized posterior mass.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    /// Unnormalized log mass of all roots whose first side is slot `s`.
    pub fn slot_log_weight(&self, slot: usize) -> f64 {
        self.slot_log_weight[slot]
    }
}

/// A drawn shape with its unnormalized log weight and normalized log
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledShape {
    pub polygon: TriangulatedPolygon,
    pub log_weight: f64,
    pub log_posterior: f64,
}

/// One entry of the child conditional on a growth edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildChoice {
    pub production: Production,
    pub c: GridPoint,
    /// Local triangle weight (prior factor, shape score and image term).
    pub log_local: f64,
    /// Local weight times the subtree masses of the new growth edges.
    pub log_weight: f64,
}

/// One root triangle with its unnormalized marginal log weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootChoice {
    pub ttype: TriangleType,
    pub a: GridPoint,
    pub b: GridPoint,
    pub c: GridPoint,
    pub log_local: f64,
    pub log_weight: f64,
}

/// Configuration of the full image-to-samples pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub dp: DpConfig,
    pub likelihood: LikelihoodConfig,
}

/// DP tables plus everything needed to draw exact posterior samples.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    kernel: Kernel,
    table: EdgeScoreTable,
    params: GrammarParams,
    lambda: f64,
    tables: DPTables,
    root: RootMarginal,
}

impl PosteriorSampler {
    /// Gradient, edge table, backward weights and root marginal for an image.
    pub fn from_image(
        image: &GrayImage,
        grid: Grid,
        params: &GrammarParams,
        cfg: &PosteriorConfig,
    ) -> Result<Self, DpError> {
        cfg.likelihood.validate()?;
        let layout = EdgeLayout::new(grid, cfg.dp.l_min, cfg.dp.l_max)?;
        let grad = crate::image::smooth_gradient(image, cfg.likelihood.smooth_sigma);
        let table = precompute_edge_table(&layout, &grad, &cfg.likelihood)?;
        Self::from_table(table, params, cfg.likelihood.lambda, cfg.dp.depth)
    }

    pub fn from_table(
        table: EdgeScoreTable,
        params: &GrammarParams,
        lambda: f64,
        depth: usize,
    ) -> Result<Self, DpError> {
        let kernel = Kernel::new(table.layout(), params);
        let tables = backward_with_kernel(&kernel, &table, params, lambda, depth)?;
        Self::from_parts(kernel, table, params, lambda, tables)
    }

    /// Reuses previously computed (e.g. cached) backward weights.
    pub fn from_tables(
        table: EdgeScoreTable,
        params: &GrammarParams,
        lambda: f64,
        tables: DPTables,
    ) -> Result<Self, DpError> {
        let kernel = Kernel::new(table.layout(), params);
        Self::from_parts(kernel, table, params, lambda, tables)
    }

    fn from_parts(
        kernel: Kernel,
        table: EdgeScoreTable,
        params: &GrammarParams,
        lambda: f64,
        tables: DPTables,
    ) -> Result<Self, DpError> {
        let mut sampler = PosteriorSampler {
            kernel,
            table,
            params: params.clone(),
            lambda,
            tables,
            root: RootMarginal {
                slot_log_weight: vec![],
                cumulative: vec![],
                log_total: f64::NEG_INFINITY,
            },
        };
        sampler.root = sampler.compute_root_marginal()?;
        Ok(sampler)
    }

    pub fn params(&self) -> &GrammarParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tables(&self) -> &DPTables {
        &self.tables
    }

    pub fn edge_table(&self) -> &EdgeScoreTable {
        &self.table
    }

    pub fn root_marginal(&self) -> &RootMarginal {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.tables.depth()
    }

    /// All roots whose first side `(a, b)` is `slot`.
    pub fn root_choices(&self, slot: usize) -> Vec<RootChoice> {
        let layout = &self.kernel.layout;
        let (a, b) = layout.endpoints(slot);
        if !layout.grid().contains(b) {
            return vec![];
        }
        let e = self.table.values();
        let vd = self.tables.level(self.depth());
        let s_ba = layout.slot_of(layout.grid().index(b), self.kernel.reverse[slot % layout.n_offsets()] as usize);
        let lam = self.lambda;
        let mut out = Vec::new();
        for (cand, c, s_ac, s_cb) in self.kernel.on_grid(slot) {
            let (i_ab, i_bc) = (e[slot], e[s_cb]);
            // solid edges: End (a,b),(b,c); Neck (a,b); Junction none
            let local = [
                cand.root[0] + lam * (i_ab + i_bc),
                cand.root[1] + lam * i_ab,
                cand.root[2],
            ];
            let subtree = [
                vd[s_ac],
                vd[s_ac] + vd[s_cb],
                vd[s_ac] + vd[s_cb] + vd[s_ba],
            ];
            for (i, ttype) in [TriangleType::End, TriangleType::Neck, TriangleType::Junction]
                .into_iter()
                .enumerate()
            {
                let w = local[i] + subtree[i];
                if w > f64::NEG_INFINITY {
                    out.push(RootChoice {
                        ttype,
                        a,
                        b,
                        c,
                        log_local: local[i],
                        log_weight: w,
                    });
                }
            }
        }
        out
    }

    /// Every root with positive weight. Only sensible on small grids.
    pub fn root_entries(&self) -> Vec<RootChoice> {
        self.kernel.layout.edges().flat_map(|(s, _, _)| self.root_choices(s)).collect()
    }

    /// Unnormalized log marginal of a root triangle `(i, x0, x1, x2)`.
    pub fn root_log_weight(&self, t: &Triangle) -> Option<f64> {
        let g = |k: usize| crate::grid::grid_point(t.x[k]);
        let (a, b, c) = (g(0)?, g(1)?, g(2)?);
        let slot = self.kernel.layout.slot(a, b)?;
        self.root_choices(slot)
            .into_iter()
            .find(|r| r.c == c && r.ttype == t.ttype)
            .map(|r| r.log_weight)
    }

    fn compute_root_marginal(&self) -> Result<RootMarginal, DpError> {
        let layout = &self.kernel.layout;
        let slot_log_weight: Vec<f64> = (0..layout.n_slots())
            .into_par_iter()
            .map(|s| {
                let w: Vec<f64> = self.root_choices(s).iter().map(|r| r.log_weight).collect();
                log_sum_exp_in_place(&w)
            })
            .collect();
        let log_total = log_sum_exp_in_place(&slot_log_weight);
        if !log_total.is_finite() {
            return Err(DpError::ZeroMass);
        }
        let mut acc = ExactSum::default();
        let cumulative = slot_log_weight
            .iter()
            .map(|&w| {
                acc.add((w - log_total).exp());
                acc.value()
            })
            .collect();
        Ok(RootMarginal {
            slot_log_weight,
            cumulative,
            log_total,
        })
    }

    /// The four-way conditional for growing `(a, b)` at depth `j`
    /// (`1 <= j <= d`), using `V_{d-j}` for the new growth edges.
    pub fn child_choices(&self, a: GridPoint, b: GridPoint, j: usize) -> Vec<ChildChoice> {
        let Some(slot) = self.kernel.layout.slot(a, b) else {
            return vec![];
        };
        let e = self.table.values();
        let v = self.tables.level(self.depth() - j.min(self.depth()));
        let mut out = Vec::new();
        for (cand, c, s_ac, s_cb) in self.kernel.on_grid(slot) {
            let terms = growth_terms(cand, e[s_ac], e[s_cb], v[s_ac], v[s_cb], self.lambda);
            for (p, (local, w)) in Production::ALL.into_iter().zip(terms) {
                if w > f64::NEG_INFINITY {
                    out.push(ChildChoice {
                        production: p,
                        c,
                        log_local: local,
                        log_weight: w,
                    });
                }
            }
        }
        out
    }

    pub fn sample_root<R: Rng>(&self, rng: &mut R) -> Result<RootChoice, DpError> {
        let u: f64 = rng.random::<f64>() * self.root.cumulative.last().copied().unwrap_or(0.0);
        let mut slot = self.root.cumulative.partition_point(|&c| c <= u);
        // skip zero-mass slots that share the cumulative value
        while slot < self.root.slot_log_weight.len() && self.root.slot_log_weight[slot] == f64::NEG_INFINITY {
            slot += 1;
        }
        if slot >= self.root.slot_log_weight.len() {
            slot = self
                .root
                .slot_log_weight
                .iter()
                .rposition(|w| *w > f64::NEG_INFINITY)
                .ok_or(DpError::ZeroMass)?;
        }
        let choices = self.root_choices(slot);
        let cdf = Cdf::new(choices.iter().map(|r| r.log_weight)).ok_or(DpError::ZeroMass)?;
        Ok(choices[cdf.draw(rng)])
    }

    fn child_conditional(&self, a: GridPoint, b: GridPoint, j: usize) -> Result<Conditional, DpError> {
        let choices = self.child_choices(a, b, j);
        let cdf = Cdf::new(choices.iter().map(|c| c.log_weight)).ok_or(DpError::Inconsistent(a, b, j))?;
        Ok(Conditional { cdf, choices })
    }

    pub fn sample_child<R: Rng>(
        &self,
        a: GridPoint,
        b: GridPoint,
        j: usize,
        rng: &mut R,
    ) -> Result<ChildChoice, DpError> {
        let cond = self.child_conditional(a, b, j)?;
        Ok(cond.choices[cond.cdf.draw(rng)])
    }

    fn sample_child_cached<R: Rng>(
        &self,
        cache: &mut ChildCache,
        a: GridPoint,
        b: GridPoint,
        j: usize,
        rng: &mut R,
    ) -> Result<ChildChoice, DpError> {
        let slot = self.kernel.layout.slot(a, b).ok_or(DpError::Inconsistent(a, b, j))?;
        if let Some(cond) = cache.map.get(&(slot, j)) {
            return Ok(cond.choices[cond.cdf.draw(rng)]);
        }
        let cond = self.child_conditional(a, b, j)?;
        let choice = cond.choices[cond.cdf.draw(rng)];
        if cache.stored + cond.choices.len() <= cache.limit {
            cache.stored += cond.choices.len();
            cache.map.insert((slot, j), cond);
        }
        Ok(choice)
    }

    /// Ancestral sampling without building the shape: `visit(index,
    /// parent, triangle)` is called for the root and then for each child
    /// breadth-first. Returns the shape's unnormalized log weight.
    pub fn sample_visit<R: Rng>(
        &self,
        rng: &mut R,
        cache: &mut ChildCache,
        mut visit: impl FnMut(usize, Option<usize>, &Triangle),
    ) -> Result<f64, DpError> {
        let root = self.sample_root(rng)?;
        let (a, b, c) = (to_point(root.a), to_point(root.b), to_point(root.c));
        visit(0, None, &Triangle::new(root.ttype, a, b, c)?);
        let mut count = 1;
        let mut log_weight = root.log_local;
        let mut queue: VecDeque<((GridPoint, GridPoint), usize, usize)> =
            root_growth_edges(root.ttype, root.a, root.b, root.c)
                .into_iter()
                .map(|e| (e, 1, 0))
                .collect();
        while let Some(((a, b), j, parent)) = queue.pop_front() {
            let choice = self.sample_child_cached(cache, a, b, j, rng)?;
            let t = choice.production.triangle(to_point(a), to_point(b), to_point(choice.c))?;
            visit(count, Some(parent), &t);
            log_weight += choice.log_local;
            for e in choice.production.growth_edges(a, b, choice.c) {
                queue.push_back((e, j + 1, count));
            }
            count += 1;
        }
        Ok(log_weight)
    }

    /// Ancestral sampling: root from its marginal, then breadth-first
    /// children from their conditionals.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<SampledShape, DpError> {
        self.sample_with_cache(rng, &mut ChildCache::default())
    }

    pub fn sample_with_cache<R: Rng>(&self, rng: &mut R, cache: &mut ChildCache) -> Result<SampledShape, DpError> {
        let mut triangles = Vec::new();
        let mut links = Vec::new();
        let log_weight = self.sample_visit(rng, cache, |i, parent, t| {
            triangles.push(t.clone());
            if let Some(p) = parent {
                links.push((p, i));
            }
        })?;
        Ok(SampledShape {
            polygon: TriangulatedPolygon::new(triangles, links)?,
            log_weight,
            log_posterior: log_weight - self.root.log_total,
        })
    }

    /// `n` samples; sample `i` uses stream `i` of `seed`.
    pub fn sample_many(&self, n: usize, seed: u64) -> Result<Vec<SampledShape>, DpError> {
        (0..n)
            .into_par_iter()
            .map_init(ChildCache::default, |cache, i| {
                self.sample_with_cache(&mut stream_rng(seed, i as u64), cache)
            })
            .collect()
    }
}

/// Cumulative weights for inversion sampling, relative to the largest term.
#[derive(Debug, Clone)]
struct Cdf {
    cumulative: Vec<f64>,
}

impl Cdf {
    fn new(log_weights: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let max = log_weights.clone().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return None;
        }
        let mut total = 0.0;
        let cumulative = log_weights
            .map(|l| {
                total += (l - max).exp();
                total
            })
            .collect();
        Some(Cdf { cumulative })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[derive(Debug, Clone)]
struct Conditional {
    cdf: Cdf,
    choices: Vec<ChildChoice>,
}

/// Memo of child conditionals keyed by edge slot and depth. Caching never
/// changes which outcome a given uniform variate selects.
#[derive(Debug, Clone)]
pub struct ChildCache {
    map: std::collections::HashMap<(usize, usize), Conditional>,
    stored: usize,
    limit: usize,
}

impl ChildCache {
    /// A cache holding at most `limit` outcomes in total.
    pub fn with_limit(limit: usize) -> Self {
        ChildCache {
            map: Default::default(),
            stored: 0,
            limit,
        }
    }
}

impl Default for ChildCache {
    fn default() -> Self {
        Self::with_limit(10_000_000)
    }
}

/// Root marginal for precomputed tables.
pub fn root_marginal(
    tables: &DPTables,
    table: &EdgeScoreTable,
    params: &GrammarParams,
    lambda: f64,
) -> Result<RootMarginal, DpError> {
    let sampler = PosteriorSampler::from_tables(table.clone(), params, lambda, tables.clone())?;
    Ok(sampler.root)
}

/// Full pipeline: `n_samples` exact posterior samples for an image.
pub fn sample_posterior(
    n_samples: usize,
    grid: Grid,
    params: &GrammarParams,
    image: &GrayImage,
    cfg: &PosteriorConfig,
    seed: u64,
) -> Result<Vec<SampledShape>, DpError> {
    PosteriorSampler::from_image(image, grid, params, cfg)?.sample_many(n_samples, seed)
}
