//! Boundary-gradient likelihood: per-edge line integrals of the gradient
//! component normal to the edge, and their per-triangle sums.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{boundary_edges, Point, Triangle};
use crate::grid::{grid_point, EdgeLayout};
use crate::image::GradientField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("gradient field contains NaN near pixel ({0:.2}, {1:.2})")]
    NanGradient(f64, f64),
    #[error("edge {0} -> {1} is not in the edge table")]
    MissingEdge(Point, Point),
    #[error("invalid likelihood configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodConfig {
    /// Boundary-evidence gain.
    pub lambda: f64,
    /// Gaussian pre-smoothing in pixels.
    pub smooth_sigma: f64,
    /// Quadrature step along edges in pixels.
    pub sample_spacing: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            lambda: 15.0,
            smooth_sigma: 1.0,
            sample_spacing: 1.0,
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LikelihoodError::Config(format!("lambda = {}", self.lambda)));
        }
        if !(self.smooth_sigma >= 0.0 && self.smooth_sigma.is_finite()) {
            return Err(LikelihoodError::Config(format!(
                "smooth_sigma = {}",
                self.smooth_sigma
            )));
        }
        if !(self.sample_spacing > 0.0 && self.sample_spacing.is_finite()) {
            return Err(LikelihoodError::Config(format!(
                "sample_spacing = {}",
                self.sample_spacing
            )));
        }
        Ok(())
    }
}

/// Line integral of `|grad I x t|` along the segment `a -> b` (pixel
/// coordinates), by the midpoint rule with steps of at most `spacing`.
pub fn edge_integral(
    a: Point,
    b: Point,
    grad: &GradientField,
    spacing: f64,
) -> Result<f64, LikelihoodError> {
    let d = b.sub(a);
    let len = d.norm();
    if len == 0.0 {
        return Ok(0.0);
    }
    let (tx, ty) = (d.x / len, d.y / len);
    let steps = (len / spacing).ceil().max(1.0) as usize;
    let h = len / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let s = (i as f64 + 0.5) / steps as f64;
        let (px, py) = (a.x + s * d.x, a.y + s * d.y);
        let (gx, gy) = grad.interpolate(px, py);
        let v = gx * ty - gy * tx;
        if v.is_nan() {
            return Err(LikelihoodError::NanGradient(px, py));
        }
        total += v.abs();
    }
    Ok(total * h)
}

/// Edge integrals for every admissible grid edge, in the layout's slot
/// order. Both orientations of a pair hold the same value.
#[derive(Debug, Clone)]
pub struct EdgeScoreTable {
    layout: EdgeLayout,
    values: Vec<f64>,
}

impl EdgeScoreTable {
    pub fn layout(&self) -> &EdgeLayout {
        &self.layout
    }

    /// Per-slot values; unused slots hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_values(layout: EdgeLayout, values: Vec<f64>) -> Self {
        EdgeScoreTable { layout, values }
    }

    /// Number of unordered pairs stored.
    pub fn len(&self) -> usize {
        self.layout.edges().count() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integral along the grid edge `a`-`b` (grid-unit points).
    pub fn lookup(&self, a: Point, b: Point) -> Option<f64> {
        let slot = self.layout.slot(grid_point(a)?, grid_point(b)?)?;
        Some(self.values[slot])
    }

    /// Table for a flat image: every integral is zero.
    pub fn zeros(layout: EdgeLayout) -> Self {
        let values = (0..layout.n_slots())
            .map(|s| if layout.is_valid(s) { 0.0 } else { f64::NAN })
            .collect();
        EdgeScoreTable { layout, values }
    }
}

/// Computes `edge_integral` once per unordered admissible pair, mapping grid
/// points to pixels with the grid's image placement.
pub fn precompute_edge_table(
    layout: &EdgeLayout,
    grad: &GradientField,
    cfg: &LikelihoodConfig,
) -> Result<EdgeScoreTable, LikelihoodError> {
    let grid = layout.grid();
    let to_px = |p: (i32, i32)| {
        grid.to_pixel(
            Point::new(p.0 as f64, p.1 as f64),
            grad.width,
            grad.height,
        )
    };
    let mut values: Vec<f64> = (0..layout.n_slots())
        .into_par_iter()
        .map(|s| {
            let (a, b) = layout.endpoints(s);
            if !grid.contains(b) || (b.1, b.0) < (a.1, a.0) {
                return Ok(f64::NAN);
            }
            edge_integral(to_px(a), to_px(b), grad, cfg.sample_spacing)
        })
        .collect::<Result<_, _>>()?;
    for s in 0..layout.n_slots() {
        let (a, b) = layout.endpoints(s);
        if grid.contains(b) && (b.1, b.0) < (a.1, a.0) {
            let rev = layout.slot(b, a).expect("offsets are symmetric");
            values[s] = values[rev];
        }
    }
    Ok(EdgeScoreTable {
        layout: layout.clone(),
        values,
    })
}

/// `log pi_i(x0, x1, x2, I)`: `lambda` times the integrals over the
/// triangle's solid edges.
pub fn triangle_log_likelihood(
    t: &Triangle,
    table: &EdgeScoreTable,
    cfg: &LikelihoodConfig,
) -> Result<f64, LikelihoodError> {
    let mut sum = 0.0;
    for (a, b) in boundary_edges(t) {
        sum += table
            .lookup(a, b)
            .ok_or(LikelihoodError::MissingEdge(a, b))?;
    }
    Ok(cfg.lambda * sum)
}
